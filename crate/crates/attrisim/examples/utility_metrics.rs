//! Scores one bidder's replayed bids under the utility metric family:
//! empirical utility at the observed costs and Expected Utility under a
//! Gamma perturbation of the costs, each combined with last-click or
//! attribution-model display weights.

use attrisim::attribution::fit_lambda;
use attrisim::bidding::{replay, BidderKind, BidderSpec};
use attrisim::conversion::{hash_features, train, SparseExample, TrainOptions};
use attrisim::data::{
    build_timelines, extract_attribution_samples, generate_synthetic_log, SyntheticWorldConfig,
};
use attrisim::labeling::{build_training_set, AttributionScheme};
use attrisim::metrics::{
    utility_suite, AttributionFunction, BootstrapOptions, CostPerturbation,
};

const BITS: u8 = 14;

fn main() -> attrisim::Result<()> {
    let config = SyntheticWorldConfig {
        n_users: 2000,
        cost_median: 0.5,
        rng_seed: 9,
        ..Default::default()
    };
    let records = generate_synthetic_log(&config);
    let timelines = build_timelines(&records);
    let samples = extract_attribution_samples(&records, &timelines).plain_samples();
    let attribution_model = fit_lambda(&samples, 1e-9, 200)?;

    let labeled = build_training_set(&records, &timelines, &AttributionScheme::LastClick)?;
    let examples: Vec<SparseExample> = labeled
        .iter()
        .map(|e| {
            Ok(SparseExample {
                x: hash_features(&records[e.record].features, BITS)?,
                target: e.weight,
            })
        })
        .collect::<attrisim::Result<_>>()?;
    let spec = BidderSpec {
        kind: BidderKind::Lcb,
        conversion_model: train(&examples, BITS, &TrainOptions::default())?,
        attribution_model: None,
        multiplier_a: 1.0,
        multiplier_b: 1.0,
    };
    let all_indices: Vec<usize> = (0..records.len()).collect();
    let traces = replay(&spec, &records, &all_indices, &timelines)?;
    let traces_by_bidder = vec![("LCB".to_string(), traces)];

    let variants = vec![
        (AttributionFunction::LastClick, CostPerturbation::Infinite),
        (AttributionFunction::LastClick, CostPerturbation::Finite(1000.0)),
        (
            AttributionFunction::ModelNormalized(attribution_model.clone()),
            CostPerturbation::Finite(1000.0),
        ),
        (
            AttributionFunction::Model(attribution_model),
            CostPerturbation::Finite(1000.0),
        ),
    ];
    let rows = utility_suite(
        &records,
        &timelines,
        &traces_by_bidder,
        &variants,
        &BootstrapOptions::default(),
    )?;

    println!("{:>6} {:>6} {:>12} {:>24} {:>9}", "metric", "beta", "value", "95% band", "win rate");
    for row in &rows {
        println!(
            "{:>6} {:>6} {:>12.2} [{:>10.2}, {:>10.2}] {:>9.3}",
            row.metric, row.beta, row.report.value, row.report.ci_low, row.report.ci_high, row.report.win_rate
        );
    }
    Ok(())
}
