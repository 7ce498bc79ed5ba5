//! Replays the three bidding policies over a synthetic log and prints their
//! mean bid as a function of the time since the user's last click.
//!
//! The attribution-aware bidder shades its bid toward 0 right after a click
//! (the previous click still holds the attribution) while the last-click
//! bidder bids highest there.

use attrisim::attribution::fit_lambda;
use attrisim::bidding::{bid_profile, replay, BidderKind, BidderSpec};
use attrisim::conversion::{hash_features, train, SparseExample, TrainOptions};
use attrisim::data::{
    build_timelines, extract_attribution_samples, generate_synthetic_log, SyntheticWorldConfig,
};
use attrisim::labeling::{build_training_set, AttributionScheme};

const BITS: u8 = 14;

fn main() -> attrisim::Result<()> {
    let config = SyntheticWorldConfig {
        n_users: 3000,
        rng_seed: 5,
        ..Default::default()
    };
    let records = generate_synthetic_log(&config);
    let timelines = build_timelines(&records);

    let samples = extract_attribution_samples(&records, &timelines).plain_samples();
    let attribution_model = fit_lambda(&samples, 1e-9, 200)?;
    println!("fitted lambda {:.3e} /s", attribution_model.lambda);

    let all_indices: Vec<usize> = (0..records.len()).collect();
    let bucket_width = 3600.0;
    let horizon = 86_400.0;

    let mut profiles = Vec::new();
    for (kind, scheme) in [
        (BidderKind::Lcb, AttributionScheme::LastClick),
        (BidderKind::Fcb, AttributionScheme::FirstClick),
        (BidderKind::Ab, AttributionScheme::AllClicks),
    ] {
        let labeled = build_training_set(&records, &timelines, &scheme)?;
        let examples: Vec<SparseExample> = labeled
            .iter()
            .map(|e| {
                Ok(SparseExample {
                    x: hash_features(&records[e.record].features, BITS)?,
                    target: e.weight,
                })
            })
            .collect::<attrisim::Result<_>>()?;
        let conversion_model = train(&examples, BITS, &TrainOptions::default())?;
        let spec = BidderSpec {
            kind,
            conversion_model,
            attribution_model: Some(attribution_model.clone()),
            multiplier_a: 1.0,
            multiplier_b: 1.0,
        };
        let traces = replay(&spec, &records, &all_indices, &timelines)?;
        profiles.push((kind.name(), bid_profile(&traces, bucket_width, horizon)));
    }

    println!("mean bid per hour since last click (first 12h):");
    println!("{:>6} {:>8} {:>8} {:>8}", "hour", "LCB", "FCB", "AB");
    for b in 0..12 {
        let mid = (b as f64 + 0.5) * bucket_width;
        print!("{:>6}", b);
        for (_, profile) in &profiles {
            match profile.iter().find(|&&(m, _)| (m - mid).abs() < 1.0) {
                Some(&(_, mean)) => print!(" {mean:>8.4}"),
                None => print!(" {:>8}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
