//! Trains a hashed logistic conversion model on last-click labels and
//! round-trips it through its JSON persistence format.

use attrisim::conversion::{hash_features, train, LinearConversionModel, SparseExample, TrainOptions};
use attrisim::data::{build_timelines, generate_synthetic_log, SyntheticWorldConfig};
use attrisim::labeling::{build_training_set, AttributionScheme};

fn main() -> attrisim::Result<()> {
    let config = SyntheticWorldConfig {
        n_users: 2000,
        rng_seed: 3,
        ..Default::default()
    };
    let records = generate_synthetic_log(&config);
    let timelines = build_timelines(&records);
    let labeled = build_training_set(&records, &timelines, &AttributionScheme::LastClick)?;
    println!(
        "training set: {} clicked records, {} positive",
        labeled.len(),
        labeled.iter().filter(|e| e.label).count()
    );

    let bits = 14;
    let examples: Vec<SparseExample> = labeled
        .iter()
        .map(|e| {
            Ok(SparseExample {
                x: hash_features(&records[e.record].features, bits)?,
                target: e.weight,
            })
        })
        .collect::<attrisim::Result<_>>()?;

    let options = TrainOptions { l2: 1.0, max_iter: 200, tolerance: 1e-7 };
    let model = train(&examples, bits, &options)?;
    println!("trained {}-bit model, converged = {}", bits, model.converged);

    // Predicted conversion probability per user segment.
    for segment in ["seg_low", "seg_mid", "seg_high"] {
        let x = hash_features(&[(0, segment.to_string()), (1, "pub0".to_string())], bits)?;
        println!("  p(convert | {segment}, pub0) = {:.4}", model.predict(&x)?);
    }

    let json = model.to_json()?;
    let reloaded = LinearConversionModel::from_json(&json)?;
    let probe = hash_features(&[(0, "seg_mid".to_string())], bits)?;
    assert_eq!(
        model.predict(&probe)?.to_bits(),
        reloaded.predict(&probe)?.to_bits()
    );
    println!("persistence round trip is bit-exact ({} bytes of JSON)", json.len());
    Ok(())
}
