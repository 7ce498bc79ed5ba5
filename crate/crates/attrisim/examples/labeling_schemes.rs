//! Shows how the five click-labeling schemes split the credit of one
//! conversion across a three-click path.

use attrisim::attribution::AttributionModel;
use attrisim::labeling::{label_conversion_clicks, AttributionScheme};

fn main() -> attrisim::Result<()> {
    // Three clicks, each one attribution half-life after the previous.
    let half_life = 100_000u64;
    let clicks = [0, half_life, 2 * half_life];
    let model = AttributionModel::with_lambda(std::f64::consts::LN_2 / half_life as f64);

    let schemes: Vec<(&str, AttributionScheme)> = vec![
        ("last click", AttributionScheme::LastClick),
        ("first click", AttributionScheme::FirstClick),
        ("uniform", AttributionScheme::Uniform),
        ("all clicks", AttributionScheme::AllClicks),
        (
            "model weights",
            AttributionScheme::AttributionModelWeights { model: model.clone(), normalized: false },
        ),
        (
            "model weights (normalized)",
            AttributionScheme::AttributionModelWeights { model, normalized: true },
        ),
    ];

    println!("click times: {clicks:?} (gaps of one attribution half-life)");
    for (name, scheme) in &schemes {
        let weights = label_conversion_clicks(&clicks, scheme)?;
        let formatted: Vec<String> = weights.iter().map(|w| format!("{w:.3}")).collect();
        println!("  {name:<27} [{}]", formatted.join(", "));
    }
    Ok(())
}
