//! Fits the exponential-decay attribution model on a synthetic log and
//! compares the estimate against the generator's ground truth.

use attrisim::attribution::{daily_stability, fit_lambda};
use attrisim::data::{
    build_timelines, extract_attribution_samples, generate_synthetic_log, SyntheticWorldConfig,
};

fn main() -> attrisim::Result<()> {
    let config = SyntheticWorldConfig {
        n_users: 4000,
        competitor_click_rate: 1e-5,
        rng_seed: 11,
        ..Default::default()
    };
    let records = generate_synthetic_log(&config);
    let timelines = build_timelines(&records);
    let extraction = extract_attribution_samples(&records, &timelines);
    println!(
        "extracted {} (delta, attributed) samples ({} skipped for non-positive delta)",
        extraction.samples.len(),
        extraction.skipped_non_positive
    );

    let samples = extraction.plain_samples();
    let model = fit_lambda(&samples, 1e-9, 200)?;
    println!("ground truth lambda: {:.3e} /s", config.competitor_click_rate);
    println!("fitted lambda:       {:.3e} /s (converged = {})", model.lambda, model.converged);
    println!(
        "attribution half-life: {:.0} s (~{:.1} days)",
        std::f64::consts::LN_2 / model.lambda,
        std::f64::consts::LN_2 / model.lambda / 86_400.0
    );

    let stability = daily_stability(&extraction.samples, 1e-9, 200)?;
    println!("per-day fits ({} days):", stability.per_day.len());
    for day in &stability.per_day {
        println!(
            "  day {:>2}: lambda {:.3e} ({} samples, deviation {:.1}%)",
            day.day,
            day.lambda,
            day.n_samples,
            100.0 * day.relative_deviation
        );
    }
    Ok(())
}
