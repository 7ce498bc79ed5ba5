//! Generates a synthetic impression log with known ground truth and writes
//! it as TSV.
//!
//! The competitor click rate is the ground-truth decay rate of the
//! attribution survival curve, so logs produced here double as oracles for
//! the attribution fit.

use attrisim::data::{generate_synthetic_log, write_log, SyntheticWorldConfig};

fn main() -> attrisim::Result<()> {
    let config = SyntheticWorldConfig {
        n_users: 500,
        rng_seed: 7,
        ..Default::default()
    };
    let records = generate_synthetic_log(&config);

    let clicks = records.iter().filter(|r| r.click).count();
    let conversions = records.iter().filter(|r| r.conversion).count();
    let attributed = records.iter().filter(|r| r.attribution).count();
    println!("generated {} impressions over {} days", records.len(), config.horizon / 86_400);
    println!("  clicks:      {clicks}");
    println!("  conversions: {conversions}");
    println!("  attributed:  {attributed}");

    let out = std::env::temp_dir().join("attrisim_synthetic_log.tsv");
    write_log(&out, &records)?;
    println!("wrote {}", out.display());
    Ok(())
}
