//! Thin CLI over the pipeline harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use attrisim::harness::{cmd_evaluate, cmd_fit_attribution, cmd_synth, ExperimentConfig};
use attrisim::metrics::CostPerturbation;

#[derive(Parser)]
#[command(name = "attrisim", about = "Attribution-aware bidding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic impression log.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Override the synthetic world's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output log path (default: <output_dir>/synthetic_log.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the attribution decay model from a log.
    FitAttribution {
        #[arg(long)]
        config: PathBuf,
        /// Also fit one model per advertiser.
        #[arg(long)]
        per_advertiser: bool,
        /// Also report per-day fit stability.
        #[arg(long)]
        daily: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full offline evaluation protocol.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Override the bootstrap seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the cost-perturbation betas (number or "inf").
        #[arg(long, value_parser = parse_beta)]
        beta: Vec<CostPerturbation>,
        /// Override one or more metric variants (U_A, U_A*, U_LC).
        #[arg(long)]
        scheme: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_beta(s: &str) -> Result<CostPerturbation, String> {
    if s == "inf" {
        return Ok(CostPerturbation::Infinite);
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 && b.is_finite() => Ok(CostPerturbation::Finite(b)),
        _ => Err(format!("beta must be a positive number or \"inf\", got `{s}`")),
    }
}

fn run() -> attrisim::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config, seed, out } => {
            let mut config = ExperimentConfig::from_file(config)?;
            if let (Some(seed), Some(synth)) = (seed, config.synthetic.as_mut()) {
                synth.rng_seed = seed;
            }
            let out = out.unwrap_or_else(|| config.output_dir.join("synthetic_log.tsv"));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let summary = cmd_synth(&config, &out)?;
            println!(
                "wrote {} records ({} clicks, {} conversions, {} attributed) to {}",
                summary.records,
                summary.clicks,
                summary.conversions,
                summary.attributions,
                summary.path.display()
            );
        }
        Command::FitAttribution {
            config,
            per_advertiser,
            daily,
            out,
        } => {
            let config_data = ExperimentConfig::from_file(config)?;
            let out = out.unwrap_or_else(|| config_data.output_dir.clone());
            let fit = cmd_fit_attribution(&config_data, per_advertiser, daily, &out)?;
            println!(
                "lambda = {:.6e} ({} samples, converged = {})",
                fit.model.lambda, fit.model.n_samples, fit.model.converged
            );
            if let Some(per) = &fit.per_advertiser {
                println!("per-advertiser fits: {} ({} omitted)", per.fits.len(), per.omitted);
            }
            if let Some(daily) = &fit.daily {
                println!(
                    "daily stability: max relative deviation {:.4}",
                    daily.max_relative_deviation
                );
            }
        }
        Command::Evaluate {
            config,
            seed,
            beta,
            scheme,
            out,
        } => {
            let mut config_data = ExperimentConfig::from_file(config)?;
            if let Some(seed) = seed {
                config_data.bootstrap.seed = seed;
            }
            if !beta.is_empty() {
                config_data.betas = beta;
            }
            if !scheme.is_empty() {
                config_data.attribution_functions = scheme;
            }
            let out = out.unwrap_or_else(|| config_data.output_dir.clone());
            let output = cmd_evaluate(&config_data, &out)?;
            println!("evaluated {} test days", output.n_test_days);
            for row in &output.rows {
                println!(
                    "{:>4}  {:>4} beta={:<6} value={:>12.2} [{:.2}, {:.2}] win_rate={:.3}",
                    row.bidder,
                    row.metric,
                    row.beta,
                    row.report.value,
                    row.report.ci_low,
                    row.report.ci_high,
                    row.report.win_rate
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
