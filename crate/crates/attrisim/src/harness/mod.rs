//! Pipeline orchestration: synth / fit-attribution / evaluate, with
//! file-per-stage artifacts and deterministic outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{
    daily_stability, fit_lambda, fit_per_advertiser, AttributionModel, DailyStability,
    PerAdvertiserFit,
};
use crate::bidding::{calibration_components, replay, BidderKind, BidderSpec, BidTrace};
use crate::conversion::{calibrate, hash_features, train, SparseExample, TrainOptions};
use crate::data::{
    build_timelines, extract_attribution_samples, generate_synthetic_log, load_log, sliding_split,
    write_log, ImpressionRecord, LogSchema, SyntheticWorldConfig, TimelineKey, UserTimeline,
};
use crate::error::{Error, Result};
use crate::labeling::{build_training_set, AttributionScheme};
use crate::metrics::{
    attribution_rate_curves, bootstrap_ci, stable_sum, uplift_significance, write_curve,
    write_suite_table, AttributionFunction, BootstrapOptions, CostPerturbation, SuiteRow,
    UtilityReport,
};

/// Full configuration of an experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Path to an input log; when absent, `synthetic` is generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticWorldConfig>,
    #[serde(default)]
    pub schema: LogSchema,
    #[serde(default = "default_train_days")]
    pub train_days: usize,
    #[serde(default = "default_test_days")]
    pub test_days: usize,
    #[serde(default = "default_bidders")]
    pub bidders: Vec<BidderKind>,
    #[serde(default = "default_hash_bits")]
    pub hash_bits: u8,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_train_max_iter")]
    pub train_max_iter: usize,
    #[serde(default = "default_train_tolerance")]
    pub train_tolerance: f64,
    #[serde(default = "default_betas")]
    pub betas: Vec<CostPerturbation>,
    /// Metric variants by name: U_A, U_A*, U_LC.
    #[serde(default = "default_metrics")]
    pub attribution_functions: Vec<String>,
    #[serde(default)]
    pub bootstrap: BootstrapOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_fit_tolerance")]
    pub fit_tolerance: f64,
    #[serde(default = "default_fit_max_iter")]
    pub fit_max_iter: usize,
    #[serde(default = "default_min_samples")]
    pub min_samples_per_advertiser: usize,
    /// Fig-5-style bid profile bucketing, seconds.
    #[serde(default = "default_profile_bucket")]
    pub profile_bucket_width: f64,
    #[serde(default = "default_profile_horizon")]
    pub profile_horizon: f64,
    /// Attribution-rate curve bucketing, seconds.
    #[serde(default = "default_curve_bucket")]
    pub curve_bucket_width: f64,
    #[serde(default = "default_multiplier_a")]
    pub multiplier_a: f64,
    #[serde(default = "default_multiplier_b")]
    pub multiplier_b: f64,
}

fn default_train_days() -> usize { 21 }
fn default_test_days() -> usize { 7 }
fn default_bidders() -> Vec<BidderKind> {
    vec![BidderKind::Lcb, BidderKind::Fcb, BidderKind::Ab]
}
fn default_hash_bits() -> u8 { 18 }
fn default_l2() -> f64 { 1.0 }
fn default_train_max_iter() -> usize { 200 }
fn default_train_tolerance() -> f64 { 1e-6 }
fn default_betas() -> Vec<CostPerturbation> {
    vec![CostPerturbation::Finite(1000.0), CostPerturbation::Infinite]
}
fn default_metrics() -> Vec<String> {
    vec!["U_A".to_string(), "U_A*".to_string(), "U_LC".to_string()]
}
fn default_output_dir() -> PathBuf { PathBuf::from("out") }
fn default_fit_tolerance() -> f64 { 1e-9 }
fn default_fit_max_iter() -> usize { 200 }
fn default_min_samples() -> usize { 100 }
fn default_profile_bucket() -> f64 { 3600.0 }
fn default_profile_horizon() -> f64 { 86_400.0 }
fn default_curve_bucket() -> f64 { 50_000.0 }
fn default_multiplier_a() -> f64 { 1.0 }
fn default_multiplier_b() -> f64 { 1.0 }

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bidders.is_empty() {
            return Err(Error::Config("at least one bidder is required".into()));
        }
        if self.betas.is_empty() || self.attribution_functions.is_empty() {
            return Err(Error::Config("at least one metric variant is required".into()));
        }
        for name in &self.attribution_functions {
            if !["U_A", "U_A*", "U_LC"].contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown metric variant `{name}`")));
            }
        }
        Ok(())
    }

    /// Loads the configured log, generating the synthetic world when no
    /// input path is set.
    pub fn resolve_records(&self) -> Result<Vec<ImpressionRecord>> {
        match (&self.input, &self.synthetic) {
            (Some(path), _) => load_log(path, &self.schema),
            (None, Some(synth)) => Ok(generate_synthetic_log(synth)),
            (None, None) => Err(Error::Config("config needs either `input` or `synthetic`".into())),
        }
    }
}

/// Summary counts printed by the synth command.
#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub records: usize,
    pub clicks: usize,
    pub conversions: usize,
    pub attributions: usize,
    pub path: PathBuf,
}

/// Generates the configured synthetic log and writes it as TSV.
pub fn cmd_synth(config: &ExperimentConfig, out: impl AsRef<Path>) -> Result<SynthSummary> {
    let synth = config
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("synth needs a `synthetic` section".into()))?;
    let records = generate_synthetic_log(synth);
    write_log(&out, &records).map_err(|e| e.in_stage("synth"))?;
    Ok(SynthSummary {
        records: records.len(),
        clicks: records.iter().filter(|r| r.click).count(),
        conversions: records.iter().filter(|r| r.conversion).count(),
        attributions: records.iter().filter(|r| r.attribution).count(),
        path: out.as_ref().to_path_buf(),
    })
}

/// Output of the fit-attribution command.
#[derive(Debug)]
pub struct FitOutput {
    pub model: AttributionModel,
    pub per_advertiser: Option<PerAdvertiserFit>,
    pub daily: Option<DailyStability>,
}

/// Fits the global attribution model from a log, with optional
/// per-advertiser and daily-stability studies.
pub fn cmd_fit_attribution(
    config: &ExperimentConfig,
    per_advertiser: bool,
    daily: bool,
    out_dir: impl AsRef<Path>,
) -> Result<FitOutput> {
    let stage = |e: Error| e.in_stage("fit-attribution");
    let records = config.resolve_records().map_err(stage)?;
    let timelines = build_timelines(&records);
    let extraction = extract_attribution_samples(&records, &timelines);
    if extraction.samples.is_empty() {
        return Err(stage(Error::NoSamples));
    }
    let samples = extraction.plain_samples();
    let mut model = fit_lambda(&samples, config.fit_tolerance, config.fit_max_iter).map_err(stage)?;
    // Deterministic "fitted at": the newest event in the log.
    model.fit_timestamp = records.iter().map(|r| r.timestamp).max();

    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("attribution_model.json"), model.to_json()?)?;

    let per_advertiser = if per_advertiser {
        let fit = fit_per_advertiser(
            &extraction.samples,
            config.min_samples_per_advertiser,
            config.fit_tolerance,
            config.fit_max_iter,
        )
        .map_err(stage)?;
        let mut table = String::from("campaign_id\tlambda\tn_samples\tconverged\n");
        for (campaign, m) in &fit.fits {
            let _ = writeln!(table, "{campaign}\t{}\t{}\t{}", m.lambda, m.n_samples, m.converged);
        }
        fs::write(out_dir.join("lambda_per_advertiser.tsv"), table)?;
        Some(fit)
    } else {
        None
    };

    let daily = if daily {
        let report = daily_stability(&extraction.samples, config.fit_tolerance, config.fit_max_iter)
            .map_err(stage)?;
        let mut table = String::from("day\tlambda\tn_samples\trelative_deviation\n");
        for d in &report.per_day {
            let _ = writeln!(table, "{}\t{}\t{}\t{}", d.day, d.lambda, d.n_samples, d.relative_deviation);
        }
        fs::write(out_dir.join("lambda_daily.tsv"), table)?;
        Some(report)
    } else {
        None
    };

    Ok(FitOutput {
        model,
        per_advertiser,
        daily,
    })
}

fn scheme_for(kind: BidderKind) -> AttributionScheme {
    match kind {
        BidderKind::Lcb | BidderKind::MultiplierPolicy => AttributionScheme::LastClick,
        BidderKind::Fcb => AttributionScheme::FirstClick,
        BidderKind::Ab => AttributionScheme::AllClicks,
    }
}

fn metric_function(name: &str, model: &AttributionModel) -> AttributionFunction {
    match name {
        "U_LC" => AttributionFunction::LastClick,
        "U_A*" => AttributionFunction::Model(model.clone()),
        _ => AttributionFunction::ModelNormalized(model.clone()),
    }
}

/// One candidate-vs-baseline uplift row.
#[derive(Debug, Clone, Serialize)]
pub struct UpliftRow {
    pub candidate: String,
    pub baseline: String,
    pub metric: String,
    pub beta: String,
    pub uplift: f64,
    pub significant: bool,
}

/// Aggregated output of the evaluate command.
#[derive(Debug)]
pub struct EvaluationOutput {
    pub rows: Vec<SuiteRow>,
    pub uplifts: Vec<UpliftRow>,
    pub n_test_days: usize,
}

struct TrainedBidder {
    kind: BidderKind,
    spec: BidderSpec,
}

fn train_bidder(
    kind: BidderKind,
    train_records: &[ImpressionRecord],
    train_timelines: &BTreeMap<TimelineKey, UserTimeline>,
    train_hashed: &[crate::conversion::HashedFeatureVector],
    config: &ExperimentConfig,
    attribution_model: &AttributionModel,
) -> Result<TrainedBidder> {
    let labeled = build_training_set(train_records, train_timelines, &scheme_for(kind))?;
    let mut examples = Vec::with_capacity(labeled.len());
    for ex in &labeled {
        examples.push(SparseExample {
            x: train_hashed[ex.record].clone(),
            target: ex.weight,
        });
    }
    let options = TrainOptions {
        l2: config.l2,
        max_iter: config.train_max_iter,
        tolerance: config.train_tolerance,
    };
    let conversion_model = train(&examples, config.hash_bits, &options)?;
    let needs_attribution = matches!(kind, BidderKind::Ab | BidderKind::MultiplierPolicy);
    Ok(TrainedBidder {
        kind,
        spec: BidderSpec {
            kind,
            conversion_model,
            attribution_model: needs_attribution.then(|| attribution_model.clone()),
            multiplier_a: config.multiplier_a,
            multiplier_b: config.multiplier_b,
        },
    })
}

/// Runs the full evaluation protocol: sliding split, per-pair training and
/// calibration, test-day replay, and metric aggregation across test days.
pub fn cmd_evaluate(config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<EvaluationOutput> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;

    let records = config
        .resolve_records()
        .map_err(|e| e.in_stage("load"))?;
    let pairs = sliding_split(&records, config.train_days, config.test_days)
        .map_err(|e| e.in_stage("split"))?;

    // Global attribution model from the full pre-test history, reused for
    // bidding and for the model-based metric variants.
    let full_timelines = build_timelines(&records);
    let extraction = extract_attribution_samples(&records, &full_timelines);
    if extraction.samples.is_empty() {
        return Err(Error::NoSamples.in_stage("fit-attribution"));
    }
    let samples = extraction.plain_samples();
    let attribution_model = fit_lambda(&samples, config.fit_tolerance, config.fit_max_iter)
        .map_err(|e| e.in_stage("fit-attribution"))?;

    // Per-record metric contributions aggregated across test days, keyed by
    // (bidder, metric, beta).
    let mut contributions: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut wins: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut profile_traces: BTreeMap<String, Vec<BidTrace>> = BTreeMap::new();

    for (split_idx, pair) in pairs.iter().enumerate() {
        let stage = |name: &str, e: Error| e.in_stage(format!("{name} (split {split_idx})"));

        let train_records: Vec<ImpressionRecord> =
            pair.train.iter().map(|&i| records[i].clone()).collect();
        // Replay context: training history plus the test day, so the time
        // since last click sees pre-test clicks.
        let mut context_records = train_records.clone();
        let test_start = context_records.len();
        context_records.extend(pair.test.iter().map(|&i| records[i].clone()));
        let test_indices: Vec<usize> = (test_start..context_records.len()).collect();
        let context_timelines = build_timelines(&context_records);

        let train_timelines = build_timelines(&train_records);
        let train_hashed: Vec<crate::conversion::HashedFeatureVector> = train_records
            .iter()
            .map(|r| hash_features(&r.features, config.hash_bits))
            .collect::<Result<_>>()
            .map_err(|e| stage("train", e))?;
        let mut bidders = Vec::new();
        for &kind in &config.bidders {
            bidders.push(
                train_bidder(
                    kind,
                    &train_records,
                    &train_timelines,
                    &train_hashed,
                    config,
                    &attribution_model,
                )
                .map_err(|e| stage("train", e))?,
            );
        }

        // Calibration reference: the first bidder's uncalibrated total bid
        // on the test day.
        let reference_total = {
            let first = &bidders[0];
            let components =
                calibration_components(&first.spec, &context_records, &test_indices, &context_timelines)
                    .map_err(|e| stage("calibrate", e))?;
            components
                .iter()
                .map(|c| c.scale * c.raw_prob.min(1.0))
                .sum::<f64>()
        };
        for bidder in bidders.iter_mut().skip(1) {
            let components = calibration_components(
                &bidder.spec,
                &context_records,
                &test_indices,
                &context_timelines,
            )
            .map_err(|e| stage("calibrate", e))?;
            bidder.spec.conversion_model =
                calibrate(&bidder.spec.conversion_model, &components, reference_total)
                    .map_err(|e| stage("calibrate", e))?;
        }

        // Replay and score.
        let metric_weights: Vec<(String, Vec<f64>)> = {
            let mut w = Vec::new();
            for name in &config.attribution_functions {
                let function = metric_function(name, &attribution_model);
                w.push((
                    name.clone(),
                    crate::metrics::attribution_weights(&function, &context_records, &context_timelines)
                        .map_err(|e| stage("metrics", e))?,
                ));
            }
            w
        };

        for bidder in &bidders {
            let traces = replay(&bidder.spec, &context_records, &test_indices, &context_timelines)
                .map_err(|e| stage("replay", e))?;
            let bids: Vec<f64> = traces.iter().map(|t| t.bid).collect();

            let win_entry = wins.entry(bidder.kind.name().to_string()).or_insert((0, 0));
            for t in &traces {
                win_entry.1 += 1;
                if t.bid > context_records[t.record].cost {
                    win_entry.0 += 1;
                }
            }

            for (metric_name, weights) in &metric_weights {
                for beta in &config.betas {
                    let contrib = crate::metrics::utility_contributions(
                        &context_records,
                        &test_indices,
                        &bids,
                        weights,
                        *beta,
                    )
                    .map_err(|e| stage("metrics", e))?;
                    contributions
                        .entry((
                            bidder.kind.name().to_string(),
                            metric_name.clone(),
                            beta.label(),
                        ))
                        .or_default()
                        .extend(contrib);
                }
            }
            profile_traces
                .entry(bidder.kind.name().to_string())
                .or_default()
                .extend(traces);
        }
    }

    // Reports: one row per (bidder, metric, beta) with a bootstrap band
    // over the pooled per-record contributions.
    let mut rows = Vec::new();
    for ((bidder, metric, beta), contrib) in &contributions {
        let value = stable_sum(contrib);
        let (ci_low, ci_high) = bootstrap_ci(
            contrib,
            config.bootstrap.n_resamples,
            config.bootstrap.quantile,
            config.bootstrap.seed,
        )
        .map_err(|e| e.in_stage("bootstrap"))?;
        let &(won, total) = &wins[bidder];
        rows.push(SuiteRow {
            bidder: bidder.clone(),
            metric: metric.clone(),
            beta: beta.clone(),
            report: UtilityReport {
                value,
                n_auctions: contrib.len(),
                win_rate: won as f64 / total.max(1) as f64,
                ci_low,
                ci_high,
                seed: config.bootstrap.seed,
            },
        });
    }

    // Pairwise uplift report over every ordered bidder pair.
    let bidder_names: Vec<String> = config.bidders.iter().map(|b| b.name().to_string()).collect();
    let mut uplifts = Vec::new();
    for candidate in &bidder_names {
        for baseline in &bidder_names {
            if candidate == baseline {
                continue;
            }
            for metric in &config.attribution_functions {
                for beta in &config.betas {
                    let key_a = (candidate.clone(), metric.clone(), beta.label());
                    let key_b = (baseline.clone(), metric.clone(), beta.label());
                    let (uplift, significant) = uplift_significance(
                        &contributions[&key_a],
                        &contributions[&key_b],
                        config.bootstrap.n_resamples,
                        config.bootstrap.quantile,
                        config.bootstrap.seed,
                    )
                    .map_err(|e| e.in_stage("bootstrap"))?;
                    uplifts.push(UpliftRow {
                        candidate: candidate.clone(),
                        baseline: baseline.clone(),
                        metric: metric.clone(),
                        beta: beta.label(),
                        uplift,
                        significant,
                    });
                }
            }
        }
    }

    write_suite_table(out_dir.join("report.tsv"), &rows)?;
    let mut uplift_table = String::from("candidate\tbaseline\tmetric\tbeta\tuplift\tsignificant\n");
    for u in &uplifts {
        let _ = writeln!(
            uplift_table,
            "{}\t{}\t{}\t{}\t{:.6}\t{}",
            u.candidate, u.baseline, u.metric, u.beta, u.uplift, u.significant
        );
    }
    fs::write(out_dir.join("uplifts.tsv"), uplift_table)?;

    // Plot data: attribution-rate curves over the whole log, bid profiles
    // over the pooled test-day traces.
    let curves = attribution_rate_curves(&records, &full_timelines, config.curve_bucket_width)
        .map_err(|e| e.in_stage("curves"))?;
    write_curve(out_dir.join("fig2_attribution_given_conversion.csv"), &curves.conversion_attribution)?;
    write_curve(out_dir.join("fig4_last_click_rate.csv"), &curves.last_click_positive)?;
    write_curve(out_dir.join("fig4_first_click_rate.csv"), &curves.first_click_positive)?;
    for (bidder, traces) in &profile_traces {
        let profile =
            crate::bidding::bid_profile(traces, config.profile_bucket_width, config.profile_horizon);
        let mut out = String::from("bucket_mid,mean_bid\n");
        for (mid, mean) in profile {
            let _ = writeln!(out, "{mid},{mean}");
        }
        fs::write(out_dir.join(format!("fig5_bid_profile_{bidder}.csv")), out)?;
    }

    write_manifest(config, out_dir)?;

    Ok(EvaluationOutput {
        rows,
        uplifts,
        n_test_days: pairs.len(),
    })
}

/// Writes a manifest sufficient to reproduce the run: the full resolved
/// config plus a hash of its serialized form.
pub fn write_manifest(config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<()> {
    let serialized = serde_json::to_string_pretty(config)?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in serialized.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": format!("{hash:016x}"),
        "config": serde_json::from_str::<serde_json::Value>(&serialized)?,
    });
    fs::write(
        out_dir.as_ref().join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.synthetic = Some(SyntheticWorldConfig {
            n_users: 400,
            ..Default::default()
        });
        config.hash_bits = 12;
        config.train_max_iter = 60;
        config.output_dir = dir.to_path_buf();
        config
    }

    #[test]
    fn synth_writes_reproducible_log() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let out_a = dir.path().join("a.tsv");
        let out_b = dir.path().join("b.tsv");
        let summary = cmd_synth(&config, &out_a).unwrap();
        cmd_synth(&config, &out_b).unwrap();
        assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
        assert!(summary.clicks > 0);
        assert!(summary.conversions > 0);
        assert!(summary.attributions > 0);
    }

    #[test]
    fn synth_empty_world() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        config.synthetic.as_mut().unwrap().n_users = 0;
        let out = dir.path().join("empty.tsv");
        let summary = cmd_synth(&config, &out).unwrap();
        assert_eq!(summary.records, 0);
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 1); // header only
    }

    #[test]
    fn fit_attribution_recovers_rate() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        config.synthetic.as_mut().unwrap().n_users = 8000;
        let fit = cmd_fit_attribution(&config, true, true, dir.path()).unwrap();
        assert!(
            (fit.model.lambda - 1e-5).abs() / 1e-5 < 0.05,
            "lambda {}",
            fit.model.lambda
        );
        assert!(dir.path().join("attribution_model.json").exists());
        assert!(dir.path().join("lambda_per_advertiser.tsv").exists());
        assert!(dir.path().join("lambda_daily.tsv").exists());
        assert_eq!(fit.per_advertiser.unwrap().fits.len(), 1);
    }

    #[test]
    fn fit_attribution_empty_log_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path());
        config.synthetic.as_mut().unwrap().n_users = 0;
        assert!(cmd_fit_attribution(&config, false, false, dir.path()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut config = ExperimentConfig::default();
        config.bidders.clear();
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::default();
        config.attribution_functions = vec!["bogus".into()];
        assert!(config.validate().is_err());
    }
}
