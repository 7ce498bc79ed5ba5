//! The utility metric family: empirical utility, Expected Utility under a
//! Gamma perturbation of the observed costs, and its attribution-aware
//! extension with last-click or model-based attribution functions.

mod bootstrap;
mod gamma;

pub use bootstrap::{bootstrap_ci, stable_sum, uplift_significance};
pub use gamma::{ln_gamma, lower_regularized};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionModel;
use crate::bidding::BidTrace;
use crate::data::{time_since_last_click, ImpressionRecord, TimelineKey, UserTimeline};
use crate::error::{Error, Result};
use crate::labeling::{build_training_set, AttributionScheme};

/// Gamma cost perturbation strength; `Infinite` means replay at the
/// observed costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostPerturbation {
    Finite(f64),
    Infinite,
}

impl CostPerturbation {
    pub fn label(&self) -> String {
        match self {
            CostPerturbation::Finite(b) => format!("{b}"),
            CostPerturbation::Infinite => "inf".to_string(),
        }
    }
}

impl Serialize for CostPerturbation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CostPerturbation::Finite(b) => s.serialize_f64(*b),
            CostPerturbation::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for CostPerturbation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(b) if b > 0.0 && b.is_finite() => Ok(CostPerturbation::Finite(b)),
            Repr::Num(b) => Err(serde::de::Error::custom(format!("beta must be positive and finite, got {b}"))),
            Repr::Str(s) if s == "inf" => Ok(CostPerturbation::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("unknown beta `{s}`"))),
        }
    }
}

/// Which attribution function weighs display values in the metric.
#[derive(Debug, Clone)]
pub enum AttributionFunction {
    /// 1 for the attributed conversion's last click, 0 otherwise.
    LastClick,
    /// Un-normalized attribution-model weights.
    Model(AttributionModel),
    /// Model weights normalized per conversion.
    ModelNormalized(AttributionModel),
}

impl AttributionFunction {
    /// Metric naming: U_A (normalized model), U_A* (raw model), U_LC.
    pub fn label(&self) -> &'static str {
        match self {
            AttributionFunction::LastClick => "U_LC",
            AttributionFunction::Model(_) => "U_A*",
            AttributionFunction::ModelNormalized(_) => "U_A",
        }
    }
}

/// Per-record attribution weights over the whole record slice.
///
/// Unclicked records and clicks of unattributed conversions get 0. The
/// model weights are the labeling module's attribution-model split, which
/// keeps the metric consistent with the training labels.
pub fn attribution_weights(
    function: &AttributionFunction,
    records: &[ImpressionRecord],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
) -> Result<Vec<f64>> {
    let scheme = match function {
        AttributionFunction::LastClick => AttributionScheme::LastClick,
        AttributionFunction::Model(m) => AttributionScheme::AttributionModelWeights {
            model: m.clone(),
            normalized: false,
        },
        AttributionFunction::ModelNormalized(m) => AttributionScheme::AttributionModelWeights {
            model: m.clone(),
            normalized: true,
        },
    };
    let mut weights = vec![0.0; records.len()];
    for example in build_training_set(records, timelines, &scheme)? {
        weights[example.record] = example.weight;
    }
    Ok(weights)
}

/// Value of a record's action: the conversion value when present, the CPA
/// otherwise.
pub fn record_value(record: &ImpressionRecord) -> f64 {
    record.conversion_value.unwrap_or(record.cpo)
}

/// One record's payoff under the empirical (unperturbed) replay:
/// `(a*v - c) * 1[bid > c]`, strict inequality so ties lose.
pub fn empirical_contribution(a: f64, v: f64, cost: f64, bid: f64) -> f64 {
    if bid > cost {
        a * v - cost
    } else {
        0.0
    }
}

/// One record's Expected Utility contribution under a Gamma(beta*c + 1,
/// beta) cost perturbation, in closed form:
/// `a*v*P(alpha, beta*T) - (alpha/beta)*P(alpha + 1, beta*T)` with T the
/// bid and P the regularized lower incomplete gamma function.
pub fn expected_contribution(a: f64, v: f64, cost: f64, bid: f64, beta: f64) -> f64 {
    if bid <= 0.0 {
        return 0.0;
    }
    let alpha = beta * cost + 1.0;
    let x = beta * bid;
    a * v * lower_regularized(alpha, x) - (alpha / beta) * lower_regularized(alpha + 1.0, x)
}

/// Per-record utility contributions for aligned records, bids and
/// attribution weights.
pub fn utility_contributions(
    records: &[ImpressionRecord],
    indices: &[usize],
    bids: &[f64],
    weights: &[f64],
    perturbation: CostPerturbation,
) -> Result<Vec<f64>> {
    if let CostPerturbation::Finite(_) = perturbation {
        let bad = indices.iter().filter(|&&i| records[i].cost <= 0.0).count();
        if bad > 0 {
            return Err(Error::NonPositiveCosts { n: bad });
        }
    }
    Ok(indices
        .iter()
        .zip(bids)
        .map(|(&i, &bid)| {
            let rec = &records[i];
            let a = weights[i];
            let v = record_value(rec);
            match perturbation {
                CostPerturbation::Infinite => empirical_contribution(a, v, rec.cost, bid),
                CostPerturbation::Finite(beta) => expected_contribution(a, v, rec.cost, bid, beta),
            }
        })
        .collect())
}

/// Empirical utility: sum of won-auction payoffs at the observed costs.
pub fn empirical_utility(
    records: &[ImpressionRecord],
    indices: &[usize],
    bids: &[f64],
    weights: &[f64],
) -> f64 {
    let contributions = utility_contributions(records, indices, bids, weights, CostPerturbation::Infinite)
        .expect("infinite beta never fails");
    stable_sum(&contributions)
}

/// Expected utility (or its attribution-aware extension, depending on the
/// weights) summed over the records.
pub fn expected_utility(
    records: &[ImpressionRecord],
    indices: &[usize],
    bids: &[f64],
    weights: &[f64],
    perturbation: CostPerturbation,
) -> Result<f64> {
    Ok(stable_sum(&utility_contributions(
        records,
        indices,
        bids,
        weights,
        perturbation,
    )?))
}

/// One cell of the evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct UtilityReport {
    pub value: f64,
    pub n_auctions: usize,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

/// Bootstrap settings of a metric run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_resamples: usize,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            n_resamples: 100,
            quantile: 0.05,
            seed: 1,
        }
    }
}

/// One row of the suite output.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteRow {
    pub bidder: String,
    pub metric: String,
    pub beta: String,
    #[serde(flatten)]
    pub report: UtilityReport,
}

/// Scores every bidder trace under every (attribution function, beta)
/// variant. Traces are expected to be calibrated to a common total bid.
pub fn utility_suite(
    records: &[ImpressionRecord],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
    traces_by_bidder: &[(String, Vec<BidTrace>)],
    variants: &[(AttributionFunction, CostPerturbation)],
    bootstrap: &BootstrapOptions,
) -> Result<Vec<SuiteRow>> {
    // Weights per attribution function are shared across bidders.
    let mut rows = Vec::new();
    for (function, perturbation) in variants {
        let weights = attribution_weights(function, records, timelines)?;
        for (bidder, traces) in traces_by_bidder {
            let indices: Vec<usize> = traces.iter().map(|t| t.record).collect();
            let bids: Vec<f64> = traces.iter().map(|t| t.bid).collect();
            let contributions =
                utility_contributions(records, &indices, &bids, &weights, *perturbation)?;
            let value = stable_sum(&contributions);
            let (ci_low, ci_high) = bootstrap_ci(
                &contributions,
                bootstrap.n_resamples,
                bootstrap.quantile,
                bootstrap.seed,
            )?;
            let wins = indices
                .iter()
                .zip(&bids)
                .filter(|(&i, &bid)| bid > records[i].cost)
                .count();
            rows.push(SuiteRow {
                bidder: bidder.clone(),
                metric: function.label().to_string(),
                beta: perturbation.label(),
                report: UtilityReport {
                    value,
                    n_auctions: indices.len(),
                    win_rate: wins as f64 / indices.len().max(1) as f64,
                    ci_low,
                    ci_high,
                    seed: bootstrap.seed,
                },
            });
        }
    }
    Ok(rows)
}

/// A bucketed rate curve: (bucket midpoint, rate, observations).
pub type RateCurve = Vec<(f64, f64, usize)>;

/// The attribution-rate curves of the attribution study.
#[derive(Debug, Clone)]
pub struct AttributionRateCurves {
    /// Mean attribution among conversions per conversion-click gap bucket.
    pub conversion_attribution: RateCurve,
    /// Positive-label rate per time-since-last-click bucket under
    /// last-click labeling of clicked displays.
    pub last_click_positive: RateCurve,
    /// Same under first-click labeling.
    pub first_click_positive: RateCurve,
}

fn bucketize(observations: impl Iterator<Item = (f64, bool)>, bucket_width: f64) -> RateCurve {
    let mut buckets: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (delta, positive) in observations {
        let b = (delta / bucket_width) as u64;
        let e = buckets.entry(b).or_insert((0, 0));
        e.0 += 1;
        if positive {
            e.1 += 1;
        }
    }
    buckets
        .into_iter()
        .map(|(b, (n, k))| ((b as f64 + 0.5) * bucket_width, k as f64 / n as f64, n))
        .collect()
}

/// Computes the conversion-attribution curve and the per-display
/// positive-label rate curves.
pub fn attribution_rate_curves(
    records: &[ImpressionRecord],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
    bucket_width: f64,
) -> Result<AttributionRateCurves> {
    let extraction = crate::data::extract_attribution_samples(records, timelines);
    let conversion_attribution = bucketize(
        extraction
            .samples
            .iter()
            .map(|s| (s.sample.delta, s.sample.attributed)),
        bucket_width,
    );

    let mut lc = vec![false; records.len()];
    for e in build_training_set(records, timelines, &AttributionScheme::LastClick)? {
        lc[e.record] = e.label;
    }
    let mut fc = vec![false; records.len()];
    for e in build_training_set(records, timelines, &AttributionScheme::FirstClick)? {
        fc[e.record] = e.label;
    }

    // Per clicked display, keyed by its own time since last click.
    let mut lc_obs = Vec::new();
    let mut fc_obs = Vec::new();
    for timeline in timelines.values() {
        for &i in &timeline.events {
            let rec = &records[i];
            if !rec.click {
                continue;
            }
            if let Some(d) = time_since_last_click(timeline, rec.timestamp) {
                lc_obs.push((d as f64, lc[i]));
                fc_obs.push((d as f64, fc[i]));
            }
        }
    }
    Ok(AttributionRateCurves {
        conversion_attribution,
        last_click_positive: bucketize(lc_obs.into_iter(), bucket_width),
        first_click_positive: bucketize(fc_obs.into_iter(), bucket_width),
    })
}

/// Writes a rate curve as two-column (plus count) CSV.
pub fn write_curve(path: impl AsRef<Path>, curve: &RateCurve) -> Result<()> {
    let mut out = String::from("bucket_mid,rate,n\n");
    for &(mid, rate, n) in curve {
        let _ = writeln!(out, "{mid},{rate},{n}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes suite rows as a delimited table.
pub fn write_suite_table(path: impl AsRef<Path>, rows: &[SuiteRow]) -> Result<()> {
    let mut out = String::from("bidder\tmetric\tbeta\tvalue\tci_low\tci_high\twin_rate\tn\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            r.bidder, r.metric, r.beta, r.report.value, r.report.ci_low, r.report.ci_high, r.report.win_rate, r.report.n_auctions
        );
    }
    fs::write(path, out)?;
    Ok(())
}
