//! Exponential-decay attribution model: survival probability, negative
//! log-likelihood and maximum-likelihood fitting of the decay rate.
//!
//! The NLLH is convex in lambda and its gradient is monotone, so the fit is
//! a safeguarded bisection on the gradient: deterministic and
//! tolerance-certified, no general optimizer needed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AttributionSample, GroupedSample};
use crate::error::{Error, Result};

/// Default search bracket for the decay rate, per second.
pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1.0;

/// A fitted exponential-decay attribution model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionModel {
    /// Decay rate per second.
    pub lambda: f64,
    pub n_samples: usize,
    pub final_nllh: f64,
    pub converged: bool,
    /// Set when the fit hit a bracket boundary instead of a stationary
    /// point, e.g. "boundary: all attributed".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
    /// Tag for the survival-model family; only "exponential" is built.
    #[serde(default = "default_family")]
    pub model_family: String,
    /// Deterministic fit timestamp (the newest event in the fitted log).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_timestamp: Option<u64>,
}

fn default_family() -> String {
    "exponential".to_string()
}

impl AttributionModel {
    /// A model with a known rate and no fit diagnostics, for tests and
    /// synthetic-world oracles.
    pub fn with_lambda(lambda: f64) -> Self {
        AttributionModel {
            lambda,
            n_samples: 0,
            final_nllh: f64::NAN,
            converged: true,
            boundary: None,
            model_family: default_family(),
            fit_timestamp: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// P(A=1 | S=1, delta) = exp(-lambda * delta).
pub fn attribution_probability(model: &AttributionModel, delta: f64) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::NegativeDelta(delta));
    }
    Ok((-model.lambda * delta).exp())
}

/// Marginal attribution contribution of a new click at gap `delta_c` from
/// the previous one: `1 - exp(-lambda * delta_c)`. With no previous click
/// the second term vanishes and the contribution is 1.
pub fn marginal_contribution(model: &AttributionModel, delta_c: Option<f64>) -> Result<f64> {
    match delta_c {
        None => Ok(1.0),
        Some(d) if d < 0.0 => Err(Error::NegativeDelta(d)),
        Some(d) => Ok(-(-model.lambda * d).exp_m1()),
    }
}

/// Numerically stable log(1 - exp(-x)) for x > 0.
fn log1mexp(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x < std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// Negative log-likelihood of the samples at rate `lambda`.
///
/// Returns +inf (not an error) when `lambda` is 0 and any sample is
/// unattributed.
pub fn nllh(lambda: f64, samples: &[AttributionSample]) -> f64 {
    let mut total = 0.0;
    for s in samples {
        if s.attributed {
            total += lambda * s.delta;
        } else {
            total -= log1mexp(lambda * s.delta);
        }
    }
    total
}

/// d/dlambda of [`nllh`]. Requires lambda > 0.
pub fn nllh_gradient(lambda: f64, samples: &[AttributionSample]) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let mut total = 0.0;
    for s in samples {
        if s.attributed {
            total += s.delta;
        } else {
            let x = lambda * s.delta;
            // delta * e^{-x} / (1 - e^{-x}) = delta / (e^x - 1)
            total -= s.delta / x.exp_m1();
        }
    }
    Ok(total)
}

/// Maximum-likelihood fit of the decay rate by bisection on the gradient.
pub fn fit_lambda(samples: &[AttributionSample], tolerance: f64, max_iter: usize) -> Result<AttributionModel> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let any_attributed = samples.iter().any(|s| s.attributed);
    let any_unattributed = samples.iter().any(|s| !s.attributed);

    if !any_unattributed {
        // NLLH = lambda * sum(delta): minimized at the lower bracket edge.
        return Ok(boundary_model(LAMBDA_MIN, samples, "boundary: all attributed"));
    }
    if !any_attributed {
        // NLLH strictly decreasing in lambda: upper bracket edge.
        return Ok(boundary_model(LAMBDA_MAX, samples, "boundary: none attributed"));
    }

    let mut lo = LAMBDA_MIN;
    let mut hi = LAMBDA_MAX;
    let mut converged = false;
    let mut mid = (lo * hi).sqrt();
    for _ in 0..max_iter {
        mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let g = nllh_gradient(mid, samples)?;
        if g.abs() * mid <= tolerance || (hi - lo) < mid * 1e-9 {
            converged = true;
            break;
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(AttributionModel {
        lambda: mid,
        n_samples: samples.len(),
        final_nllh: nllh(mid, samples),
        converged,
        boundary: None,
        model_family: default_family(),
        fit_timestamp: None,
    })
}

fn boundary_model(lambda: f64, samples: &[AttributionSample], flag: &str) -> AttributionModel {
    AttributionModel {
        lambda,
        n_samples: samples.len(),
        final_nllh: nllh(lambda, samples),
        converged: false,
        boundary: Some(flag.to_string()),
        model_family: default_family(),
        fit_timestamp: None,
    }
}

/// Result of a batch per-campaign fit.
#[derive(Debug, Clone)]
pub struct PerAdvertiserFit {
    pub fits: BTreeMap<String, AttributionModel>,
    /// Campaigns skipped for having fewer than `min_samples` samples.
    pub omitted: usize,
}

/// Independent fit per campaign with at least `min_samples` samples.
pub fn fit_per_advertiser(
    samples: &[GroupedSample],
    min_samples: usize,
    tolerance: f64,
    max_iter: usize,
) -> Result<PerAdvertiserFit> {
    let mut groups: BTreeMap<&str, Vec<AttributionSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(&s.campaign_id).or_default().push(s.sample);
    }
    let mut fits = BTreeMap::new();
    let mut omitted = 0;
    for (campaign, group) in groups {
        if group.len() < min_samples {
            omitted += 1;
            continue;
        }
        fits.insert(campaign.to_string(), fit_lambda(&group, tolerance, max_iter)?);
    }
    Ok(PerAdvertiserFit { fits, omitted })
}

/// Per-day fit plus its relative deviation from the global estimate.
#[derive(Debug, Clone, Serialize)]
pub struct DailyFit {
    pub day: u64,
    pub lambda: f64,
    pub n_samples: usize,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DailyStability {
    pub global_lambda: f64,
    pub per_day: Vec<DailyFit>,
    pub max_relative_deviation: f64,
}

/// Fits lambda per day and reports each day's relative deviation from the
/// global fit. Needs at least two days of samples.
pub fn daily_stability(
    samples: &[GroupedSample],
    tolerance: f64,
    max_iter: usize,
) -> Result<DailyStability> {
    let mut days: BTreeMap<u64, Vec<AttributionSample>> = BTreeMap::new();
    for s in samples {
        days.entry(s.day).or_default().push(s.sample);
    }
    if days.len() < 2 {
        return Err(Error::TooFewDays(days.len()));
    }
    let all: Vec<AttributionSample> = samples.iter().map(|s| s.sample).collect();
    let global = fit_lambda(&all, tolerance, max_iter)?;

    let mut per_day = Vec::new();
    let mut max_dev: f64 = 0.0;
    for (day, group) in days {
        let n = group.len();
        let fit = fit_lambda(&group, tolerance, max_iter)?;
        let dev = (fit.lambda - global.lambda).abs() / global.lambda;
        max_dev = max_dev.max(dev);
        per_day.push(DailyFit {
            day,
            lambda: fit.lambda,
            n_samples: n,
            relative_deviation: dev,
        });
    }
    Ok(DailyStability {
        global_lambda: global.lambda,
        per_day,
        max_relative_deviation: max_dev,
    })
}
