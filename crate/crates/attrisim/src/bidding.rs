//! Bidding policies: the last-click and first-click expected-value bidders,
//! the attribution-aware bidder and the offline multiplier transform.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::attribution::{marginal_contribution, AttributionModel};
use crate::conversion::{hash_features, BidComponent, LinearConversionModel};
use crate::data::{time_since_last_click, ImpressionRecord, TimelineKey, UserTimeline};
use crate::error::Result;

/// Everything a bidder sees at auction time.
#[derive(Debug, Clone, Copy)]
pub struct BidContext<'a> {
    pub record: &'a ImpressionRecord,
    /// Time since the platform's last click strictly before this auction.
    pub delta_c: Option<f64>,
    /// Advertiser payment per attributed conversion.
    pub cpa: f64,
}

impl<'a> BidContext<'a> {
    /// Builds the context for a record from its timeline, applying the
    /// strict-precedence tie rule for the time since last click.
    pub fn from_timeline(record: &'a ImpressionRecord, timeline: &UserTimeline) -> Self {
        BidContext {
            record,
            delta_c: time_since_last_click(timeline, record.timestamp).map(|d| d as f64),
            cpa: record.cpo,
        }
    }
}

/// Which policy a bidder runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BidderKind {
    /// Last-click expected-value bidder.
    Lcb,
    /// First-click expected-value bidder.
    Fcb,
    /// Attribution-aware bidder.
    Ab,
    /// Offline evaluation of the multiplier transform over a reference bid.
    MultiplierPolicy,
}

impl BidderKind {
    pub fn name(self) -> &'static str {
        match self {
            BidderKind::Lcb => "LCB",
            BidderKind::Fcb => "FCB",
            BidderKind::Ab => "AB",
            BidderKind::MultiplierPolicy => "MULT",
        }
    }
}

/// A policy plus the models it needs.
pub struct BidderSpec {
    pub kind: BidderKind,
    /// Conversion model trained under this policy's labeling scheme.
    pub conversion_model: LinearConversionModel,
    /// Required for AB and MultiplierPolicy.
    pub attribution_model: Option<AttributionModel>,
    /// Multiplier-policy budget factor, > 0.
    pub multiplier_a: f64,
    /// Multiplier-policy decay strength in [0, 1].
    pub multiplier_b: f64,
}

/// Last-click bidder: CPA times the last-click conversion probability.
pub fn bid_lcb(ctx: &BidContext, model: &LinearConversionModel) -> Result<f64> {
    let x = hash_features(&ctx.record.features, model.bits)?;
    Ok(ctx.cpa * model.predict(&x)?)
}

/// First-click bidder: same form, first-click-labeled model.
pub fn bid_fcb(ctx: &BidContext, model: &LinearConversionModel) -> Result<f64> {
    bid_lcb(ctx, model)
}

/// Attribution bidder: CPA times the all-clicks conversion probability
/// times the marginal attribution contribution of this opportunity. With
/// no prior click the contribution factor is 1 and the bidder acts as the
/// baseline expected-value bidder.
pub fn bid_ab(
    ctx: &BidContext,
    conversion_model: &LinearConversionModel,
    attribution_model: &AttributionModel,
) -> Result<f64> {
    let x = hash_features(&ctx.record.features, conversion_model.bits)?;
    let p = conversion_model.predict(&x)?;
    Ok(ctx.cpa * p * marginal_contribution(attribution_model, ctx.delta_c)?)
}

/// Multiplier transform over a reference bid:
/// `reference * A * (1 - B * exp(-lambda * delta_c))`. With no prior click
/// the decay term is 0 and the factor is A.
pub fn apply_multiplier_policy(
    reference_bid: f64,
    attribution_model: &AttributionModel,
    delta_c: Option<f64>,
    a: f64,
    b: f64,
) -> Result<f64> {
    let decay = match delta_c {
        None => 0.0,
        Some(d) => crate::attribution::attribution_probability(attribution_model, d)?,
    };
    Ok(reference_bid * a * (1.0 - b * decay))
}

/// Computes a bidder's bid for one context.
pub fn bid(spec: &BidderSpec, ctx: &BidContext) -> Result<f64> {
    match spec.kind {
        BidderKind::Lcb => bid_lcb(ctx, &spec.conversion_model),
        BidderKind::Fcb => bid_fcb(ctx, &spec.conversion_model),
        BidderKind::Ab => bid_ab(
            ctx,
            &spec.conversion_model,
            spec.attribution_model.as_ref().expect("AB needs an attribution model"),
        ),
        BidderKind::MultiplierPolicy => {
            let reference = bid_lcb(ctx, &spec.conversion_model)?;
            apply_multiplier_policy(
                reference,
                spec.attribution_model
                    .as_ref()
                    .expect("multiplier policy needs an attribution model"),
                ctx.delta_c,
                spec.multiplier_a,
                spec.multiplier_b,
            )
        }
    }
}

/// One replayed auction: the bid plus what the metrics need.
#[derive(Debug, Clone)]
pub struct BidTrace {
    pub record: usize,
    pub delta_c: Option<f64>,
    pub prediction: f64,
    pub bid: f64,
}

/// Replays a bidder over records, producing one trace per record.
pub fn replay(
    spec: &BidderSpec,
    records: &[ImpressionRecord],
    record_indices: &[usize],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
) -> Result<Vec<BidTrace>> {
    let mut traces = Vec::with_capacity(record_indices.len());
    for &i in record_indices {
        let rec = &records[i];
        let key = (rec.user_id.clone(), rec.campaign_id.clone());
        let timeline = &timelines[&key];
        let ctx = BidContext::from_timeline(rec, timeline);
        let x = hash_features(&rec.features, spec.conversion_model.bits)?;
        traces.push(BidTrace {
            record: i,
            delta_c: ctx.delta_c,
            prediction: spec.conversion_model.predict(&x)?,
            bid: bid(spec, &ctx)?,
        });
    }
    Ok(traces)
}

/// Decomposes a bidder's bids into calibration components, so the spend
/// calibration can solve for the probability multiplier.
pub fn calibration_components(
    spec: &BidderSpec,
    records: &[ImpressionRecord],
    record_indices: &[usize],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
) -> Result<Vec<BidComponent>> {
    let mut out = Vec::with_capacity(record_indices.len());
    for &i in record_indices {
        let rec = &records[i];
        let key = (rec.user_id.clone(), rec.campaign_id.clone());
        let ctx = BidContext::from_timeline(rec, &timelines[&key]);
        let x = hash_features(&rec.features, spec.conversion_model.bits)?;
        let raw = spec.conversion_model.raw_probability(&x)?;
        let factor = match spec.kind {
            BidderKind::Lcb | BidderKind::Fcb => 1.0,
            BidderKind::Ab => marginal_contribution(
                spec.attribution_model.as_ref().expect("AB needs an attribution model"),
                ctx.delta_c,
            )?,
            BidderKind::MultiplierPolicy => {
                let model = spec
                    .attribution_model
                    .as_ref()
                    .expect("multiplier policy needs an attribution model");
                let decay = match ctx.delta_c {
                    None => 0.0,
                    Some(d) => crate::attribution::attribution_probability(model, d)?,
                };
                spec.multiplier_a * (1.0 - spec.multiplier_b * decay)
            }
        };
        out.push(BidComponent {
            scale: ctx.cpa * factor,
            raw_prob: raw,
        });
    }
    Ok(out)
}

/// Mean bid per time-since-last-click bucket over the first `horizon`
/// seconds post-click. Buckets with no observations are omitted.
pub fn bid_profile(traces: &[BidTrace], bucket_width: f64, horizon: f64) -> Vec<(f64, f64)> {
    let n_buckets = (horizon / bucket_width).ceil() as usize;
    let mut sums = vec![(0.0f64, 0usize); n_buckets];
    for t in traces {
        if let Some(d) = t.delta_c {
            if d < horizon {
                let b = (d / bucket_width) as usize;
                sums[b].0 += t.bid;
                sums[b].1 += 1;
            }
        }
    }
    sums.iter()
        .enumerate()
        .filter(|&(_, &(_, n))| n > 0)
        .map(|(b, &(s, n))| ((b as f64 + 0.5) * bucket_width, s / n as f64))
        .collect()
}

/// Exports bid traces as delimited text for the metrics module and plots.
pub fn write_traces(path: impl AsRef<Path>, kind: BidderKind, traces: &[BidTrace]) -> Result<()> {
    let mut out = String::from("record\tbidder\tdelta_c\tprediction\tbid\n");
    for t in traces {
        let _ = write!(out, "{}\t{}\t", t.record, kind.name());
        if let Some(d) = t.delta_c {
            let _ = write!(out, "{d}");
        }
        let _ = writeln!(out, "\t{}\t{}", t.prediction, t.bid);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_model(p: f64, bits: u8) -> LinearConversionModel {
        LinearConversionModel {
            weights: vec![0.0; 1usize << bits],
            bias: (p / (1.0 - p)).ln(),
            bits,
            l2: 0.0,
            calibration: 1.0,
            converged: true,
        }
    }

    fn bare_record(cpo: f64) -> ImpressionRecord {
        ImpressionRecord {
            timestamp: 0,
            user_id: "u".into(),
            campaign_id: "c".into(),
            cost: 1.0,
            cpo,
            features: vec![],
            click: false,
            click_pos: None,
            conversion: false,
            conversion_timestamp: None,
            conversion_value: None,
            attribution: false,
        }
    }

    #[test]
    fn lcb_fcb_direct_product() {
        let rec = bare_record(10.0);
        let ctx = BidContext { record: &rec, delta_c: None, cpa: 10.0 };
        let m02 = constant_model(0.02, 10);
        assert_relative_eq!(bid_lcb(&ctx, &m02).unwrap(), 0.2, max_relative = 1e-9);
        let m01 = constant_model(0.01, 10);
        assert_relative_eq!(bid_fcb(&ctx, &m01).unwrap(), 0.1, max_relative = 1e-9);
    }

    #[test]
    fn ab_examples() {
        let rec = bare_record(10.0);
        let conv = constant_model(0.02, 10);
        let attr = AttributionModel::with_lambda(6.25e-6);

        // Right after a click the marginal contribution is 0.
        let at_click = BidContext { record: &rec, delta_c: Some(0.0), cpa: 10.0 };
        assert_eq!(bid_ab(&at_click, &conv, &attr).unwrap(), 0.0);

        // No prior click: acts as the baseline EVB bidder.
        let fresh = BidContext { record: &rec, delta_c: None, cpa: 10.0 };
        assert_relative_eq!(bid_ab(&fresh, &conv, &attr).unwrap(), 0.2, max_relative = 1e-9);

        // One half-life after a click: half the EVB bid.
        let half = BidContext { record: &rec, delta_c: Some(110_904.0), cpa: 10.0 };
        assert_relative_eq!(bid_ab(&half, &conv, &attr).unwrap(), 0.1, max_relative = 1e-4);
    }

    #[test]
    fn ab_monotone_in_delta() {
        let rec = bare_record(10.0);
        let conv = constant_model(0.05, 10);
        let attr = AttributionModel::with_lambda(1e-5);
        let mut prev = -1.0;
        for d in [0.0, 10.0, 1e3, 1e4, 1e5, 1e6] {
            let ctx = BidContext { record: &rec, delta_c: Some(d), cpa: 10.0 };
            let b = bid_ab(&ctx, &conv, &attr).unwrap();
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn ab_with_zero_lambda() {
        let rec = bare_record(10.0);
        let conv = constant_model(0.02, 10);
        let attr = AttributionModel::with_lambda(0.0);
        for d in [0.0, 1e3, 1e7] {
            let ctx = BidContext { record: &rec, delta_c: Some(d), cpa: 10.0 };
            assert_eq!(bid_ab(&ctx, &conv, &attr).unwrap(), 0.0);
        }
        let fresh = BidContext { record: &rec, delta_c: None, cpa: 10.0 };
        assert_relative_eq!(bid_ab(&fresh, &conv, &attr).unwrap(), 0.2, max_relative = 1e-9);
    }

    #[test]
    fn multiplier_policy_examples() {
        let attr = AttributionModel::with_lambda(6.25e-6);
        // B = 0: pure scaling by A.
        assert_relative_eq!(
            apply_multiplier_policy(1.5, &attr, Some(500.0), 2.0, 0.0).unwrap(),
            3.0,
            max_relative = 1e-12
        );
        // A = 1, B = 1 at delta 0: bid vanishes.
        assert_eq!(
            apply_multiplier_policy(1.0, &attr, Some(0.0), 1.0, 1.0).unwrap(),
            0.0
        );
        // A = 2, B = 1 one half-life out: factor 2 * 0.5 = 1.
        assert_relative_eq!(
            apply_multiplier_policy(1.0, &attr, Some(110_904.0), 2.0, 1.0).unwrap(),
            1.0,
            max_relative = 1e-4
        );
    }

    #[test]
    fn multiplier_with_a1_b1_equals_marginal_contribution() {
        let attr = AttributionModel::with_lambda(3e-6);
        for d in [None, Some(0.0), Some(1e4), Some(5e5)] {
            let via_policy = apply_multiplier_policy(1.0, &attr, d, 1.0, 1.0).unwrap();
            let direct = marginal_contribution(&attr, d).unwrap();
            assert_relative_eq!(via_policy, direct, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn bids_scale_with_cpa() {
        let rec = bare_record(10.0);
        let conv = constant_model(0.03, 10);
        let attr = AttributionModel::with_lambda(1e-5);
        let ctx1 = BidContext { record: &rec, delta_c: Some(5e4), cpa: 10.0 };
        let ctx3 = BidContext { record: &rec, delta_c: Some(5e4), cpa: 30.0 };
        let b1 = bid_ab(&ctx1, &conv, &attr).unwrap();
        let b3 = bid_ab(&ctx3, &conv, &attr).unwrap();
        assert_relative_eq!(b3, 3.0 * b1, max_relative = 1e-12);
    }

    #[test]
    fn profile_buckets_mean_bids() {
        let traces = vec![
            BidTrace { record: 0, delta_c: Some(10.0), prediction: 0.1, bid: 1.0 },
            BidTrace { record: 1, delta_c: Some(20.0), prediction: 0.1, bid: 3.0 },
            BidTrace { record: 2, delta_c: Some(150.0), prediction: 0.1, bid: 5.0 },
            BidTrace { record: 3, delta_c: None, prediction: 0.1, bid: 9.0 },
        ];
        let profile = bid_profile(&traces, 100.0, 1000.0);
        assert_eq!(profile.len(), 2);
        assert_eq!(profile[0], (50.0, 2.0));
        assert_eq!(profile[1], (150.0, 5.0));
    }

    #[test]
    fn ab_profile_monotone_with_constant_prediction() {
        // With the prediction held constant the AB profile inherits the
        // monotonicity of the marginal contribution.
        let conv = constant_model(0.05, 10);
        let attr = AttributionModel::with_lambda(1e-5);
        let rec = bare_record(10.0);
        let traces: Vec<BidTrace> = (0..50)
            .map(|k| {
                let d = 1000.0 * k as f64;
                let ctx = BidContext { record: &rec, delta_c: Some(d), cpa: 10.0 };
                BidTrace {
                    record: k,
                    delta_c: Some(d),
                    prediction: 0.05,
                    bid: bid_ab(&ctx, &conv, &attr).unwrap(),
                }
            })
            .collect();
        let profile = bid_profile(&traces, 5000.0, 50_000.0);
        for w in profile.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }
}
