//! Per-click training labels and weights under the five attribution
//! schemes: last-click, first-click, uniform, all-clicks and the
//! attribution-model split (raw or normalized).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::attribution::AttributionModel;
use crate::data::{ImpressionRecord, TimelineKey, UserTimeline, ATTRIBUTION_WINDOW};
use crate::error::{Error, Result};

/// How a conversion's credit is split across its clicks.
#[derive(Debug, Clone)]
pub enum AttributionScheme {
    LastClick,
    FirstClick,
    Uniform,
    AllClicks,
    AttributionModelWeights {
        model: AttributionModel,
        normalized: bool,
    },
}

/// One per-click training example; `record` indexes the source record slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub record: usize,
    /// Importance weight in [0, 1].
    pub weight: f64,
    /// True iff weight > 0.
    pub label: bool,
}

/// Splits one conversion's credit over its time-ordered clicks.
///
/// For the attribution-model scheme the raw weight of click j >= 2 is
/// `1 - exp(-lambda * (t_j - t_{j-1}))` and the first click gets 1 (its
/// previous-click gap is infinite); the normalized variant divides by the
/// weight sum so every conversion contributes the same amount.
pub fn label_conversion_clicks(
    click_times: &[u64],
    scheme: &AttributionScheme,
) -> Result<Vec<f64>> {
    if click_times.is_empty() {
        return Err(Error::EmptyClicks);
    }
    if click_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnorderedClicks);
    }
    let k = click_times.len();
    let weights = match scheme {
        AttributionScheme::LastClick => {
            let mut w = vec![0.0; k];
            w[k - 1] = 1.0;
            w
        }
        AttributionScheme::FirstClick => {
            let mut w = vec![0.0; k];
            w[0] = 1.0;
            w
        }
        AttributionScheme::Uniform => vec![1.0 / k as f64; k],
        AttributionScheme::AllClicks => vec![1.0; k],
        AttributionScheme::AttributionModelWeights { model, normalized } => {
            let mut w = Vec::with_capacity(k);
            w.push(1.0);
            for j in 1..k {
                let gap = (click_times[j] - click_times[j - 1]) as f64;
                w.push(-(-model.lambda * gap).exp_m1());
            }
            if *normalized {
                let sum: f64 = w.iter().sum();
                for x in &mut w {
                    *x /= sum;
                }
            }
            w
        }
    };
    Ok(weights)
}

/// Builds a per-click training set under one scheme.
///
/// One example per clicked record: clicks of an attributed conversion get
/// the scheme weight, all other clicks get weight 0 / label false.
/// Unclicked records are excluded (post-click conversion modeling).
pub fn build_training_set(
    records: &[ImpressionRecord],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
    scheme: &AttributionScheme,
) -> Result<Vec<LabeledExample>> {
    build_training_set_with_window(records, timelines, scheme, ATTRIBUTION_WINDOW)
}

pub fn build_training_set_with_window(
    records: &[ImpressionRecord],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
    scheme: &AttributionScheme,
    window: u64,
) -> Result<Vec<LabeledExample>> {
    let mut weights: Vec<Option<f64>> = vec![None; records.len()];
    for timeline in timelines.values() {
        // Clicks of attributed conversions, grouped per conversion.
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for &i in &timeline.events {
            let rec = &records[i];
            if !rec.click || !rec.attribution {
                continue;
            }
            if let Some(conv_ts) = rec.conversion_timestamp {
                if conv_ts >= rec.timestamp && conv_ts - rec.timestamp <= window {
                    groups.entry(conv_ts).or_default().push(i);
                }
            }
        }
        for clicks in groups.values() {
            let times: Vec<u64> = clicks.iter().map(|&i| records[i].timestamp).collect();
            let w = label_conversion_clicks(&times, scheme)?;
            for (&i, &wi) in clicks.iter().zip(&w) {
                weights[i] = Some(wi);
            }
        }
    }

    let mut out = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if !rec.click {
            continue;
        }
        let weight = weights[i].unwrap_or(0.0);
        out.push(LabeledExample {
            record: i,
            weight,
            label: weight > 0.0,
        });
    }
    Ok(out)
}

/// Dumps a training set in the input-log format plus weight and label
/// columns, for external inspection.
pub fn write_training_set(
    path: impl AsRef<Path>,
    records: &[ImpressionRecord],
    examples: &[LabeledExample],
) -> Result<()> {
    let mut out = String::from("timestamp\tuser_id\tcampaign_id\tweight\tlabel\n");
    for ex in examples {
        let rec = &records[ex.record];
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            rec.timestamp,
            rec.user_id,
            rec.campaign_id,
            ex.weight,
            ex.label as u8
        );
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const HALF_LIFE_TIMES: [u64; 3] = [0, 100_000, 200_000];

    fn am_scheme(normalized: bool) -> AttributionScheme {
        AttributionScheme::AttributionModelWeights {
            model: AttributionModel::with_lambda(std::f64::consts::LN_2 / 100_000.0),
            normalized,
        }
    }

    #[test]
    fn fixed_rule_schemes() {
        let t = [10, 20, 30];
        assert_eq!(
            label_conversion_clicks(&t, &AttributionScheme::LastClick).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        assert_eq!(
            label_conversion_clicks(&t, &AttributionScheme::FirstClick).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        let u = label_conversion_clicks(&t, &AttributionScheme::Uniform).unwrap();
        for w in &u {
            assert_relative_eq!(*w, 1.0 / 3.0, max_relative = 1e-15);
        }
        assert_eq!(
            label_conversion_clicks(&t, &AttributionScheme::AllClicks).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn model_weights_half_life_gaps() {
        let raw = label_conversion_clicks(&HALF_LIFE_TIMES, &am_scheme(false)).unwrap();
        assert_relative_eq!(raw[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(raw[1], 0.5, max_relative = 1e-12);
        assert_relative_eq!(raw[2], 0.5, max_relative = 1e-12);

        let norm = label_conversion_clicks(&HALF_LIFE_TIMES, &am_scheme(true)).unwrap();
        assert_relative_eq!(norm[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(norm[1], 0.25, max_relative = 1e-12);
        assert_relative_eq!(norm[2], 0.25, max_relative = 1e-12);
    }

    #[test]
    fn single_click_degenerates_to_full_credit() {
        for scheme in [
            AttributionScheme::LastClick,
            AttributionScheme::FirstClick,
            AttributionScheme::Uniform,
            AttributionScheme::AllClicks,
            am_scheme(false),
            am_scheme(true),
        ] {
            assert_eq!(label_conversion_clicks(&[42], &scheme).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn rejects_empty_and_unordered() {
        assert!(matches!(
            label_conversion_clicks(&[], &AttributionScheme::Uniform),
            Err(Error::EmptyClicks)
        ));
        assert!(matches!(
            label_conversion_clicks(&[30, 10], &AttributionScheme::Uniform),
            Err(Error::UnorderedClicks)
        ));
    }

    #[test]
    fn lambda_limits() {
        // lambda -> inf approaches all-clicks raw weights, lambda -> 0
        // approaches first-click.
        let t = [0, 1000, 2000];
        let hot = label_conversion_clicks(
            &t,
            &AttributionScheme::AttributionModelWeights {
                model: AttributionModel::with_lambda(1e3),
                normalized: false,
            },
        )
        .unwrap();
        for w in &hot {
            assert_relative_eq!(*w, 1.0, max_relative = 1e-12);
        }
        let cold = label_conversion_clicks(
            &t,
            &AttributionScheme::AttributionModelWeights {
                model: AttributionModel::with_lambda(1e-15),
                normalized: false,
            },
        )
        .unwrap();
        assert_eq!(cold[0], 1.0);
        assert!(cold[1] < 1e-10 && cold[2] < 1e-10);
    }

    fn click_rec(ts: u64, user: &str, attributed: Option<u64>) -> ImpressionRecord {
        ImpressionRecord {
            timestamp: ts,
            user_id: user.to_string(),
            campaign_id: "c0".to_string(),
            cost: 1.0,
            cpo: 10.0,
            features: vec![(0, "a".to_string())],
            click: true,
            click_pos: None,
            conversion: attributed.is_some(),
            conversion_timestamp: attributed,
            conversion_value: None,
            attribution: attributed.is_some(),
        }
    }

    #[test]
    fn training_set_labels() {
        let conv = Some(5000u64);
        let records = vec![
            click_rec(100, "u1", conv),
            click_rec(200, "u1", conv),
            click_rec(300, "u1", conv),
            click_rec(50, "u2", None), // clicked, never converted
        ];
        let timelines = crate::data::build_timelines(&records);

        let all = build_training_set(&records, &timelines, &AttributionScheme::AllClicks).unwrap();
        assert_eq!(all.len(), 4);
        let positives: Vec<_> = all.iter().filter(|e| e.label).collect();
        assert_eq!(positives.len(), 3);
        assert!(positives.iter().all(|e| e.weight == 1.0));

        let lc = build_training_set(&records, &timelines, &AttributionScheme::LastClick).unwrap();
        let pos: Vec<_> = lc.iter().filter(|e| e.label).collect();
        assert_eq!(pos.len(), 1);
        assert_eq!(records[pos[0].record].timestamp, 300);
        // Earlier clicks of the conversion and the never-converting click
        // are negatives.
        assert_eq!(lc.iter().filter(|e| !e.label).count(), 3);
    }

    #[test]
    fn training_set_excludes_unclicked_and_out_of_window() {
        let mut unclicked = click_rec(100, "u1", Some(5000));
        unclicked.click = false;
        let far = click_rec(10, "u2", Some(10 + ATTRIBUTION_WINDOW + 1));
        let records = vec![unclicked, far];
        let timelines = crate::data::build_timelines(&records);
        let ex = build_training_set(&records, &timelines, &AttributionScheme::AllClicks).unwrap();
        // Unclicked record excluded entirely; out-of-window click present
        // but negative.
        assert_eq!(ex.len(), 1);
        assert!(!ex[0].label);
    }

    #[test]
    fn weight_sums_per_conversion() {
        let t = [0, 50_000, 400_000, 900_000];
        for scheme in [
            AttributionScheme::LastClick,
            AttributionScheme::FirstClick,
            AttributionScheme::Uniform,
            am_scheme(true),
        ] {
            let w = label_conversion_clicks(&t, &scheme).unwrap();
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        }
        let raw: f64 = label_conversion_clicks(&t, &am_scheme(false))
            .unwrap()
            .iter()
            .sum();
        assert!(raw > 0.0 && raw <= t.len() as f64);
    }
}
