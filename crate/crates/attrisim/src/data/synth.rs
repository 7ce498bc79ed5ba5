//! Synthetic log generation with known ground-truth parameters.
//!
//! Competitor clicks form a Poisson process with rate
//! `competitor_click_rate`, so the probability that a conversion at gap
//! `delta` from the platform's last click is still attributed is exactly
//! `exp(-competitor_click_rate * delta)`. That makes the generator an exact
//! oracle for the attribution fit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ImpressionRecord, ATTRIBUTION_WINDOW};

/// Ground-truth parameters of a synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticWorldConfig {
    pub n_users: usize,
    /// Simulation horizon in seconds.
    pub horizon: u64,
    /// Per-user impression Poisson rate, per second.
    pub impression_rate: f64,
    pub click_prob: f64,
    pub conversion_prob_given_click: f64,
    /// Rate of the exponential click-to-conversion delay, per second.
    pub conversion_delay_rate: f64,
    /// Competitor click Poisson rate per second: the ground-truth lambda of
    /// the attribution survival curve.
    pub competitor_click_rate: f64,
    /// Multiplicative effect of a user-segment token on the conversion
    /// probability. Keys are the segment vocabulary.
    #[serde(default)]
    pub base_conversion_rate_per_feature: BTreeMap<String, f64>,
    pub rng_seed: u64,
    #[serde(default = "default_campaign")]
    pub campaign_id: String,
    /// Advertiser cost-per-order payment stamped on every record.
    #[serde(default = "default_cpo")]
    pub cpo: f64,
    /// Median of the log-normal cost distribution.
    #[serde(default = "default_cost_median")]
    pub cost_median: f64,
    /// Log-space sigma of the cost distribution.
    #[serde(default = "default_cost_sigma")]
    pub cost_sigma: f64,
}

fn default_campaign() -> String {
    "c0".to_string()
}

fn default_cpo() -> f64 {
    10.0
}

fn default_cost_median() -> f64 {
    0.1
}

fn default_cost_sigma() -> f64 {
    0.5
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        let mut segments = BTreeMap::new();
        segments.insert("seg_low".to_string(), 0.5);
        segments.insert("seg_mid".to_string(), 1.0);
        segments.insert("seg_high".to_string(), 2.0);
        SyntheticWorldConfig {
            n_users: 1000,
            horizon: 30 * 86_400,
            impression_rate: 1.0 / 21_600.0, // one impression every 6h on average
            click_prob: 0.15,
            conversion_prob_given_click: 0.3,
            conversion_delay_rate: 1.0 / 200_000.0,
            competitor_click_rate: 1e-5,
            base_conversion_rate_per_feature: segments,
            rng_seed: 42,
            campaign_id: default_campaign(),
            cpo: default_cpo(),
            cost_median: default_cost_median(),
            cost_sigma: default_cost_sigma(),
        }
    }
}

/// Categorical bucket of the time since the user's last click, seconds.
fn recency_bucket(gap: u64) -> &'static str {
    match gap {
        0..=3_599 => "lt1h",
        3_600..=21_599 => "1h6h",
        21_600..=86_399 => "6h1d",
        86_400..=259_199 => "1d3d",
        _ => "gt3d",
    }
}

struct Draft {
    timestamp: u64,
    click: bool,
    publisher: u8,
    cost: f64,
    // Filled in by conversion association.
    click_pos: Option<u32>,
    conversion_timestamp: Option<u64>,
    attribution: bool,
}

/// Generates a synthetic impression log, deterministic for a fixed config.
pub fn generate_synthetic_log(config: &SyntheticWorldConfig) -> Vec<ImpressionRecord> {
    let segments: Vec<(String, f64)> = if config.base_conversion_rate_per_feature.is_empty() {
        vec![("seg_mid".to_string(), 1.0)]
    } else {
        config
            .base_conversion_rate_per_feature
            .iter()
            .map(|(k, &v)| (k.clone(), v))
            .collect()
    };
    let cost_dist = LogNormal::new(config.cost_median.max(f64::MIN_POSITIVE).ln(), config.cost_sigma)
        .expect("valid log-normal parameters");

    let mut records = Vec::new();
    for user in 0..config.n_users {
        // Per-user stream so the output is independent of user count changes
        // elsewhere and trivially parallelizable.
        let mut rng = ChaCha20Rng::seed_from_u64(
            config
                .rng_seed
                .wrapping_add((user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let user_id = format!("u{user:07}");
        let segment = segments[rng.gen_range(0..segments.len())].clone();
        let p_conv = (config.conversion_prob_given_click * segment.1).clamp(0.0, 1.0);

        // Impression Poisson process over the horizon.
        let mut drafts: Vec<Draft> = Vec::new();
        if config.impression_rate > 0.0 {
            let inter = Exp::new(config.impression_rate).expect("positive rate");
            let mut t = inter.sample(&mut rng);
            while (t as u64) < config.horizon {
                let click = rng.gen_bool(config.click_prob);
                drafts.push(Draft {
                    timestamp: t as u64,
                    click,
                    publisher: rng.gen_range(0..4),
                    cost: cost_dist.sample(&mut rng),
                    click_pos: None,
                    conversion_timestamp: None,
                    attribution: false,
                });
                t += inter.sample(&mut rng);
            }
        }

        // Conversions triggered by clicks, after an exponential delay.
        let mut conversions: Vec<u64> = Vec::new();
        if config.conversion_delay_rate > 0.0 {
            let delay_dist = Exp::new(config.conversion_delay_rate).expect("positive rate");
            for d in &drafts {
                if d.click && rng.gen_bool(p_conv) {
                    let delay = delay_dist.sample(&mut rng).max(1.0);
                    conversions.push(d.timestamp + delay as u64);
                }
            }
        }
        conversions.sort_unstable();
        conversions.dedup();

        let click_times: Vec<u64> = drafts
            .iter()
            .filter(|d| d.click)
            .map(|d| d.timestamp)
            .collect();

        for conv_ts in conversions {
            // Attribution survives iff no competitor click lands between the
            // platform's last click and the conversion.
            let n = click_times.partition_point(|&c| c < conv_ts);
            if n == 0 {
                continue;
            }
            let delta = (conv_ts - click_times[n - 1]) as f64;
            let attributed = rng.gen_bool((-config.competitor_click_rate * delta).exp());

            // Associate every not-yet-associated record in the window before
            // the conversion; clicks get a position among the window clicks.
            let mut pos = 0u32;
            for d in drafts.iter_mut() {
                if d.timestamp >= conv_ts || d.conversion_timestamp.is_some() {
                    continue;
                }
                if conv_ts - d.timestamp > ATTRIBUTION_WINDOW {
                    continue;
                }
                d.conversion_timestamp = Some(conv_ts);
                d.attribution = attributed;
                if d.click {
                    d.click_pos = Some(pos);
                    pos += 1;
                }
            }
        }

        for d in drafts {
            let conversion = d.conversion_timestamp.is_some();
            // Recency of the user's last click strictly before this auction,
            // so the conversion models can condition on it.
            let n = click_times.partition_point(|&c| c < d.timestamp);
            let recency = if n == 0 {
                "none"
            } else {
                recency_bucket(d.timestamp - click_times[n - 1])
            };
            records.push(ImpressionRecord {
                timestamp: d.timestamp,
                user_id: user_id.clone(),
                campaign_id: config.campaign_id.clone(),
                cost: d.cost,
                cpo: config.cpo,
                features: vec![
                    (0, segment.0.clone()),
                    (1, format!("pub{}", d.publisher)),
                    (2, format!("recency_{recency}")),
                ],
                click: d.click,
                click_pos: if d.click { d.click_pos } else { None },
                conversion,
                conversion_timestamp: d.conversion_timestamp,
                conversion_value: if conversion { Some(config.cpo) } else { None },
                attribution: d.attribution,
            });
        }
    }
    records.sort_by_key(|r| r.timestamp);
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_timelines, extract_attribution_samples};

    #[test]
    fn deterministic_for_fixed_seed() {
        let config = SyntheticWorldConfig {
            n_users: 50,
            ..Default::default()
        };
        let a = generate_synthetic_log(&config);
        let b = generate_synthetic_log(&config);
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn zero_competitor_rate_attributes_everything() {
        let config = SyntheticWorldConfig {
            n_users: 200,
            competitor_click_rate: 0.0,
            ..Default::default()
        };
        let records = generate_synthetic_log(&config);
        let timelines = build_timelines(&records);
        let ex = extract_attribution_samples(&records, &timelines);
        assert!(!ex.samples.is_empty());
        assert!(ex.samples.iter().all(|s| s.sample.attributed));
    }

    #[test]
    fn zero_click_prob_yields_no_samples() {
        let config = SyntheticWorldConfig {
            n_users: 200,
            click_prob: 0.0,
            ..Default::default()
        };
        let records = generate_synthetic_log(&config);
        assert!(records.iter().all(|r| !r.click && !r.conversion));
        let timelines = build_timelines(&records);
        let ex = extract_attribution_samples(&records, &timelines);
        assert!(ex.samples.is_empty());
    }

    #[test]
    fn attribution_rate_matches_survival_curve() {
        // Empirical attribution rate per delta bucket vs the closed-form
        // survival probability, within a 3-sigma binomial band.
        let config = SyntheticWorldConfig {
            n_users: 20_000,
            competitor_click_rate: 1e-5,
            ..Default::default()
        };
        let records = generate_synthetic_log(&config);
        let timelines = build_timelines(&records);
        let ex = extract_attribution_samples(&records, &timelines);
        assert!(ex.samples.len() > 5_000, "n = {}", ex.samples.len());

        let bucket = 50_000.0;
        let mut counts: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
        for s in &ex.samples {
            let b = (s.sample.delta / bucket) as u64;
            let e = counts.entry(b).or_insert((0, 0));
            e.0 += 1;
            if s.sample.attributed {
                e.1 += 1;
            }
        }
        for (&b, &(n, k)) in &counts {
            if n < 200 {
                continue;
            }
            let mid = (b as f64 + 0.5) * bucket;
            let p = (-1e-5 * mid).exp();
            let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
            let rate = k as f64 / n as f64;
            // Allow slack for within-bucket curvature on top of 3 sigma.
            let edge_spread =
                ((-1e-5 * (b as f64) * bucket).exp() - (-1e-5 * (b as f64 + 1.0) * bucket).exp()) / 2.0;
            assert!(
                (rate - p).abs() <= 3.0 * sigma + edge_spread,
                "bucket {b}: rate {rate:.4} vs p {p:.4} (n={n})"
            );
        }
    }

    #[test]
    fn round_trips_through_log_file() {
        let config = SyntheticWorldConfig {
            n_users: 100,
            ..Default::default()
        };
        let records = generate_synthetic_log(&config);
        let file = tempfile::NamedTempFile::new().unwrap();
        crate::data::write_log(file.path(), &records).unwrap();
        let reloaded = crate::data::load_log(file.path(), &Default::default()).unwrap();
        assert_eq!(records, reloaded);
    }
}
