//! Log schema, timeline reconstruction, attribution-sample extraction and
//! the sliding train/test split.

mod io;
mod synth;

pub use io::{load_log, write_log, LogSchema};
pub use synth::{generate_synthetic_log, SyntheticWorldConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per day; day index of a record is `timestamp / SECONDS_PER_DAY`.
pub const SECONDS_PER_DAY: u64 = 86_400;

/// Industry-standard attribution window: 30 days, in seconds.
pub const ATTRIBUTION_WINDOW: u64 = 30 * SECONDS_PER_DAY;

/// One logged ad impression with its click/conversion/attribution outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    /// Event time in seconds.
    pub timestamp: u64,
    pub user_id: String,
    pub campaign_id: String,
    /// Observed price paid, i.e. the highest competing bid.
    pub cost: f64,
    /// Advertiser cost-per-order payment (the CPA).
    pub cpo: f64,
    /// Categorical context as (field index, token) pairs.
    pub features: Vec<(u32, String)>,
    pub click: bool,
    /// Position of this click among the clicks preceding the conversion it
    /// is associated with, when applicable.
    pub click_pos: Option<u32>,
    /// Whether any conversion followed within the attribution window.
    pub conversion: bool,
    pub conversion_timestamp: Option<u64>,
    pub conversion_value: Option<f64>,
    /// Whether the conversion was credited to the platform.
    pub attribution: bool,
}

impl ImpressionRecord {
    /// Day index of this impression.
    pub fn day(&self) -> u64 {
        self.timestamp / SECONDS_PER_DAY
    }
}

/// Timeline key: attribution competition is modeled per (user, campaign).
pub type TimelineKey = (String, String);

/// Time-ordered events of one (user, campaign) pair.
///
/// Events are stored as indices into the record list the timeline was built
/// from; ties at equal timestamps keep input order.
#[derive(Debug, Clone, Default)]
pub struct UserTimeline {
    /// Indices into the source record slice, ordered by timestamp.
    pub events: Vec<usize>,
    /// Timestamps of clicked events, ascending.
    pub click_times: Vec<u64>,
}

/// One (delta, attributed) observation for the attribution fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionSample {
    /// Time between the conversion and the last prior click, seconds.
    pub delta: f64,
    pub attributed: bool,
}

/// An attribution sample with the grouping labels needed for per-campaign
/// and per-day fits.
#[derive(Debug, Clone)]
pub struct GroupedSample {
    pub campaign_id: String,
    /// Day index of the conversion.
    pub day: u64,
    pub sample: AttributionSample,
}

/// Output of [`extract_attribution_samples`].
#[derive(Debug, Clone, Default)]
pub struct SampleExtraction {
    pub samples: Vec<GroupedSample>,
    /// Conversions skipped because the conversion-click gap was non-positive
    /// (clock skew in real logs).
    pub skipped_non_positive: usize,
}

impl SampleExtraction {
    pub fn plain_samples(&self) -> Vec<AttributionSample> {
        self.samples.iter().map(|s| s.sample).collect()
    }
}

/// Groups records into per-(user, campaign) timelines.
///
/// Every record lands in exactly one timeline; within a timeline events are
/// sorted by timestamp with ties broken by input order.
pub fn build_timelines(records: &[ImpressionRecord]) -> BTreeMap<TimelineKey, UserTimeline> {
    let mut map: BTreeMap<TimelineKey, UserTimeline> = BTreeMap::new();
    for (idx, rec) in records.iter().enumerate() {
        let key = (rec.user_id.clone(), rec.campaign_id.clone());
        map.entry(key).or_default().events.push(idx);
    }
    for timeline in map.values_mut() {
        timeline
            .events
            .sort_by_key(|&i| records[i].timestamp);
        timeline.click_times = timeline
            .events
            .iter()
            .filter(|&&i| records[i].click)
            .map(|&i| records[i].timestamp)
            .collect();
    }
    map
}

/// Time since the last click strictly before `t`, or `None` when no click
/// precedes `t`. A click at exactly `t` is the current event, not a prior one.
pub fn time_since_last_click(timeline: &UserTimeline, t: u64) -> Option<u64> {
    let n = timeline.click_times.partition_point(|&c| c < t);
    if n == 0 {
        None
    } else {
        Some(t - timeline.click_times[n - 1])
    }
}

/// Extracts one `(delta, attributed)` sample per (conversion, last prior
/// click) pair across all timelines.
///
/// Conversions with no preceding click produce no sample; non-positive
/// deltas are counted, not fatal.
pub fn extract_attribution_samples(
    records: &[ImpressionRecord],
    timelines: &BTreeMap<TimelineKey, UserTimeline>,
) -> SampleExtraction {
    let mut out = SampleExtraction::default();
    for ((_, campaign_id), timeline) in timelines {
        // Distinct conversions on this timeline, keyed by conversion time.
        let mut conversions: BTreeMap<u64, bool> = BTreeMap::new();
        for &i in &timeline.events {
            let rec = &records[i];
            if let Some(ts) = rec.conversion_timestamp {
                let attributed = conversions.entry(ts).or_insert(false);
                *attributed |= rec.attribution;
            }
        }
        for (&conv_ts, &attributed) in &conversions {
            // A click at the exact conversion instant yields delta = 0,
            // which is counted as clock skew rather than fitted.
            let n = timeline.click_times.partition_point(|&c| c <= conv_ts);
            if n == 0 {
                continue;
            }
            let last_click = timeline.click_times[n - 1];
            let delta = conv_ts - last_click;
            if delta == 0 {
                out.skipped_non_positive += 1;
                continue;
            }
            out.samples.push(GroupedSample {
                campaign_id: campaign_id.clone(),
                day: conv_ts / SECONDS_PER_DAY,
                sample: AttributionSample {
                    delta: delta as f64,
                    attributed,
                },
            });
        }
    }
    out
}

/// One train/test pair of the sliding split. Members are indices into the
/// source record slice.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_day: u64,
}

/// Sliding evaluation split: the last `test_days` feasible days are test
/// days, each trained on the `train_days` days strictly before it.
pub fn sliding_split(
    records: &[ImpressionRecord],
    train_days: usize,
    test_days: usize,
) -> Result<Vec<SplitPair>> {
    let (min_day, max_day) = match records
        .iter()
        .map(|r| r.day())
        .fold(None, |acc: Option<(u64, u64)>, d| match acc {
            None => Some((d, d)),
            Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
        }) {
        Some(bounds) => bounds,
        None => {
            return Err(Error::InsufficientSpan {
                required: train_days + 1,
                available: 0,
            })
        }
    };
    let span = (max_day - min_day + 1) as usize;
    if span < train_days + 1 {
        return Err(Error::InsufficientSpan {
            required: train_days + 1,
            available: span,
        });
    }
    let n_pairs = (span - train_days).min(test_days);
    let first_test_day = max_day + 1 - n_pairs as u64;

    let mut pairs = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs as u64 {
        let test_day = first_test_day + k;
        let train_start = test_day - train_days as u64;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            let d = rec.day();
            if d == test_day {
                test.push(i);
            } else if d >= train_start && d < test_day {
                train.push(i);
            }
        }
        pairs.push(SplitPair {
            train,
            test,
            test_day,
        });
    }
    Ok(pairs)
}
