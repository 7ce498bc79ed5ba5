//! Seeded bootstrap resampling for metric sums and paired uplifts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation; deterministic for a fixed order.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn quantile_band(mut totals: Vec<f64>, quantile: f64) -> (f64, f64) {
    totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = totals.len();
    let lo_idx = ((quantile * (n - 1) as f64).floor() as usize).min(n - 1);
    let hi_idx = (((1.0 - quantile) * (n - 1) as f64).ceil() as usize).min(n - 1);
    (totals[lo_idx], totals[hi_idx])
}

/// Empirical (quantile, 1-quantile) band of the resampled contribution sum.
///
/// The universe is value-sorted before resampling so the band does not
/// depend on the input permutation; deterministic for a fixed seed.
pub fn bootstrap_ci(
    contributions: &[f64],
    n_resamples: usize,
    quantile: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if contributions.is_empty() {
        return Err(Error::EmptyContributions);
    }
    let mut universe = contributions.to_vec();
    universe.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = universe.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut totals = Vec::with_capacity(n_resamples);
    let mut resample = vec![0.0; n];
    for _ in 0..n_resamples {
        for slot in resample.iter_mut() {
            *slot = universe[rng.gen_range(0..n)];
        }
        totals.push(stable_sum(&resample));
    }
    Ok(quantile_band(totals, quantile))
}

/// Paired bootstrap of the relative uplift `(sum(a) - sum(b)) / |sum(b)|`.
///
/// Returns the point uplift and whether the quantile-level band of the
/// resampled uplift excludes zero.
pub fn uplift_significance(
    contributions_a: &[f64],
    contributions_b: &[f64],
    n_resamples: usize,
    quantile: f64,
    seed: u64,
) -> Result<(f64, bool)> {
    if contributions_a.is_empty() || contributions_a.len() != contributions_b.len() {
        return Err(Error::EmptyContributions);
    }
    let sum_b = stable_sum(contributions_b);
    if sum_b == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let sum_a = stable_sum(contributions_a);
    let point = (sum_a - sum_b) / sum_b.abs();

    // Sort pairs so the resampling is permutation invariant.
    let mut pairs: Vec<(f64, f64)> = contributions_a
        .iter()
        .copied()
        .zip(contributions_b.iter().copied())
        .collect();
    pairs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = pairs.len();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut uplifts = Vec::with_capacity(n_resamples);
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    for _ in 0..n_resamples {
        for i in 0..n {
            let j = rng.gen_range(0..n);
            ra[i] = pairs[j].0;
            rb[i] = pairs[j].1;
        }
        let sb = stable_sum(&rb);
        if sb == 0.0 {
            uplifts.push(0.0);
            continue;
        }
        uplifts.push((stable_sum(&ra) - sb) / sb.abs());
    }
    let (lo, hi) = quantile_band(uplifts, quantile);
    let significant = lo > 0.0 || hi < 0.0;
    Ok((point, significant))
}
