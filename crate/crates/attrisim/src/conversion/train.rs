//! Batch trainer for the hashed logistic model: limited-memory BFGS with
//! backtracking line search, deterministic for a fixed example order.

use crate::conversion::{sigmoid, HashedFeatureVector, LinearConversionModel};
use crate::error::{Error, Result};

/// One training example: hashed features plus a conversion credit in [0, 1]
/// acting as a soft label. Credits of 0/1 reduce to ordinary labels.
#[derive(Debug, Clone)]
pub struct SparseExample {
    pub x: HashedFeatureVector,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            l2: 1.0,
            max_iter: 200,
            tolerance: 1e-7,
        }
    }
}

/// Loss and gradient of the soft-label logistic objective with an L2
/// penalty on the weights (bias unpenalized).
///
/// The parameter vector is `[weights..., bias]`; `grad` must have the same
/// length and is overwritten.
pub fn loss_and_gradient(
    params: &[f64],
    examples: &[SparseExample],
    l2: f64,
    grad: &mut [f64],
) -> f64 {
    let dim = params.len() - 1;
    let bias = params[dim];
    grad.fill(0.0);
    let mut loss = 0.0;
    for ex in examples {
        let z: f64 = bias
            + ex.x
                .indices
                .iter()
                .map(|&i| params[i as usize])
                .sum::<f64>();
        // log(1 + e^z) - y z, computed without overflow.
        loss += if z > 0.0 {
            z + (-z).exp().ln_1p() - ex.target * z
        } else {
            z.exp().ln_1p() - ex.target * z
        };
        let residual = sigmoid(z) - ex.target;
        for &i in &ex.x.indices {
            grad[i as usize] += residual;
        }
        grad[dim] += residual;
    }
    for i in 0..dim {
        loss += 0.5 * l2 * params[i] * params[i];
        grad[i] += l2 * params[i];
    }
    loss
}

/// Examples grouped by identical feature vector. The grouped loss is
/// identical to the per-example loss because, at a fixed feature vector,
/// the logistic loss is linear in the target:
/// `sum_i softplus(z) - y_i z = n softplus(z) - (sum_i y_i) z`.
struct GroupedRow {
    indices: Vec<u32>,
    count: f64,
    target_sum: f64,
}

fn group_examples(examples: &[SparseExample]) -> Vec<GroupedRow> {
    let mut groups: std::collections::BTreeMap<&[u32], (f64, f64)> = std::collections::BTreeMap::new();
    for ex in examples {
        let e = groups.entry(ex.x.indices.as_slice()).or_insert((0.0, 0.0));
        e.0 += 1.0;
        e.1 += ex.target;
    }
    groups
        .into_iter()
        .map(|(indices, (count, target_sum))| GroupedRow {
            indices: indices.to_vec(),
            count,
            target_sum,
        })
        .collect()
}

fn grouped_loss_and_gradient(params: &[f64], rows: &[GroupedRow], l2: f64, grad: &mut [f64]) -> f64 {
    let dim = params.len() - 1;
    let bias = params[dim];
    grad.fill(0.0);
    let mut loss = 0.0;
    for row in rows {
        let z: f64 = bias + row.indices.iter().map(|&i| params[i as usize]).sum::<f64>();
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        loss += row.count * softplus - row.target_sum * z;
        let residual = row.count * sigmoid(z) - row.target_sum;
        for &i in &row.indices {
            grad[i as usize] += residual;
        }
        grad[dim] += residual;
    }
    for i in 0..dim {
        loss += 0.5 * l2 * params[i] * params[i];
        grad[i] += l2 * params[i];
    }
    loss
}

/// Trains an L2-penalized logistic model on hashed examples. Identical
/// feature vectors are aggregated first, so the per-iteration cost scales
/// with the number of distinct vectors rather than the number of examples.
///
/// Requires positive and negative total credit; converges when the gradient
/// infinity norm drops below the tolerance.
pub fn train(examples: &[SparseExample], bits: u8, options: &TrainOptions) -> Result<LinearConversionModel> {
    let total_pos: f64 = examples.iter().map(|e| e.target).sum();
    let total_neg: f64 = examples.iter().map(|e| 1.0 - e.target).sum();
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return Err(Error::SingleClass);
    }
    for ex in examples {
        if ex.x.bits != bits {
            return Err(Error::Config(format!(
                "example hashed with {} bits, trainer expects {bits}",
                ex.x.bits
            )));
        }
    }

    let rows = group_examples(examples);
    let dim = 1usize << bits;
    let n_params = dim + 1;
    let mut params = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut loss = grouped_loss_and_gradient(&params, &rows, options.l2, &mut grad);

    // L-BFGS history.
    const MEMORY: usize = 10;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut converged = false;
    for iter in 0..options.max_iter {
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter,
                detail: format!("loss = {loss}"),
            });
        }
        let grad_inf = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
        if grad_inf <= options.tolerance {
            converged = true;
            break;
        }

        // Two-loop recursion for the search direction.
        let mut direction: Vec<f64> = grad.iter().map(|&g| -g).collect();
        let mut alphas = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            let alpha = rho_hist[k] * dot(&s_hist[k], &direction);
            axpy(-alpha, &y_hist[k], &mut direction);
            alphas[k] = alpha;
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let scale = dot(s, y) / dot(y, y);
            if scale.is_finite() && scale > 0.0 {
                for d in direction.iter_mut() {
                    *d *= scale;
                }
            }
        }
        for k in 0..s_hist.len() {
            let beta = rho_hist[k] * dot(&y_hist[k], &direction);
            axpy(alphas[k] - beta, &s_hist[k], &mut direction);
        }

        let descent = dot(&grad, &direction);
        if descent >= 0.0 {
            // Fall back to steepest descent if the history went stale.
            direction = grad.iter().map(|&g| -g).collect();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        let descent = dot(&grad, &direction);

        // Backtracking Armijo line search.
        let mut step = 1.0;
        let mut new_params = params.clone();
        let mut new_grad = vec![0.0; n_params];
        let mut new_loss;
        loop {
            for i in 0..n_params {
                new_params[i] = params[i] + step * direction[i];
            }
            new_loss = grouped_loss_and_gradient(&new_params, &rows, options.l2, &mut new_grad);
            if new_loss <= loss + 1e-4 * step * descent {
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                // No further progress possible at this scale.
                converged = grad_inf <= options.tolerance * 100.0;
                break;
            }
        }
        if step < 1e-16 {
            break;
        }

        let s: Vec<f64> = (0..n_params).map(|i| new_params[i] - params[i]).collect();
        let y: Vec<f64> = (0..n_params).map(|i| new_grad[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }
        params = new_params;
        grad = new_grad;
        loss = new_loss;
    }

    let bias = params[dim];
    params.truncate(dim);
    Ok(LinearConversionModel {
        weights: params,
        bias,
        bits,
        l2: options.l2,
        calibration: 1.0,
        converged,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
