//! Finite-sample variance components for a known parameter: the sampling
//! part `V_pi`, the curvature matrix `E_n` under a known error density, and
//! the sandwich `E_n^{-1} V_pi E_n^{-1}`.
//!
//! These take the true `theta_0` and are meant for testing and small audits.

use nalgebra::DMatrix;

use crate::cqr::loss::dot;
use crate::cqr::{QuantileGrid, ThetaEstimate};
use crate::data::ShardedDataset;
use crate::error::{Error, Result};
use crate::subsampling::{shard_score_norms, SubsamplingPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct VpiMatrix {
    pub matrix: DMatrix<f64>,
    pub theta0: ThetaEstimate,
    pub allocations: Vec<f64>,
}

impl VpiMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

fn psi_vector(eps: f64, taus: &[f64], b: &[f64], out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for ((o, &tau), &bm) in out.iter_mut().zip(taus).zip(b) {
        *o = if eps < bm { tau - 1.0 } else { tau };
        sum += *o;
    }
    sum
}

fn check_plan(dataset: &ShardedDataset, probabilities: &[Vec<f64>], allocations: &[f64]) -> Result<()> {
    if probabilities.len() != dataset.num_shards() || allocations.len() != dataset.num_shards() {
        return Err(Error::Dimension("plan does not match the number of shards".into()));
    }
    for (k, (pi, shard)) in probabilities.iter().zip(dataset.shards()).enumerate() {
        if pi.len() != shard.len() {
            return Err(Error::Dimension(format!("shard {k}: {} probabilities for {} rows", pi.len(), shard.len())));
        }
        if pi.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!("shard {k} has a zero or invalid probability")));
        }
        if !(allocations[k] > 0.0 && allocations[k].is_finite()) {
            return Err(Error::InvalidInput(format!("shard {k} has nonpositive allocation {}", allocations[k])));
        }
    }
    Ok(())
}

/// `V_pi = n^{-2} sum_k (r / r_k) sum_i pi_ik^{-1} g_ik g_ik'`, where
/// `g_ik = sum_m psi_m (x_ik', e_m')'` at `theta0`. Allocations may be real.
pub fn v_pi_matrix(
    dataset: &ShardedDataset,
    probabilities: &[Vec<f64>],
    allocations: &[f64],
    theta0: &ThetaEstimate,
    grid: &QuantileGrid,
) -> Result<VpiMatrix> {
    theta0.check_dims(dataset.p(), grid.len())?;
    check_plan(dataset, probabilities, allocations)?;
    let p = dataset.p();
    let d = p + grid.len();
    let n = dataset.total_len() as f64;
    let r: f64 = allocations.iter().sum();
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let mut g = vec![0.0; d];
    for (k, shard) in dataset.shards().iter().enumerate() {
        let scale_k = r / allocations[k] / (n * n);
        for (i, (y, x)) in shard.rows().enumerate() {
            let eps = y - dot(x, &theta0.beta);
            let s = psi_vector(eps, grid.levels(), &theta0.b, &mut g[p..]);
            for (gj, xj) in g[..p].iter_mut().zip(x) {
                *gj = s * xj;
            }
            let c = scale_k / probabilities[k][i];
            for a in 0..d {
                let ga = c * g[a];
                for b in a..d {
                    acc[(a, b)] += ga * g[b];
                }
            }
        }
    }
    acc.fill_lower_triangle_with_upper_triangle();
    Ok(VpiMatrix { matrix: acc, theta0: theta0.clone(), allocations: allocations.to_vec() })
}

/// `V_pi` for an integer plan.
pub fn v_pi_for_plan(
    dataset: &ShardedDataset,
    plan: &SubsamplingPlan,
    theta0: &ThetaEstimate,
    grid: &QuantileGrid,
) -> Result<VpiMatrix> {
    let probs: Vec<Vec<f64>> = plan.shards.iter().map(|s| s.probabilities.clone()).collect();
    let alloc: Vec<f64> = plan.allocations().iter().map(|&a| a as f64).collect();
    v_pi_matrix(dataset, &probs, &alloc, theta0, grid)
}

/// `tr(V_pi)` from the score norms alone: `n^{-2} sum_k (r / r_k) sum_i ||g_ik||^2 / pi_ik`.
pub fn v_pi_trace(
    dataset: &ShardedDataset,
    probabilities: &[Vec<f64>],
    allocations: &[f64],
    theta0: &ThetaEstimate,
    grid: &QuantileGrid,
) -> Result<f64> {
    check_plan(dataset, probabilities, allocations)?;
    let norms = shard_score_norms(dataset, theta0, grid)?;
    let n = dataset.total_len() as f64;
    let r: f64 = allocations.iter().sum();
    let total: f64 = norms
        .iter()
        .zip(probabilities)
        .zip(allocations)
        .map(|((g, pi), rk)| r / rk * g.iter().zip(pi).map(|(g, p)| g * g / p).sum::<f64>())
        .sum();
    Ok(total / (n * n))
}

/// Minimum of `tr(V_pi)` over all plans with real allocations:
/// `(sum_k sum_i ||g_ik||)^2 / n^2`, attained by the L-optimal plan.
pub fn v_pi_trace_lower_bound(dataset: &ShardedDataset, theta0: &ThetaEstimate, grid: &QuantileGrid) -> Result<f64> {
    let norms = shard_score_norms(dataset, theta0, grid)?;
    let s: f64 = norms.iter().flatten().sum();
    let n = dataset.total_len() as f64;
    Ok(s * s / (n * n))
}

/// `E_n = n^{-1} sum_i sum_m f(b_0m) x~_im x~_im'` with `x~_im = (x_i', e_m')'`.
pub fn e_n_matrix(dataset: &ShardedDataset, grid: &QuantileGrid, density_at_b: &[f64]) -> Result<DMatrix<f64>> {
    if density_at_b.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} density values for {} quantile levels",
            density_at_b.len(),
            grid.len()
        )));
    }
    if density_at_b.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidInput("error density at each intercept must be positive and finite".into()));
    }
    let p = dataset.p();
    let m = grid.len();
    let n = dataset.total_len() as f64;
    let mut xx = DMatrix::<f64>::zeros(p, p);
    let mut xsum = vec![0.0; p];
    for shard in dataset.shards() {
        for (_, x) in shard.rows() {
            for a in 0..p {
                xsum[a] += x[a];
                for b in a..p {
                    xx[(a, b)] += x[a] * x[b];
                }
            }
        }
    }
    xx.fill_lower_triangle_with_upper_triangle();
    let fsum: f64 = density_at_b.iter().sum();
    let mut e = DMatrix::<f64>::zeros(p + m, p + m);
    for a in 0..p {
        for b in 0..p {
            e[(a, b)] = fsum * xx[(a, b)] / n;
        }
    }
    for (j, &f) in density_at_b.iter().enumerate() {
        e[(p + j, p + j)] = f;
        for a in 0..p {
            e[(a, p + j)] = f * xsum[a] / n;
            e[(p + j, a)] = e[(a, p + j)];
        }
    }
    Ok(e)
}

/// `E_n^{-1} V_pi E_n^{-1}`; the asymptotic covariance of `sqrt(r) (theta_hat - theta_0)`.
pub fn sandwich(e_n: &DMatrix<f64>, v_pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if e_n.shape() != v_pi.shape() || !e_n.is_square() {
        return Err(Error::Dimension("E_n and V_pi must be square and of equal size".into()));
    }
    let inv =
        e_n.clone().cholesky().map(|c| c.inverse()).ok_or(Error::SingularDesign { rank: 0, expected: e_n.nrows() })?;
    Ok(&inv * v_pi * &inv)
}
