use rayon::prelude::*;

use crate::cqr::{loss::dot, QuantileGrid, ThetaEstimate};
use crate::data::{Shard, ShardedDataset};
use crate::error::{Error, Result};

/// `|| sum_m psi_m (x', e_m')' ||` with `psi_m = tau_m - I(eps < b_m)`.
///
/// The slope block is `(sum_m psi_m) x` and the intercept block is
/// `(psi_1, ..., psi_M)`, so the `p + M` vectors are never formed.
#[inline]
pub fn score_norm(x: &[f64], eps: f64, taus: &[f64], b: &[f64]) -> f64 {
    score_norm_with_sq(dot(x, x), eps, taus, b)
}

#[inline]
fn score_norm_with_sq(x_sq: f64, eps: f64, taus: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (&tau, &bm) in taus.iter().zip(b) {
        let psi = if eps < bm { tau - 1.0 } else { tau };
        sum += psi;
        sum_sq += psi * psi;
    }
    (sum * sum * x_sq + sum_sq).sqrt()
}

/// Smallest possible score norm on a grid: `sqrt(sum_m min(tau_m, 1 - tau_m)^2)`.
pub fn score_norm_floor(grid: &QuantileGrid) -> f64 {
    grid.levels().iter().map(|t| t.min(1.0 - t).powi(2)).sum::<f64>().sqrt()
}

fn shard_norms(shard: &Shard, theta: &ThetaEstimate, taus: &[f64]) -> Result<Vec<f64>> {
    shard
        .rows()
        .map(|(y, x)| {
            let eps = y - dot(x, &theta.beta);
            if !eps.is_finite() {
                return Err(Error::InvalidInput("non-finite residual".into()));
            }
            Ok(score_norm_with_sq(dot(x, x), eps, taus, &theta.b))
        })
        .collect()
}

/// Per-row score norms for every shard, evaluated at `theta`.
pub fn shard_score_norms(
    dataset: &ShardedDataset,
    theta: &ThetaEstimate,
    grid: &QuantileGrid,
) -> Result<Vec<Vec<f64>>> {
    theta.check_dims(dataset.p(), grid.len())?;
    dataset.shards().par_iter().map(|s| shard_norms(s, theta, grid.levels())).collect()
}

pub(crate) fn shard_norms_checked(shard: &Shard, theta: &ThetaEstimate, grid: &QuantileGrid) -> Result<Vec<f64>> {
    theta.check_dims(shard.p(), grid.len())?;
    shard_norms(shard, theta, grid.levels())
}
