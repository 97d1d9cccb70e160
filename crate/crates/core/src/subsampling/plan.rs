use log::warn;
use serde::{Deserialize, Serialize};

use super::score::shard_norms_checked;
use crate::cqr::{QuantileGrid, ThetaEstimate};
use crate::data::{Shard, ShardedDataset};
use crate::error::{Error, Result};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMethod {
    Uniform,
    Lopt,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub shard: usize,
    /// Integer number of draws from this shard.
    pub allocation: usize,
    /// Real-valued allocation before rounding.
    pub target: f64,
    pub probabilities: Vec<f64>,
}

/// Per-shard inclusion probabilities and allocation sizes summing to `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsamplingPlan {
    pub schema_version: u32,
    pub method: PlanMethod,
    pub total: usize,
    pub shards: Vec<ShardPlan>,
}

impl SubsamplingPlan {
    /// Plan from explicit probabilities and allocations. Probabilities must be
    /// nonnegative and sum to one per shard.
    pub fn custom(probabilities: Vec<Vec<f64>>, allocations: Vec<usize>) -> Result<Self> {
        if probabilities.len() != allocations.len() {
            return Err(Error::Dimension(format!(
                "{} probability vectors for {} allocations",
                probabilities.len(),
                allocations.len()
            )));
        }
        let total = allocations.iter().sum();
        let shards = probabilities
            .into_iter()
            .zip(allocations)
            .enumerate()
            .map(|(k, (probabilities, allocation))| ShardPlan {
                shard: k,
                allocation,
                target: allocation as f64,
                probabilities,
            })
            .collect();
        let plan = SubsamplingPlan { schema_version: PLAN_SCHEMA_VERSION, method: PlanMethod::Custom, total, shards };
        plan.check_probabilities()?;
        Ok(plan)
    }

    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn allocations(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.allocation).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.shards.iter().map(|s| s.target).collect()
    }

    pub fn probabilities(&self, k: usize) -> &[f64] {
        &self.shards[k].probabilities
    }

    fn check_probabilities(&self) -> Result<()> {
        for s in &self.shards {
            if s.probabilities.is_empty() {
                return Err(Error::InvalidInput(format!("shard {} has no probabilities", s.shard)));
            }
            if s.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidInput(format!("shard {} has an invalid probability", s.shard)));
            }
            let sum: f64 = s.probabilities.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("shard {} probabilities sum to {sum}", s.shard)));
            }
        }
        Ok(())
    }

    /// Checks that the plan fits `dataset` and its totals are consistent.
    pub fn validate(&self, dataset: &ShardedDataset) -> Result<()> {
        if self.shards.len() != dataset.num_shards() {
            return Err(Error::Dimension(format!(
                "plan has {} shards, dataset has {}",
                self.shards.len(),
                dataset.num_shards()
            )));
        }
        for (k, (s, d)) in self.shards.iter().zip(dataset.shards()).enumerate() {
            if s.probabilities.len() != d.len() {
                return Err(Error::Dimension(format!(
                    "plan shard {k} has {} probabilities for {} rows",
                    s.probabilities.len(),
                    d.len()
                )));
            }
        }
        if self.allocations().iter().sum::<usize>() != self.total {
            return Err(Error::InvalidInput("allocations do not sum to the plan total".into()));
        }
        self.check_probabilities()
    }
}

/// Largest-remainder apportionment of `total` in proportion to `weights`.
/// Ties in the fractional part go to the lower index.
pub fn apportion(weights: &[f64], total: usize) -> Result<Vec<usize>> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidInput("apportionment weights must be nonnegative with positive sum".into()));
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    // floors can exceed the total only through rounding in `quotas`
    if assigned > total {
        let mut order: Vec<usize> = (0..out.len()).collect();
        order.sort_by(|&a, &b| (quotas[a] - out[a] as f64).total_cmp(&(quotas[b] - out[b] as f64)).then(b.cmp(&a)));
        let mut excess = assigned - total;
        for k in order {
            if excess == 0 {
                break;
            }
            if out[k] > 0 {
                out[k] -= 1;
                excess -= 1;
            }
        }
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - out[a] as f64;
        let fb = quotas[b] - out[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(total - assigned) {
        out[k] += 1;
    }
    Ok(out)
}

/// `pi_ik = 1 / n_k`, `r_k` proportional to `n_k`.
pub fn uniform_plan(dataset: &ShardedDataset, r: usize) -> Result<SubsamplingPlan> {
    if r == 0 {
        return Err(Error::InvalidInput("subsample size must be positive".into()));
    }
    let sizes: Vec<f64> = dataset.shards().iter().map(|s| s.len() as f64).collect();
    let n: f64 = sizes.iter().sum();
    let alloc = apportion(&sizes, r)?;
    let shards = dataset
        .shards()
        .iter()
        .zip(alloc)
        .enumerate()
        .map(|(k, (s, allocation))| ShardPlan {
            shard: k,
            allocation,
            target: r as f64 * s.len() as f64 / n,
            probabilities: vec![1.0 / s.len() as f64; s.len()],
        })
        .collect();
    Ok(SubsamplingPlan { schema_version: PLAN_SCHEMA_VERSION, method: PlanMethod::Uniform, total: r, shards })
}

fn normalize(norms: &[f64]) -> Vec<f64> {
    let total: f64 = norms.iter().sum();
    norms.iter().map(|s| s / total).collect()
}

/// L-optimal probabilities for one shard: score norms divided by their sum.
pub fn lopt_probabilities(shard: &Shard, theta: &ThetaEstimate, grid: &QuantileGrid) -> Result<Vec<f64>> {
    let norms = shard_norms_checked(shard, theta, grid)?;
    Ok(normalize(&norms))
}

/// Real-valued L-optimal allocations `r * S_k / sum_k S_k`, with `S_k` the
/// shard's summed score norms.
pub fn lopt_real_allocations(
    dataset: &ShardedDataset,
    theta: &ThetaEstimate,
    grid: &QuantileGrid,
    r: f64,
) -> Result<Vec<f64>> {
    let sums = shard_sums(dataset, theta, grid)?;
    let total: f64 = sums.iter().sum();
    Ok(sums.iter().map(|s| r * s / total).collect())
}

/// Integer L-optimal allocations summing exactly to `r`.
pub fn lopt_allocations(
    dataset: &ShardedDataset,
    theta: &ThetaEstimate,
    grid: &QuantileGrid,
    r: usize,
) -> Result<Vec<usize>> {
    if r == 0 {
        return Err(Error::InvalidInput("subsample size must be positive".into()));
    }
    let sums = shard_sums(dataset, theta, grid)?;
    let alloc = apportion(&sums, r)?;
    warn_small(&sums, r);
    Ok(alloc)
}

fn shard_sums(dataset: &ShardedDataset, theta: &ThetaEstimate, grid: &QuantileGrid) -> Result<Vec<f64>> {
    Ok(super::shard_score_norms(dataset, theta, grid)?.iter().map(|v| v.iter().sum()).collect())
}

fn warn_small(sums: &[f64], r: usize) {
    let total: f64 = sums.iter().sum();
    for (k, s) in sums.iter().enumerate() {
        let target = r as f64 * s / total;
        if target < 1.0 {
            warn!("shard {k}: real-valued allocation {target:.3} is below one draw");
        }
    }
}

/// Full L-optimal plan at `theta` with budget `r`.
pub fn lopt_plan(
    dataset: &ShardedDataset,
    theta: &ThetaEstimate,
    grid: &QuantileGrid,
    r: usize,
) -> Result<SubsamplingPlan> {
    if r == 0 {
        return Err(Error::InvalidInput("subsample size must be positive".into()));
    }
    let norms = super::shard_score_norms(dataset, theta, grid)?;
    let sums: Vec<f64> = norms.iter().map(|v| v.iter().sum()).collect();
    let total: f64 = sums.iter().sum();
    let alloc = apportion(&sums, r)?;
    warn_small(&sums, r);
    for (k, a) in alloc.iter().enumerate() {
        if *a == 0 {
            warn!("shard {k} receives no draws and is left out of the weighted objective");
        }
    }
    let shards = norms
        .iter()
        .zip(alloc)
        .enumerate()
        .map(|(k, (v, allocation))| ShardPlan {
            shard: k,
            allocation,
            target: r as f64 * sums[k] / total,
            probabilities: normalize(v),
        })
        .collect();
    Ok(SubsamplingPlan { schema_version: PLAN_SCHEMA_VERSION, method: PlanMethod::Lopt, total: r, shards })
}
