//! Simulated sharded datasets and the Monte Carlo experiment harness.
//!
//! Streams per replication `s`, relative to `StreamKey::new(seed) / REPLICATION / s`:
//! shard sizes `SHARD_SIZES`, rows of shard `k` `DATA / k`, estimation `MAIN`.

mod experiment;
mod laws;

pub use experiment::{
    run_experiment, ExperimentReport, MethodSummary, MultiDrawRow, MultiDrawSummary, SingleDrawRow,
    SUMMARY_SCHEMA_VERSION,
};
pub use laws::{ar_covariance, exchangeable_covariance, CovariateLaw, ErrorLaw};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqr::{QuantileGrid, ThetaEstimate};
use crate::data::{Shard, ShardedDataset};
use crate::error::{Error, Result};
use crate::rng::{label, StreamKey};
use crate::subsampling::apportion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateCase {
    /// `N(0, 0.5^|s-t|)`.
    I,
    /// `N(0, 0.5^{I(s != t)})`.
    II,
    /// Multivariate t with 3 df and scale `0.5^|s-t|`.
    III,
    /// Five shards with different laws: `N(0, I)`, `N(0, S1)`, `N(0, S2)`,
    /// `t3(0, S1)`, `t5(0, S1)`.
    IV,
}

impl CovariateCase {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Some(CovariateCase::I),
            "II" | "2" => Some(CovariateCase::II),
            "III" | "3" => Some(CovariateCase::III),
            "IV" | "4" => Some(CovariateCase::IV),
            _ => None,
        }
    }

    /// Covariate law for shard `k`.
    pub fn law(self, p: usize, k: usize) -> Result<CovariateLaw> {
        match self {
            CovariateCase::I => CovariateLaw::normal(ar_covariance(p)),
            CovariateCase::II => CovariateLaw::normal(exchangeable_covariance(p)),
            CovariateCase::III => CovariateLaw::student(ar_covariance(p), 3.0),
            CovariateCase::IV => match k {
                0 => CovariateLaw::normal(nalgebra::DMatrix::identity(p, p)),
                1 => CovariateLaw::normal(ar_covariance(p)),
                2 => CovariateLaw::normal(exchangeable_covariance(p)),
                3 => CovariateLaw::student(ar_covariance(p), 3.0),
                4 => CovariateLaw::student(ar_covariance(p), 5.0),
                _ => Err(Error::InvalidInput(format!("case IV has five shards, asked for shard {k}"))),
            },
        }
    }
}

impl ErrorLaw {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "n01" => Some(ErrorLaw::Normal),
            "mix_normal" | "mixnormal" | "mixture" => Some(ErrorLaw::MixNormal),
            "t3" => Some(ErrorLaw::T3),
            "cauchy" => Some(ErrorLaw::Cauchy),
            "zero" | "none" => Some(ErrorLaw::Zero),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub case: CovariateCase,
    pub error: ErrorLaw,
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub beta0: Vec<f64>,
    pub grid: QuantileGrid,
    pub replications: usize,
    pub r0: usize,
    /// Budgets for the single-draw uniform vs L-opt comparison.
    pub r_values: Vec<usize>,
    /// Draw counts for the combined estimator; empty skips that part.
    pub b_values: Vec<usize>,
    /// Budget used by the combined estimator.
    pub multi_r: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(case: CovariateCase, error: ErrorLaw, n: usize, k: usize) -> Self {
        let p = 5;
        SimConfig {
            case,
            error,
            n,
            k,
            p,
            beta0: vec![1.0; p],
            grid: QuantileGrid::default(),
            replications: 200,
            r0: 200,
            r_values: vec![200, 400, 600, 800, 1000],
            b_values: Vec::new(),
            multi_r: 1000,
            alpha: 0.05,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.case == CovariateCase::IV && (self.k != 5 || self.p != 5) {
            return bad(format!("case IV requires K = 5 and p = 5, got K = {} and p = {}", self.k, self.p));
        }
        if self.p == 0 || self.k == 0 || self.replications == 0 || self.r0 == 0 {
            return bad("p, K, replications and r0 must be positive".into());
        }
        if self.beta0.len() != self.p {
            return bad(format!("beta0 has {} entries, p = {}", self.beta0.len(), self.p));
        }
        if self.n < 2 * self.k {
            return bad(format!("n = {} is too small for K = {} shards", self.n, self.k));
        }
        if self.r_values.contains(&0) || self.multi_r == 0 {
            return bad("subsample sizes must be positive".into());
        }
        if self.b_values.iter().any(|&b| b < 2) {
            return bad("every B must be at least 2".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    /// `(beta0, b0)` with `b0_m` the `tau_m` quantile of the error law.
    pub fn true_theta(&self) -> ThetaEstimate {
        ThetaEstimate {
            beta: self.beta0.clone(),
            b: self.grid.levels().iter().map(|&t| self.error.quantile(t)).collect(),
        }
    }

    pub fn replication_key(&self, rep: usize) -> StreamKey {
        StreamKey::new(self.seed).child(label::REPLICATION).child(rep as u64)
    }
}

/// `n_k = [n u_k / sum u]` with `u_k ~ uniform(1, 2)`, repaired to sum to `n`.
pub fn shard_sizes(n: usize, k: usize, key: StreamKey) -> Result<Vec<usize>> {
    let mut rng = key.rng();
    let u: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..2.0)).collect();
    let sizes = apportion(&u, n)?;
    if sizes.contains(&0) {
        return Err(Error::InvalidInput(format!("n = {n} leaves an empty shard among {k}")));
    }
    Ok(sizes)
}

/// Data for replication `rep`, with the true parameter.
pub fn generate_dataset(config: &SimConfig, rep: usize) -> Result<(ShardedDataset, ThetaEstimate)> {
    config.validate()?;
    let key = config.replication_key(rep);
    let sizes = shard_sizes(config.n, config.k, key.child(label::SHARD_SIZES))?;
    let p = config.p;
    let shards = sizes
        .par_iter()
        .enumerate()
        .map(|(k, &nk)| {
            let law = config.case.law(p, k)?;
            let mut rng = key.child(label::DATA).child(k as u64).rng();
            let mut x = vec![0.0; nk * p];
            let mut y = Vec::with_capacity(nk);
            for row in x.chunks_exact_mut(p) {
                law.sample_into(&mut rng, row);
                let fit: f64 = row.iter().zip(&config.beta0).map(|(a, b)| a * b).sum();
                y.push(fit + config.error.sample(&mut rng));
            }
            Shard::new(y, x, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ShardedDataset::new(shards)?, config.true_theta()))
}
