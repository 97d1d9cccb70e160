//! Composite quantile regression: check-loss primitives, the weighted
//! objective and its solver.

mod grid;
pub(crate) mod loss;
mod sample;
mod solver;

pub use grid::QuantileGrid;
pub use loss::{check_loss, cqr_objective, psi};
pub use sample::{WeightedObservation, WeightedSample};
pub use solver::{solve_weighted_cqr, CqrFit, RankPolicy, SolverOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slopes `beta` (length `p`) and one intercept per quantile level (length `M`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub beta: Vec<f64>,
    pub b: Vec<f64>,
}

impl ThetaEstimate {
    pub fn new(beta: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if beta.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("theta has non-finite entries".into()));
        }
        Ok(ThetaEstimate { beta, b })
    }

    pub fn zeros(p: usize, m: usize) -> Self {
        ThetaEstimate { beta: vec![0.0; p], b: vec![0.0; m] }
    }

    /// `(beta', b')'` as one vector of length `p + M`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.b);
        v
    }

    pub fn from_stacked(p: usize, v: &[f64]) -> Self {
        ThetaEstimate { beta: v[..p].to_vec(), b: v[p..].to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + self.b.len()
    }

    pub(crate) fn check_dims(&self, p: usize, m: usize) -> Result<()> {
        if self.beta.len() != p || self.b.len() != m {
            return Err(Error::Dimension(format!(
                "theta has {} slopes and {} intercepts, expected {p} and {m}",
                self.beta.len(),
                self.b.len()
            )));
        }
        Ok(())
    }
}
