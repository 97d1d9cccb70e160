use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Distribution of the regression error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    Normal,
    /// `0.5 N(0, 1) + 0.5 N(0, 9)`.
    MixNormal,
    T3,
    Cauchy,
    /// No noise; only useful for testing.
    Zero,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn t3_cdf(t: f64) -> f64 {
    let s = 3f64.sqrt();
    0.5 + (t / (s * (1.0 + t * t / 3.0)) + (t / s).atan()) / PI
}

/// Root of an increasing `f` at level `target`, by bracketing then bisection.
fn invert_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > target {
        lo *= 2.0;
    }
    while f(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl ErrorLaw {
    pub fn name(self) -> &'static str {
        match self {
            ErrorLaw::Normal => "normal",
            ErrorLaw::MixNormal => "mix_normal",
            ErrorLaw::T3 => "t3",
            ErrorLaw::Cauchy => "cauchy",
            ErrorLaw::Zero => "zero",
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        let n = std_normal();
        match self {
            ErrorLaw::Normal => n.cdf(x),
            ErrorLaw::MixNormal => 0.5 * n.cdf(x) + 0.5 * n.cdf(x / 3.0),
            ErrorLaw::T3 => t3_cdf(x),
            ErrorLaw::Cauchy => 0.5 + x.atan() / PI,
            ErrorLaw::Zero => {
                if x < 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn quantile(self, tau: f64) -> f64 {
        match self {
            ErrorLaw::Normal => {
                // the library inverse is only good to about 1e-9; polish with Newton
                let n = std_normal();
                let mut q = n.inverse_cdf(tau);
                for _ in 0..3 {
                    q -= (n.cdf(q) - tau) / n.pdf(q);
                }
                q
            }
            ErrorLaw::Cauchy => (PI * (tau - 0.5)).tan(),
            ErrorLaw::Zero => 0.0,
            law @ (ErrorLaw::MixNormal | ErrorLaw::T3) => {
                if tau == 0.5 {
                    0.0
                } else {
                    invert_increasing(|x| law.cdf(x), tau)
                }
            }
        }
    }

    /// Density at `x`; `None` for the degenerate law.
    pub fn density(self, x: f64) -> Option<f64> {
        let n = std_normal();
        match self {
            ErrorLaw::Normal => Some(n.pdf(x)),
            ErrorLaw::MixNormal => Some(0.5 * n.pdf(x) + 0.5 * n.pdf(x / 3.0) / 3.0),
            ErrorLaw::T3 => {
                let c = 2.0 / (PI * 3f64.sqrt());
                Some(c / (1.0 + x * x / 3.0).powi(2))
            }
            ErrorLaw::Cauchy => Some(1.0 / (PI * (1.0 + x * x))),
            ErrorLaw::Zero => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::Normal => rng.sample(StandardNormal),
            ErrorLaw::MixNormal => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<bool>() {
                    z
                } else {
                    3.0 * z
                }
            }
            ErrorLaw::T3 => {
                let z: f64 = rng.sample(StandardNormal);
                let w: f64 = ChiSquared::new(3.0).expect("df").sample(rng);
                z / (w / 3.0).sqrt()
            }
            ErrorLaw::Cauchy => {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                a / b
            }
            ErrorLaw::Zero => 0.0,
        }
    }
}

/// `0.5^|s-t|`.
pub fn ar_covariance(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |s, t| 0.5f64.powi((s as i32 - t as i32).abs()))
}

/// One on the diagonal, 0.5 elsewhere.
pub fn exchangeable_covariance(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |s, t| if s == t { 1.0 } else { 0.5 })
}

/// Zero-mean normal or multivariate t with a given scale matrix.
#[derive(Debug, Clone)]
pub struct CovariateLaw {
    chol: DMatrix<f64>,
    df: Option<f64>,
}

impl CovariateLaw {
    pub fn normal(scale: DMatrix<f64>) -> Result<Self> {
        Self::build(scale, None)
    }

    /// `z / sqrt(w / df)` with `z ~ N(0, scale)` and `w ~ chi^2_df`.
    pub fn student(scale: DMatrix<f64>, df: f64) -> Result<Self> {
        Self::build(scale, Some(df))
    }

    fn build(scale: DMatrix<f64>, df: Option<f64>) -> Result<Self> {
        let chol = scale
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariate scale matrix is not positive definite".into()))?;
        Ok(CovariateLaw { chol: chol.l(), df })
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let p = self.dim();
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.chol * z;
        let scale = match self.df {
            Some(df) => {
                let w: f64 = ChiSquared::new(df).expect("df").sample(rng);
                (w / df).sqrt().recip()
            }
            None => 1.0,
        };
        for (o, v) in out.iter_mut().zip(x.iter()) {
            *o = v * scale;
        }
    }
}
