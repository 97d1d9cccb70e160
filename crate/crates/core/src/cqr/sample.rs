use crate::error::{Error, Result};

/// One observation entering the weighted objective. In subsampling use the
/// weight is `r / (r_k * pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedObservation {
    pub y: f64,
    pub x: Vec<f64>,
    pub weight: f64,
}

/// Column-compact storage of weighted observations; `x` is row-major `n x p`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedSample {
    p: usize,
    y: Vec<f64>,
    x: Vec<f64>,
    w: Vec<f64>,
}

impl WeightedSample {
    pub fn with_capacity(p: usize, n: usize) -> Self {
        WeightedSample { p, y: Vec::with_capacity(n), x: Vec::with_capacity(n * p), w: Vec::with_capacity(n) }
    }

    pub fn from_observations(p: usize, obs: &[WeightedObservation]) -> Result<Self> {
        let mut s = WeightedSample::with_capacity(p, obs.len());
        for o in obs {
            s.push(o.y, &o.x, o.weight)?;
        }
        Ok(s)
    }

    /// Unit weights, e.g. for a full-data fit.
    pub fn unweighted(p: usize, y: &[f64], x: &[f64]) -> Result<Self> {
        let mut s = WeightedSample::with_capacity(p, y.len());
        for (i, &yi) in y.iter().enumerate() {
            s.push(yi, &x[i * p..(i + 1) * p], 1.0)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, y: f64, x: &[f64], weight: f64) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!("observation has {} covariates, sample expects {}", x.len(), self.p)));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!("weight {weight} is not positive and finite")));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observation has non-finite values".into()));
        }
        self.y.push(y);
        self.x.extend_from_slice(x);
        self.w.push(weight);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn observation(&self, i: usize) -> WeightedObservation {
        WeightedObservation { y: self.y[i], x: self.row(i).to_vec(), weight: self.w[i] }
    }

    /// Same sample with every response shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.y.iter_mut().for_each(|v| *v += c);
        s
    }
}
