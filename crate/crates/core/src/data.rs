//! Sharded datasets: `K` immutable blocks of `(y, x)` rows sharing a covariate dimension.

use crate::error::{Error, Result};

/// One data block. Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
}

impl Shard {
    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("shard has no rows".into()));
        }
        if x.len() != y.len() * p {
            return Err(Error::Dimension(format!(
                "covariate buffer holds {} values, expected {} rows x {} columns",
                x.len(),
                y.len(),
                p
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response in row {i}")));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite covariate in row {}", j / p.max(1))));
        }
        Ok(Shard { y, x, p })
    }

    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(Error::Dimension(format!("{} responses but {} covariate rows", y.len(), rows.len())));
        }
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("covariate rows have differing lengths".into()));
        }
        Shard::new(y, rows.concat(), p)
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

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn response(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.y.iter().copied().zip(self.x.chunks_exact(self.p.max(1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardedDataset {
    shards: Vec<Shard>,
    p: usize,
}

impl ShardedDataset {
    pub fn new(shards: Vec<Shard>) -> Result<Self> {
        let Some(first) = shards.first() else {
            return Err(Error::InvalidInput("dataset needs at least one shard".into()));
        };
        let p = first.p();
        if let Some(k) = shards.iter().position(|s| s.p() != p) {
            return Err(Error::Dimension(format!("shard {k} has {} covariates, shard 0 has {p}", shards[k].p())));
        }
        Ok(ShardedDataset { shards, p })
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn shard(&self, k: usize) -> &Shard {
        &self.shards[k]
    }

    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn total_len(&self) -> usize {
        self.shards.iter().map(Shard::len).sum()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Shard::len).collect()
    }

    pub fn into_shards(self) -> Vec<Shard> {
        self.shards
    }
}
