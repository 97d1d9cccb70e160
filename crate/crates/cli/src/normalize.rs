//! Global z-scoring of selected columns.

use cqrsub::{Shard, ShardedDataset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::ingest::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Response,
    Covariate(usize),
}

/// `z = (v - mean) / sd` for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub column: Column,
    pub mean: f64,
    /// Sample standard deviation over all shards.
    pub sd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub columns: Vec<ColumnTransform>,
}

/// Count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

fn read(shard: &Shard, col: Column, i: usize) -> f64 {
    match col {
        Column::Response => shard.response(i),
        Column::Covariate(j) => shard.row(i)[j],
    }
}

fn map_shard(shard: &Shard, columns: &[ColumnTransform], f: impl Fn(f64, &ColumnTransform) -> f64) -> Shard {
    let p = shard.p();
    let mut y = shard.responses().to_vec();
    let mut x = shard.covariates().to_vec();
    for c in columns {
        match c.column {
            Column::Response => y.iter_mut().for_each(|v| *v = f(*v, c)),
            Column::Covariate(j) => x.chunks_exact_mut(p).for_each(|row| row[j] = f(row[j], c)),
        }
    }
    Shard::new(y, x, p).expect("shape unchanged")
}

impl Transform {
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn apply(&self, dataset: &ShardedDataset) -> ShardedDataset {
        self.map(dataset, |v, c| (v - c.mean) / c.sd)
    }

    pub fn invert(&self, dataset: &ShardedDataset) -> ShardedDataset {
        self.map(dataset, |v, c| v * c.sd + c.mean)
    }

    fn map(&self, dataset: &ShardedDataset, f: impl Fn(f64, &ColumnTransform) -> f64 + Sync) -> ShardedDataset {
        let shards = dataset.shards().par_iter().map(|s| map_shard(s, &self.columns, &f)).collect();
        ShardedDataset::new(shards).expect("shape unchanged")
    }
}

/// Estimates mean and sample SD of each named column across all shards
/// (one pass per shard, shards combined in order).
pub fn fit_transform(dataset: &ShardedDataset, schema: &Schema, names: &[String]) -> CliResult<Transform> {
    let mut columns = Vec::with_capacity(names.len());
    for name in names {
        let column = if *name == schema.response {
            Column::Response
        } else if let Some(j) = schema.covariates.iter().position(|c| c == name) {
            Column::Covariate(j)
        } else {
            return Err(CliError::Config(format!("cannot normalize {name:?}: not a selected column")));
        };
        if columns.iter().any(|c: &ColumnTransform| c.column == column) {
            return Err(CliError::Config(format!("column {name:?} is listed twice for normalization")));
        }
        columns.push(ColumnTransform { name: name.clone(), column, mean: 0.0, sd: 0.0 });
    }
    let per_shard: Vec<Vec<Moments>> = dataset
        .shards()
        .par_iter()
        .map(|s| {
            let mut m = vec![Moments::default(); columns.len()];
            for i in 0..s.len() {
                for (acc, c) in m.iter_mut().zip(&columns) {
                    acc.push(read(s, c.column, i));
                }
            }
            m
        })
        .collect();
    for (j, c) in columns.iter_mut().enumerate() {
        let m = per_shard.iter().fold(Moments::default(), |acc, s| acc.merge(s[j]));
        let sd = if m.n > 1.0 { (m.m2 / (m.n - 1.0)).sqrt() } else { 0.0 };
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(CliError::Ingest(format!("column {:?} has zero variance and cannot be normalized", c.name)));
        }
        c.mean = m.mean;
        c.sd = sd;
    }
    Ok(Transform { columns })
}

pub fn normalize(
    dataset: &ShardedDataset,
    schema: &Schema,
    names: &[String],
) -> CliResult<(ShardedDataset, Transform)> {
    let t = fit_transform(dataset, schema, names)?;
    Ok((t.apply(dataset), t))
}
