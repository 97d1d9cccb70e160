use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alias::AliasTable;
use super::plan::SubsamplingPlan;
use crate::cqr::{WeightedObservation, WeightedSample};
use crate::data::ShardedDataset;
use crate::error::{Error, Result};
use crate::rng::{label, StreamKey};

pub const DRAW_SCHEMA_VERSION: u32 = 1;

/// Row indices drawn from one shard, with the plan probability of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardDraw {
    pub shard: usize,
    pub rows: Vec<usize>,
    pub probabilities: Vec<f64>,
}

/// A with-replacement subsample across all shards. `stream` is the seed of
/// the key the draw was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleDraw {
    pub schema_version: u32,
    pub stream: u64,
    pub shards: Vec<ShardDraw>,
}

impl SubsampleDraw {
    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.rows.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drawn rows as weighted observations. Each weight is `r / (r_k pi*)`,
    /// with `r` the draw size and `r_k` the number of rows drawn from shard `k`.
    pub fn observations<'a>(&'a self, dataset: &'a ShardedDataset) -> impl Iterator<Item = WeightedObservation> + 'a {
        let r = self.len() as f64;
        self.shards.iter().flat_map(move |s| {
            let shard = dataset.shard(s.shard);
            let rk = s.rows.len() as f64;
            s.rows.iter().zip(&s.probabilities).map(move |(&i, &pi)| WeightedObservation {
                y: shard.response(i),
                x: shard.row(i).to_vec(),
                weight: r / (rk * pi),
            })
        })
    }

    /// Packs the drawn rows into a sample for the weighted solver.
    pub fn weighted_sample(&self, dataset: &ShardedDataset) -> Result<WeightedSample> {
        if self.shards.len() != dataset.num_shards() {
            return Err(Error::Dimension(format!(
                "draw covers {} shards, dataset has {}",
                self.shards.len(),
                dataset.num_shards()
            )));
        }
        let r = self.len() as f64;
        let mut sample = WeightedSample::with_capacity(dataset.p(), self.len());
        for s in &self.shards {
            let shard = dataset.shard(s.shard);
            let rk = s.rows.len() as f64;
            for (&i, &pi) in s.rows.iter().zip(&s.probabilities) {
                if i >= shard.len() {
                    return Err(Error::Dimension(format!("row {i} out of range for shard {}", s.shard)));
                }
                sample.push(shard.response(i), shard.row(i), r / (rk * pi))?;
            }
        }
        Ok(sample)
    }
}

/// Alias tables for every shard of a plan, built once and reused across draws.
#[derive(Debug, Clone)]
pub struct PlanSampler<'p> {
    plan: &'p SubsamplingPlan,
    tables: Vec<AliasTable>,
}

impl<'p> PlanSampler<'p> {
    pub fn new(plan: &'p SubsamplingPlan) -> Result<Self> {
        let tables = plan
            .shards
            .par_iter()
            .map(|s| {
                AliasTable::new(&s.probabilities)
                    .ok_or_else(|| Error::InvalidInput(format!("shard {} has unusable probabilities", s.shard)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PlanSampler { plan, tables })
    }

    pub fn plan(&self) -> &SubsamplingPlan {
        self.plan
    }

    /// Draws `r_k` rows from each shard; shard `k` uses the stream `key / SHARD / k`.
    pub fn draw(&self, key: StreamKey) -> SubsampleDraw {
        let shards = self
            .plan
            .shards
            .par_iter()
            .zip(&self.tables)
            .enumerate()
            .map(|(k, (s, table))| {
                let mut rng = key.child(label::SHARD).child(k as u64).rng();
                let rows: Vec<usize> = (0..s.allocation).map(|_| table.sample(&mut rng)).collect();
                let probabilities = rows.iter().map(|&i| s.probabilities[i]).collect();
                ShardDraw { shard: k, rows, probabilities }
            })
            .collect();
        SubsampleDraw { schema_version: DRAW_SCHEMA_VERSION, stream: key.seed(), shards }
    }
}

/// One draw from `plan`, after checking it against `dataset`.
pub fn draw_subsample(dataset: &ShardedDataset, plan: &SubsamplingPlan, key: StreamKey) -> Result<SubsampleDraw> {
    plan.validate(dataset)?;
    Ok(PlanSampler::new(plan)?.draw(key))
}
