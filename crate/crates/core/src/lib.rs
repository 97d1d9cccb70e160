pub mod cqr;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod rng;
pub mod simgen;
pub mod subsampling;
pub mod two_step;

pub use cqr::{QuantileGrid, ThetaEstimate, WeightedObservation, WeightedSample};
pub use data::{Shard, ShardedDataset};
pub use error::{Error, Result};
