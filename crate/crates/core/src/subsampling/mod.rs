//! Subsampling plans for sharded data: uniform and L-optimal inclusion
//! probabilities, per-shard allocation sizes, and with-replacement draws.
//!
//! The L-optimal probability of row `i` in shard `k` is proportional to the
//! norm of its composite score `sum_m {tau_m - I(eps_ik < b_m)} (x_ik', e_m')'`,
//! and shard `k` receives a share of the budget proportional to the sum of
//! those norms over its rows.

mod alias;
mod draw;
mod plan;
mod score;

pub use alias::AliasTable;
pub use draw::{draw_subsample, PlanSampler, ShardDraw, SubsampleDraw, DRAW_SCHEMA_VERSION};
pub use plan::{
    apportion, lopt_allocations, lopt_plan, lopt_probabilities, lopt_real_allocations, uniform_plan, PlanMethod,
    ShardPlan, SubsamplingPlan, PLAN_SCHEMA_VERSION,
};
pub use score::{score_norm, score_norm_floor, shard_score_norms};
