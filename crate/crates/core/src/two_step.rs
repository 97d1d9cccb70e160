//! Two-step estimation: a uniform pilot fit, an L-optimal plan evaluated at
//! the pilot, and weighted fits on draws from that plan. With `B` draws the
//! estimates are averaged and their spread gives a covariance estimate.
//!
//! Random streams, relative to `StreamKey::new(seed)`:
//! pilot draw `PILOT`, draw `j` from the main plan `DRAW / j`, and for the
//! uniform method `UNIFORM / DRAW / j`. Draw `j` therefore does not depend on
//! how many draws are requested.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cqr::{solve_weighted_cqr, CqrFit, QuantileGrid, SolverOptions, ThetaEstimate};
use crate::data::ShardedDataset;
use crate::error::{Error, Result, StageExt};
use crate::rng::{label, StreamKey};
use crate::subsampling::{draw_subsample, lopt_plan, uniform_plan, PlanSampler, SubsampleDraw, SubsamplingPlan};

pub const RESULT_SCHEMA_VERSION: u32 = 1;
const R_EF_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Pilot, then L-optimal probabilities and allocations at the pilot.
    Lopt,
    /// `pi_ik = 1 / n_k`, allocations proportional to shard size; no pilot.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct Pilot {
    pub theta: ThetaEstimate,
    pub plan: SubsamplingPlan,
    pub draw: SubsampleDraw,
}

/// Fits a uniform subsample of total size `r0`.
pub fn pilot_estimate(
    dataset: &ShardedDataset,
    r0: usize,
    grid: &QuantileGrid,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Pilot> {
    pilot_inner(dataset, r0, grid, seed, opts).stage("pilot")
}

fn pilot_inner(
    dataset: &ShardedDataset,
    r0: usize,
    grid: &QuantileGrid,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Pilot> {
    let floor = 5 * (dataset.p() + grid.len());
    if r0 < floor {
        warn!("pilot size {r0} is below 5(p + M) = {floor}");
    }
    let plan = uniform_plan(dataset, r0)?;
    let draw = draw_subsample(dataset, &plan, pilot_key(seed))?;
    let fit = solve_weighted_cqr(&draw.weighted_sample(dataset)?, grid, None, opts)?;
    Ok(Pilot { theta: fit.theta, plan, draw })
}

/// The main-stage plan of total size `r`. `pilot` is required for L-opt.
pub fn main_plan(
    dataset: &ShardedDataset,
    method: Method,
    pilot: Option<&ThetaEstimate>,
    grid: &QuantileGrid,
    r: usize,
) -> Result<SubsamplingPlan> {
    match (method, pilot) {
        (Method::Uniform, _) => uniform_plan(dataset, r),
        (Method::Lopt, Some(theta)) => lopt_plan(dataset, theta, grid, r),
        (Method::Lopt, None) => Err(Error::InvalidInput("L-optimal plan needs a pilot estimate".into())),
    }
    .stage("plan")
}

pub fn pilot_key(seed: u64) -> StreamKey {
    StreamKey::new(seed).child(label::PILOT)
}

/// Stream for draw `j` of the main plan.
pub fn draw_key(seed: u64, method: Method, j: usize) -> StreamKey {
    let root = StreamKey::new(seed);
    match method {
        Method::Lopt => root.child(label::DRAW).child(j as u64),
        Method::Uniform => root.child(label::UNIFORM).child(label::DRAW).child(j as u64),
    }
}

/// One draw from `sampler` and its weighted fit.
pub fn estimate_with_plan(
    dataset: &ShardedDataset,
    sampler: &PlanSampler<'_>,
    grid: &QuantileGrid,
    init: Option<&ThetaEstimate>,
    key: StreamKey,
    opts: &SolverOptions,
) -> Result<(SubsampleDraw, CqrFit)> {
    let draw = sampler.draw(key);
    let sample = draw.weighted_sample(dataset)?;
    let fit = solve_weighted_cqr(&sample, grid, init, opts)?;
    Ok((draw, fit))
}

#[derive(Debug, Clone)]
pub struct TwoStepEstimate {
    pub pilot: Pilot,
    pub plan: SubsamplingPlan,
    pub draw: SubsampleDraw,
    pub fit: CqrFit,
}

/// Pilot of size `r0`, then a single L-optimal draw of size `r` fitted from
/// the pilot estimate.
pub fn two_step_estimate(
    dataset: &ShardedDataset,
    r0: usize,
    r: usize,
    grid: &QuantileGrid,
    seed: u64,
    opts: &SolverOptions,
) -> Result<TwoStepEstimate> {
    let pilot = pilot_estimate(dataset, r0, grid, seed, opts)?;
    let plan = main_plan(dataset, Method::Lopt, Some(&pilot.theta), grid, r)?;
    let sampler = PlanSampler::new(&plan).stage("plan")?;
    let (draw, fit) =
        estimate_with_plan(dataset, &sampler, grid, Some(&pilot.theta), draw_key(seed, Method::Lopt, 0), opts)
            .map_err(|e| Error::Draw { index: 0, source: Box::new(e) })?;
    Ok(TwoStepEstimate { pilot, plan, draw, fit })
}

/// Fits draws `0..b` of `plan` concurrently, all started from `init`.
/// Results are in draw order; the first failing draw aborts the batch.
#[allow(clippy::too_many_arguments)]
pub fn fit_draws(
    dataset: &ShardedDataset,
    plan: &SubsamplingPlan,
    method: Method,
    b: usize,
    grid: &QuantileGrid,
    init: Option<&ThetaEstimate>,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<CqrFit>> {
    plan.validate(dataset)?;
    let sampler = PlanSampler::new(plan)?;
    let results: Vec<Result<CqrFit>> = (0..b)
        .into_par_iter()
        .map(|j| estimate_with_plan(dataset, &sampler, grid, init, draw_key(seed, method, j), opts).map(|(_, fit)| fit))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Draw { index, source: Box::new(e) }))
        .collect()
}

/// `(1/K) sum_k (1 - (r_k B - 1) / 2 * sum_i pi_ik^2)`, clamped to `(0, 1]`.
pub fn effective_sample_ratio(plan: &SubsamplingPlan, b: usize) -> f64 {
    let k = plan.num_shards() as f64;
    let raw: f64 = plan
        .shards
        .iter()
        .map(|s| {
            let sq: f64 = s.probabilities.iter().map(|p| p * p).sum();
            1.0 - (s.allocation as f64 * b as f64 - 1.0) / 2.0 * sq
        })
        .sum::<f64>()
        / k;
    if raw <= R_EF_FLOOR {
        warn!("effective sample ratio {raw} is not positive; using {R_EF_FLOOR}");
        R_EF_FLOOR
    } else {
        raw.min(1.0)
    }
}

/// Mean of the per-draw estimates and `sum_j d_j d_j' / (r_ef B (B - 1))`.
pub fn combine_draws(per_draw: &[ThetaEstimate], r_ef: f64) -> Result<(ThetaEstimate, DMatrix<f64>)> {
    let b = per_draw.len();
    if b < 2 {
        return Err(Error::InvalidInput(format!("need at least two draws, got {b}")));
    }
    let p = per_draw[0].beta.len();
    let stacked: Vec<Vec<f64>> = per_draw.iter().map(ThetaEstimate::stacked).collect();
    let d = stacked[0].len();
    if stacked.iter().any(|v| v.len() != d) {
        return Err(Error::Dimension("per-draw estimates differ in length".into()));
    }
    let mut mean = vec![0.0; d];
    for v in &stacked {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= b as f64;
    }
    let mut omega = DMatrix::<f64>::zeros(d, d);
    for v in &stacked {
        let dev = nalgebra::DVector::from_iterator(d, v.iter().zip(&mean).map(|(x, m)| x - m));
        omega.ger(1.0, &dev, &dev, 1.0);
    }
    omega /= r_ef * b as f64 * (b as f64 - 1.0);
    Ok((ThetaEstimate::from_stacked(p, &mean), omega))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedEstimate {
    pub method: Method,
    pub theta_l: ThetaEstimate,
    pub per_draw: Vec<ThetaEstimate>,
    /// Row-major `(p + M) x (p + M)` covariance estimate of `theta_l`.
    pub omega_hat: Vec<Vec<f64>>,
    pub r_ef: f64,
    pub b: usize,
    pub r0: usize,
    pub r: usize,
    pub pilot: Option<ThetaEstimate>,
    pub allocations: Vec<usize>,
}

impl CombinedEstimate {
    pub fn from_fits(
        method: Method,
        per_draw: Vec<ThetaEstimate>,
        plan: &SubsamplingPlan,
        r0: usize,
        pilot: Option<ThetaEstimate>,
    ) -> Result<Self> {
        let b = per_draw.len();
        let r_ef = effective_sample_ratio(plan, b);
        let (theta_l, omega) = combine_draws(&per_draw, r_ef)?;
        let omega_hat = omega.row_iter().map(|row| row.iter().copied().collect()).collect();
        Ok(CombinedEstimate {
            method,
            theta_l,
            per_draw,
            omega_hat,
            r_ef,
            b,
            r0,
            r: plan.total,
            pilot,
            allocations: plan.allocations(),
        })
    }

    pub fn omega_diagonal(&self) -> Vec<f64> {
        self.omega_hat.iter().enumerate().map(|(i, row)| row[i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MultiDrawOptions {
    pub method: Method,
    pub r0: usize,
    pub r: usize,
    pub b: usize,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct MultiDrawRun {
    pub estimate: CombinedEstimate,
    pub plan: SubsamplingPlan,
    pub fits: Vec<CqrFit>,
}

/// One pilot (L-opt only), one plan, `B` independent draws and fits.
pub fn multi_draw_estimate(
    dataset: &ShardedDataset,
    grid: &QuantileGrid,
    seed: u64,
    opts: &MultiDrawOptions,
) -> Result<MultiDrawRun> {
    if opts.b < 2 {
        return Err(Error::InvalidInput(format!("B must be at least 2, got {}", opts.b)));
    }
    let pilot = match opts.method {
        Method::Lopt => Some(pilot_estimate(dataset, opts.r0, grid, seed, &opts.solver)?.theta),
        Method::Uniform => None,
    };
    let plan = main_plan(dataset, opts.method, pilot.as_ref(), grid, opts.r)?;
    let fits = fit_draws(dataset, &plan, opts.method, opts.b, grid, pilot.as_ref(), seed, &opts.solver)?;
    let per_draw = fits.iter().map(|f| f.theta.clone()).collect();
    let r0 = if pilot.is_some() { opts.r0 } else { 0 };
    let estimate = CombinedEstimate::from_fits(opts.method, per_draw, &plan, r0, pilot)?;
    Ok(MultiDrawRun { estimate, plan, fits })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `z_{1 - alpha/2}` for the standard normal.
pub fn normal_critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(1.0 - alpha / 2.0))
}

/// `theta_l[s] +- sqrt(omega_ss) z_{1 - alpha/2}` for every coordinate of `(beta', b')'`.
pub fn confidence_intervals(est: &CombinedEstimate, alpha: f64) -> Result<Vec<Interval>> {
    let z = normal_critical_value(alpha)?;
    let theta = est.theta_l.stacked();
    let diag = est.omega_diagonal();
    if diag.len() != theta.len() {
        return Err(Error::Dimension("omega_hat does not match theta".into()));
    }
    theta
        .iter()
        .zip(diag)
        .enumerate()
        .map(|(s, (&t, w))| {
            if w.is_nan() || w < 0.0 {
                return Err(Error::InvalidInput(format!("omega_hat has negative diagonal entry {w} at {s}")));
            }
            let half = w.sqrt() * z;
            Ok(Interval { estimate: t, lower: t - half, upper: t + half })
        })
        .collect()
}
