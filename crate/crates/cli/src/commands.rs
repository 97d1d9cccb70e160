use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cqrsub::cqr::{solve_weighted_cqr, SolverOptions};
use cqrsub::diagnostics::{v_pi_trace, v_pi_trace_lower_bound};
use cqrsub::simgen::{run_experiment, ExperimentReport};
use cqrsub::subsampling::{lopt_probabilities, lopt_real_allocations, SubsamplingPlan};
use cqrsub::two_step::{
    confidence_intervals, draw_key, main_plan, multi_draw_estimate, pilot_estimate, pilot_key, Method, MultiDrawOptions,
};
use cqrsub::{QuantileGrid, ShardedDataset, ThetaEstimate, WeightedSample};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SimRunConfig};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_shards, Schema, ShardSource};
use crate::normalize::{normalize, Transform};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.to_path_buf(), source: e })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let out = |e: std::io::Error| CliError::Output { path: path.to_path_buf(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(out)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| out(e.into()))?;
    writeln!(w).map_err(out)?;
    w.flush().map_err(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let out = |e: csv::Error| CliError::Output { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(out)?;
    for r in rows {
        w.serialize(r).map_err(out)?;
    }
    w.flush().map_err(|e| CliError::Output { path: path.to_path_buf(), source: e })
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Lopt => "lopt",
        Method::Uniform => "uniform",
    }
}

/// Names of the stacked parameter vector: covariates, then `b_1..b_M`.
pub fn parameter_names(schema: &Schema, m: usize) -> Vec<String> {
    let mut names = schema.covariates.clone();
    names.extend((1..=m).map(|j| format!("b_{j}")));
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterInterval {
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub length: f64,
}

impl ParameterInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Seeds of the random streams actually used, derived from `master`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub master: u64,
    pub pilot: Option<u64>,
    pub draws: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub shards: Vec<ShardSource>,
    pub rows: usize,
    pub rows_dropped: usize,
    pub schema: Schema,
    pub normalization: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub method: Method,
    pub taus: QuantileGrid,
    pub r0: usize,
    pub r: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seeds: StreamSeeds,
    pub input: InputSummary,
    pub allocations: Vec<usize>,
    pub theta_l: ThetaEstimate,
    pub intervals: Vec<ParameterInterval>,
    pub r_ef: f64,
    pub omega_hat: Vec<Vec<f64>>,
    pub pilot: Option<ThetaEstimate>,
    /// Draws whose fit carries an optimality certificate.
    pub certified_draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

/// Wall-clock times, kept out of the result files so those are reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub schema_version: u32,
    pub stages: Vec<StageTime>,
}

impl Timings {
    fn new() -> Self {
        Timings { schema_version: OUTPUT_SCHEMA_VERSION, stages: Vec::new() }
    }

    fn record(&mut self, stage: &str, since: Instant) -> Instant {
        self.stages.push(StageTime { stage: stage.to_string(), seconds: since.elapsed().as_secs_f64() });
        Instant::now()
    }
}

struct Prepared {
    dataset: ShardedDataset,
    input: InputSummary,
}

fn prepare(cfg: &RunConfig, timings: &mut Timings) -> CliResult<Prepared> {
    let t = Instant::now();
    let ing = ingest_shards(&cfg.shards, &cfg.columns)?;
    info!("read {} shards, {} rows, {} dropped", ing.dataset.num_shards(), ing.dataset.total_len(), ing.rows_dropped());
    let t = timings.record("ingest", t);
    let (dataset, normalization) = if cfg.normalize.is_empty() {
        (ing.dataset, Transform::default())
    } else {
        normalize(&ing.dataset, &ing.schema, &cfg.normalize)?
    };
    timings.record("normalize", t);
    let input = InputSummary {
        rows: dataset.total_len(),
        rows_dropped: ing.sources.iter().map(|s| s.rows_dropped).sum(),
        shards: ing.sources,
        schema: ing.schema,
        normalization,
    };
    Ok(Prepared { dataset, input })
}

pub struct EstimateOutput {
    pub report: EstimateReport,
    pub result_path: PathBuf,
}

/// ingest, normalize, B-draw estimate, intervals; writes `result.json`,
/// `per_draw.csv` and `timings.json` under `cfg.out`.
pub fn estimate(cfg: &RunConfig) -> CliResult<EstimateOutput> {
    let mut timings = Timings::new();
    let start = Instant::now();
    let Prepared { dataset, input } = prepare(cfg, &mut timings)?;
    create_dir(&cfg.out)?;

    let t = Instant::now();
    let opts =
        MultiDrawOptions { method: cfg.method, r0: cfg.r0, r: cfg.r, b: cfg.b, solver: SolverOptions::default() };
    let run = multi_draw_estimate(&dataset, &cfg.grid, cfg.seed, &opts)?;
    let est = run.estimate;
    let ci = confidence_intervals(&est, cfg.alpha)?;
    let t = timings.record("estimate", t);

    let names = parameter_names(&input.schema, cfg.grid.len());
    let intervals = names
        .iter()
        .zip(&ci)
        .map(|(name, c)| ParameterInterval {
            name: name.clone(),
            estimate: c.estimate,
            lower: c.lower,
            upper: c.upper,
            length: c.length(),
        })
        .collect();
    let seeds = StreamSeeds {
        master: cfg.seed,
        pilot: est.pilot.as_ref().map(|_| pilot_key(cfg.seed).seed()),
        draws: (0..cfg.b).map(|j| draw_key(cfg.seed, cfg.method, j).seed()).collect(),
    };
    let report = EstimateReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        method: cfg.method,
        taus: cfg.grid.clone(),
        r0: est.r0,
        r: est.r,
        b: est.b,
        alpha: cfg.alpha,
        seeds,
        input,
        allocations: est.allocations.clone(),
        theta_l: est.theta_l.clone(),
        intervals,
        r_ef: est.r_ef,
        omega_hat: est.omega_hat.clone(),
        pilot: est.pilot.clone(),
        certified_draws: run.fits.iter().filter(|f| f.certified).count(),
    };

    let result_path = cfg.out.join("result.json");
    write_json(&result_path, &report)?;
    let per_draw_path = cfg.out.join("per_draw.csv");
    let mut header = vec!["draw".to_string()];
    header.extend(names);
    let rows = est.per_draw.iter().enumerate().map(|(j, theta)| {
        let mut row = vec![j.to_string()];
        row.extend(theta.stacked().iter().map(f64::to_string));
        row
    });
    write_csv(&per_draw_path, std::iter::once(header).chain(rows))?;
    timings.record("write", t);
    timings.record("total", start);
    write_json(&cfg.out.join("timings.json"), &timings)?;
    Ok(EstimateOutput { report, result_path })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub schema_version: u32,
    pub method: Method,
    pub seed: u64,
    pub r0: usize,
    pub taus: QuantileGrid,
    pub input: InputSummary,
    pub pilot: Option<ThetaEstimate>,
    pub plan: SubsamplingPlan,
}

/// Builds the main subsampling plan (after a pilot for L-opt) and writes `plan.json`.
pub fn plan(cfg: &RunConfig) -> CliResult<(PlanReport, PathBuf)> {
    let mut timings = Timings::new();
    let Prepared { dataset, input } = prepare(cfg, &mut timings)?;
    create_dir(&cfg.out)?;
    let pilot = match cfg.method {
        Method::Lopt => Some(pilot_estimate(&dataset, cfg.r0, &cfg.grid, cfg.seed, &SolverOptions::default())?.theta),
        Method::Uniform => None,
    };
    let plan = main_plan(&dataset, cfg.method, pilot.as_ref(), &cfg.grid, cfg.r)?;
    let report = PlanReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        method: cfg.method,
        seed: cfg.seed,
        r0: if pilot.is_some() { cfg.r0 } else { 0 },
        taus: cfg.grid.clone(),
        input,
        pilot,
        plan,
    };
    let path = cfg.out.join("plan.json");
    write_json(&path, &report)?;
    Ok((report, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub schema_version: u32,
    pub taus: QuantileGrid,
    pub input: InputSummary,
    /// Full-data CQR fit; the variance traces are evaluated here.
    pub full_fit: ThetaEstimate,
    pub full_fit_certified: bool,
    /// `tr(V_pi)` for uniform probabilities and proportional real allocations.
    pub trace_uniform: f64,
    /// `tr(V_pi)` at the L-optimal probabilities and real allocations.
    pub trace_lopt: f64,
    /// Closed-form minimum of `tr(V_pi)`; equals `trace_lopt` up to rounding.
    pub trace_lower_bound: f64,
    pub uniform_over_lopt: f64,
}

/// Fits the full data set and compares `tr(V_pi)` under uniform and L-opt
/// sampling. Meant for inputs small enough to fit directly.
pub fn diagnose(cfg: &RunConfig) -> CliResult<(DiagnoseReport, PathBuf)> {
    let mut timings = Timings::new();
    let Prepared { dataset, input } = prepare(cfg, &mut timings)?;
    create_dir(&cfg.out)?;
    let p = dataset.p();
    let mut full = WeightedSample::with_capacity(p, dataset.total_len());
    for s in dataset.shards() {
        for (y, x) in s.rows() {
            full.push(y, x, 1.0)?;
        }
    }
    let fit = solve_weighted_cqr(&full, &cfg.grid, None, &SolverOptions::default())?;
    let theta = fit.theta;
    let n = dataset.total_len() as f64;
    let uniform_probs: Vec<Vec<f64>> = dataset.shards().iter().map(|s| vec![1.0 / s.len() as f64; s.len()]).collect();
    let prop_alloc: Vec<f64> = dataset.shards().iter().map(|s| cfg.r as f64 * s.len() as f64 / n).collect();
    let trace_uniform = v_pi_trace(&dataset, &uniform_probs, &prop_alloc, &theta, &cfg.grid)?;
    let lopt_probs = dataset
        .shards()
        .iter()
        .map(|s| lopt_probabilities(s, &theta, &cfg.grid))
        .collect::<cqrsub::Result<Vec<_>>>()?;
    let lopt_alloc = lopt_real_allocations(&dataset, &theta, &cfg.grid, cfg.r as f64)?;
    let trace_lopt = v_pi_trace(&dataset, &lopt_probs, &lopt_alloc, &theta, &cfg.grid)?;
    let trace_lower_bound = v_pi_trace_lower_bound(&dataset, &theta, &cfg.grid)?;
    let report = DiagnoseReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        taus: cfg.grid.clone(),
        input,
        full_fit: theta,
        full_fit_certified: fit.certified,
        trace_uniform,
        trace_lopt,
        trace_lower_bound,
        uniform_over_lopt: trace_uniform / trace_lopt,
    };
    let path = cfg.out.join("diagnostics.json");
    write_json(&path, &report)?;
    Ok((report, path))
}

/// Runs the Monte Carlo experiment; writes `summary.json`, per-replication
/// CSVs and summary tables.
pub fn simulate(cfg: &SimRunConfig) -> CliResult<ExperimentReport> {
    let mut timings = Timings::new();
    let t = Instant::now();
    create_dir(&cfg.out)?;
    let report = run_experiment(&cfg.sim)?;
    let t = timings.record("experiment", t);
    write_json(&cfg.out.join("summary.json"), &report)?;
    write_csv(&cfg.out.join("method_summary.csv"), &report.method_summaries)?;
    write_csv(&cfg.out.join("multi_summary.csv"), &report.multi_summaries)?;
    let p = cfg.sim.p;
    let beta_header = (1..=p).map(|j| format!("beta_{j}"));
    let single = std::iter::once(
        ["rep", "method", "r", "sq_error"].iter().map(|s| s.to_string()).chain(beta_header.clone()).collect::<Vec<_>>(),
    )
    .chain(report.single.iter().map(|row| {
        [row.rep.to_string(), method_name(row.method).to_string(), row.r.to_string(), row.sq_error.to_string()]
            .into_iter()
            .chain(row.beta.iter().map(f64::to_string))
            .collect()
    }));
    write_csv(&cfg.out.join("single_draw.csv"), single)?;
    let multi = std::iter::once(
        ["rep", "B", "r", "sq_error", "est_sq_error", "r_ef", "covers_beta_1", "ci_length_beta_1"]
            .iter()
            .map(|s| s.to_string())
            .chain(beta_header)
            .collect::<Vec<_>>(),
    )
    .chain(report.multi.iter().map(|row| {
        [
            row.rep.to_string(),
            row.b.to_string(),
            row.r.to_string(),
            row.sq_error.to_string(),
            row.est_sq_error.to_string(),
            row.r_ef.to_string(),
            row.covers_beta1.to_string(),
            row.ci_length_beta1.to_string(),
        ]
        .into_iter()
        .chain(row.beta.iter().map(f64::to_string))
        .collect()
    }));
    write_csv(&cfg.out.join("multi_draw.csv"), multi)?;
    timings.record("write", t);
    write_json(&cfg.out.join("timings.json"), &timings)?;
    Ok(report)
}
