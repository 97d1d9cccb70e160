use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_dataset, ErrorLaw, SimConfig};
use crate::cqr::{SolverOptions, ThetaEstimate};
use crate::error::{Error, Result};
use crate::rng::label;
use crate::two_step::{confidence_intervals, fit_draws, main_plan, pilot_estimate, CombinedEstimate, Method};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// One single-draw fit: replication, method and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleDrawRow {
    pub rep: usize,
    pub method: Method,
    pub r: usize,
    pub beta: Vec<f64>,
    /// `||beta_hat - beta0||^2`.
    pub sq_error: f64,
}

/// The combined estimator from the first `b` draws of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiDrawRow {
    pub rep: usize,
    pub b: usize,
    pub r: usize,
    pub beta: Vec<f64>,
    pub sq_error: f64,
    /// Trace of the slope block of `omega_hat`.
    pub est_sq_error: f64,
    pub r_ef: f64,
    pub covers_beta1: bool,
    pub ci_length_beta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub r: usize,
    pub replications: usize,
    /// Mean of `beta1_hat - beta0_1`.
    pub bias: f64,
    pub se_bias: f64,
    pub sd: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiDrawSummary {
    pub b: usize,
    pub r: usize,
    pub replications: usize,
    pub emse: f64,
    pub amse: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: SimConfig,
    pub single: Vec<SingleDrawRow>,
    pub multi: Vec<MultiDrawRow>,
    pub method_summaries: Vec<MethodSummary>,
    pub multi_summaries: Vec<MultiDrawSummary>,
    pub failures: Vec<ReplicationFailure>,
}

fn solver_options(error: ErrorLaw) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if error == ErrorLaw::Cauchy {
        opts.max_iterations = 2000;
    }
    opts
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

struct Replication {
    single: Vec<SingleDrawRow>,
    multi: Vec<MultiDrawRow>,
}

fn replicate(config: &SimConfig, rep: usize) -> Result<Replication> {
    let (data, theta0) = generate_dataset(config, rep)?;
    let key = config.replication_key(rep).child(label::MAIN);
    let grid = &config.grid;
    let opts = solver_options(config.error);
    let pilot = pilot_estimate(&data, config.r0, grid, key.seed(), &opts)?.theta;

    let mut single = Vec::with_capacity(2 * config.r_values.len());
    for &r in &config.r_values {
        let seed = key.child(r as u64).seed();
        for method in [Method::Uniform, Method::Lopt] {
            let plan = main_plan(&data, method, Some(&pilot), grid, r)?;
            let fit = fit_draws(&data, &plan, method, 1, grid, Some(&pilot), seed, &opts)?.remove(0);
            single.push(SingleDrawRow {
                rep,
                method,
                r,
                sq_error: sq_dist(&fit.theta.beta, &theta0.beta),
                beta: fit.theta.beta,
            });
        }
    }

    let mut multi = Vec::with_capacity(config.b_values.len());
    if let Some(&b_max) = config.b_values.iter().max() {
        let r = config.multi_r;
        let plan = main_plan(&data, Method::Lopt, Some(&pilot), grid, r)?;
        let seed = key.child(label::DRAW).seed();
        let thetas: Vec<ThetaEstimate> = fit_draws(&data, &plan, Method::Lopt, b_max, grid, Some(&pilot), seed, &opts)?
            .into_iter()
            .map(|f| f.theta)
            .collect();
        let p = config.p;
        for &b in &config.b_values {
            let est =
                CombinedEstimate::from_fits(Method::Lopt, thetas[..b].to_vec(), &plan, config.r0, Some(pilot.clone()))?;
            let ci = confidence_intervals(&est, config.alpha)?;
            multi.push(MultiDrawRow {
                rep,
                b,
                r,
                sq_error: sq_dist(&est.theta_l.beta, &theta0.beta),
                est_sq_error: (0..p).map(|s| est.omega_hat[s][s]).sum(),
                r_ef: est.r_ef,
                covers_beta1: ci[0].contains(theta0.beta[0]),
                ci_length_beta1: ci[0].length(),
                beta: est.theta_l.beta,
            });
        }
    }
    Ok(Replication { single, multi })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn summarize_single(config: &SimConfig, rows: &[SingleDrawRow]) -> Vec<MethodSummary> {
    let beta1 = config.beta0[0];
    let mut out = Vec::new();
    for method in [Method::Uniform, Method::Lopt] {
        for &r in &config.r_values {
            let sel: Vec<&SingleDrawRow> = rows.iter().filter(|x| x.method == method && x.r == r).collect();
            if sel.is_empty() {
                continue;
            }
            let dev: Vec<f64> = sel.iter().map(|x| x.beta[0] - beta1).collect();
            let sd = sample_sd(&dev);
            out.push(MethodSummary {
                method,
                r,
                replications: sel.len(),
                bias: mean(&dev),
                se_bias: sd / (sel.len() as f64).sqrt(),
                sd,
                mse: mean(&sel.iter().map(|x| x.sq_error).collect::<Vec<_>>()),
            });
        }
    }
    out
}

fn summarize_multi(config: &SimConfig, rows: &[MultiDrawRow]) -> Vec<MultiDrawSummary> {
    config
        .b_values
        .iter()
        .filter_map(|&b| {
            let sel: Vec<&MultiDrawRow> = rows.iter().filter(|x| x.b == b).collect();
            if sel.is_empty() {
                return None;
            }
            let col = |f: fn(&MultiDrawRow) -> f64| mean(&sel.iter().map(|x| f(x)).collect::<Vec<_>>());
            Some(MultiDrawSummary {
                b,
                r: config.multi_r,
                replications: sel.len(),
                emse: col(|x| x.sq_error),
                amse: col(|x| x.est_sq_error),
                coverage: col(|x| if x.covers_beta1 { 1.0 } else { 0.0 }),
                mean_ci_length: col(|x| x.ci_length_beta1),
            })
        })
        .collect()
}

/// Runs every replication, then aggregates. More than 1% failed
/// replications is an error; fewer are reported in `failures`.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let outcomes: Vec<Result<Replication>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let out = replicate(config, rep);
            if rep % 20 == 19 {
                info!("replication {} of {} done", rep + 1, config.replications);
            }
            out
        })
        .collect();

    let mut single = Vec::new();
    let mut multi = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => {
                single.extend(r.single);
                multi.extend(r.multi);
            }
            Err(e) => {
                warn!("replication {rep} failed: {e}");
                failures.push(ReplicationFailure { rep, message: e.to_string() });
            }
        }
    }
    if failures.len() * 100 > config.replications {
        return Err(Error::InvalidInput(format!(
            "{} of {} replications failed; first: {}",
            failures.len(),
            config.replications,
            failures[0].message
        )));
    }
    Ok(ExperimentReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config: config.clone(),
        method_summaries: summarize_single(config, &single),
        multi_summaries: summarize_multi(config, &multi),
        single,
        multi,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::CovariateCase;

    #[test]
    fn zero_noise_has_no_spread() {
        let mut c = SimConfig::new(CovariateCase::I, ErrorLaw::Zero, 2000, 3);
        c.replications = 3;
        c.r_values = vec![200];
        c.b_values = vec![2, 3];
        c.multi_r = 200;
        let report = run_experiment(&c).unwrap();
        for s in &report.method_summaries {
            assert!(s.bias.abs() < 1e-6 && s.sd < 1e-6, "{s:?}");
        }
        for s in &report.multi_summaries {
            assert!(s.emse < 1e-10);
        }
        assert!(report.failures.is_empty());
    }

    #[test]
    fn reproducible() {
        let mut c = SimConfig::new(CovariateCase::II, ErrorLaw::T3, 3000, 3);
        c.replications = 2;
        c.r_values = vec![300];
        c.b_values = vec![3];
        c.multi_r = 300;
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
