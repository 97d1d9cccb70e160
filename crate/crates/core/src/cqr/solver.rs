//! Weighted CQR solver.
//!
//! The check loss is replaced by a Huberized version with bandwidth `h` and
//! the smooth objective is minimized by damped Newton steps. `h` starts at
//! the scale of the initial residuals and shrinks by `smoothing_factor` per
//! stage. Since `0 <= rho_h - rho <= h/4`, a converged stage leaves the exact
//! objective within `W M h / 4` of the optimum (`W` = total weight), which
//! gives the stopping rule.
//!
//! After each stage the smallest residuals are taken as a candidate basis of
//! `p + M` zero residuals. The vertex they define is accepted when it lowers
//! the exact objective, and if a subgradient of the exact objective vanishes
//! there the solve stops early with a certified minimizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::loss::{dot, objective_unchecked, smooth_check};
use super::{psi, QuantileGrid, ThetaEstimate, WeightedSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    /// Rank-deficient designs are an error.
    Error,
    /// Fit in the identifiable subspace and return the minimum-norm minimizer.
    MinimumNorm,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative bound on `obj(theta) - min obj` at termination.
    pub tol_obj: f64,
    /// Newton steps smaller than this (relative to `1 + |theta|_inf`) end a stage.
    pub tol_param: f64,
    /// Cap on the total number of Newton iterations across stages.
    pub max_iterations: usize,
    pub smoothing_factor: f64,
    pub rank_policy: RankPolicy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_obj: 1e-8,
            tol_param: 1e-9,
            max_iterations: 500,
            smoothing_factor: 10.0,
            rank_policy: RankPolicy::Error,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CqrFit {
    pub theta: ThetaEstimate,
    /// Exact (unsmoothed) objective at `theta`.
    pub objective: f64,
    pub iterations: usize,
    pub stages: usize,
    /// A zero subgradient was verified at `theta`.
    pub certified: bool,
    /// The design was rank deficient and the minimum-norm fallback was used.
    pub rank_deficient: bool,
}

/// Minimize `sum_i w_i sum_m rho_{tau_m}(y_i - x_i' beta - b_m)`.
///
/// `init` defaults to weighted least squares for the slopes and weighted
/// quantiles of its residuals for the intercepts.
pub fn solve_weighted_cqr(
    data: &WeightedSample,
    grid: &QuantileGrid,
    init: Option<&ThetaEstimate>,
    opts: &SolverOptions,
) -> Result<CqrFit> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no observations to fit".into()));
    }
    let p = data.p();
    let taus = grid.levels();
    let m = taus.len();
    if let Some(t) = init {
        t.check_dims(p, m)?;
        ThetaEstimate::new(t.beta.clone(), t.b.clone())?;
    }

    let design = DesignCheck::new(data);
    let rank_deficient = design.rank < p + 1;
    if rank_deficient && opts.rank_policy == RankPolicy::Error {
        return Err(Error::SingularDesign { rank: design.rank, expected: p + 1 });
    }

    let mut theta = match init {
        Some(t) => t.stacked(),
        None => default_init(data, taus, &design),
    };
    let null_basis = if rank_deficient { design.theta_null_basis(m) } else { Vec::new() };

    let mut solver = Newton::new(data, taus, rank_deficient);
    let total_weight: f64 = data.weights().iter().sum();
    let mut objective = objective_unchecked(&theta[..p], &theta[p..], data, taus);
    let zero_level = 1e-14 * total_weight * m as f64 * (1.0 + mean_abs(data.y()));

    let mut fit = CqrFit {
        theta: ThetaEstimate::zeros(p, m),
        objective,
        iterations: 0,
        stages: 0,
        certified: false,
        rank_deficient,
    };

    if objective <= zero_level {
        fit.certified = true;
    } else {
        let mut h = objective / (total_weight * m as f64);
        loop {
            let converged = solver.minimize_stage(&mut theta, h, opts, &mut fit.iterations)?;
            fit.stages += 1;
            objective = objective_unchecked(&theta[..p], &theta[p..], data, taus);

            if !rank_deficient {
                if let Some(vertex) = polish(data, taus, &theta) {
                    if vertex.objective <= objective {
                        theta = vertex.theta;
                        objective = vertex.objective;
                        if vertex.certified || objective <= zero_level {
                            fit.certified = true;
                            break;
                        }
                    }
                }
            }

            let bound = total_weight * m as f64 * h / 4.0;
            if converged && bound <= opts.tol_obj * objective.max(zero_level) {
                break;
            }
            if fit.iterations >= opts.max_iterations {
                return Err(Error::NonConvergence { iterations: fit.iterations });
            }
            h /= opts.smoothing_factor;
        }
    }

    if rank_deficient {
        project_out(&mut theta, &null_basis);
        objective = objective_unchecked(&theta[..p], &theta[p..], data, taus);
    }
    fit.theta = ThetaEstimate::from_stacked(p, &theta);
    fit.objective = objective;
    Ok(fit)
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len().max(1) as f64
}

/// Eigen-analysis of the column-scaled weighted cross-product of `(x, 1)`.
struct DesignCheck {
    rank: usize,
    /// Null directions `(v, c)` with `x_i' v + c = 0` for every row.
    null: Vec<DVector<f64>>,
    /// Pseudo-inverse of the weighted cross-product, for the least-squares start.
    pinv: DMatrix<f64>,
}

impl DesignCheck {
    fn new(data: &WeightedSample) -> Self {
        let p = data.p();
        let d = p + 1;
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut z = vec![0.0; d];
        for i in 0..data.len() {
            z[..p].copy_from_slice(data.row(i));
            z[p] = 1.0;
            let w = data.weights()[i];
            for s in 0..d {
                for t in 0..=s {
                    a[(s, t)] += w * z[s] * z[t];
                }
            }
        }
        for s in 0..d {
            for t in 0..s {
                a[(t, s)] = a[(s, t)];
            }
        }
        let scale: Vec<f64> = (0..d).map(|s| if a[(s, s)] > 0.0 { 1.0 / a[(s, s)].sqrt() } else { 0.0 }).collect();
        let mut scaled = a.clone();
        for s in 0..d {
            for t in 0..d {
                scaled[(s, t)] *= scale[s] * scale[t];
            }
        }
        let eig = SymmetricEigen::new(scaled);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let thresh = 1e-10 * top.max(f64::MIN_POSITIVE);
        let mut rank = 0;
        let mut null = Vec::new();
        let mut pinv_scaled = DMatrix::<f64>::zeros(d, d);
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(j).into_owned();
            if lambda > thresh {
                rank += 1;
                pinv_scaled += &v * v.transpose() / lambda;
            } else {
                null.push(v);
            }
        }
        // Columns that are identically zero carry no scale and are null directions too.
        for s in 0..d {
            if scale[s] == 0.0 && !null.iter().any(|v| v[s].abs() > 0.5) {
                let mut e = DVector::zeros(d);
                e[s] = 1.0;
                null.push(e);
            }
        }
        let mut pinv = pinv_scaled;
        for s in 0..d {
            for t in 0..d {
                pinv[(s, t)] *= scale[s] * scale[t];
            }
        }
        // Undo the column scaling on the null vectors: null space of A is D^{1/2}-scaled.
        let null = null
            .into_iter()
            .map(|v| {
                let mut u = v.clone();
                for s in 0..d {
                    u[s] = if scale[s] > 0.0 { v[s] * scale[s] } else { v[s] };
                }
                u
            })
            .collect();
        DesignCheck { rank, null, pinv }
    }

    /// Orthonormal basis of the directions `(v, c 1_M)` that leave every fitted value unchanged.
    fn theta_null_basis(&self, m: usize) -> Vec<Vec<f64>> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in &self.null {
            let p = v.len() - 1;
            let mut u: Vec<f64> = v.iter().take(p).cloned().collect();
            u.extend(std::iter::repeat_n(v[p], m));
            for q in &basis {
                let c = dot(&u, q);
                u.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let norm = dot(&u, &u).sqrt();
            if norm > 1e-12 {
                u.iter_mut().for_each(|a| *a /= norm);
                basis.push(u);
            }
        }
        basis
    }
}

fn project_out(theta: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(theta, q);
        theta.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
}

fn default_init(data: &WeightedSample, taus: &[f64], design: &DesignCheck) -> Vec<f64> {
    let p = data.p();
    let mut rhs = DVector::<f64>::zeros(p + 1);
    for i in 0..data.len() {
        let wy = data.weights()[i] * data.y()[i];
        for (j, xj) in data.row(i).iter().enumerate() {
            rhs[j] += wy * xj;
        }
        rhs[p] += wy;
    }
    let coef = &design.pinv * rhs;
    let beta: Vec<f64> = coef.iter().take(p).cloned().collect();
    let mut resid: Vec<(f64, f64)> =
        (0..data.len()).map(|i| (data.y()[i] - dot(data.row(i), &beta), data.weights()[i])).collect();
    resid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = resid.iter().map(|r| r.1).sum();
    let mut theta = beta;
    let mut cum = 0.0;
    let mut idx = 0;
    for &tau in taus {
        while idx + 1 < resid.len() && cum + resid[idx].1 < tau * total {
            cum += resid[idx].1;
            idx += 1;
        }
        theta.push(resid[idx].0);
    }
    theta
}

/// Newton iterations for the smoothed objective, with reusable buffers.
struct Newton<'a> {
    data: &'a WeightedSample,
    taus: &'a [f64],
    ridge_always: bool,
    damping: f64,
    resid: Vec<f64>,
    trial: Vec<f64>,
}

impl<'a> Newton<'a> {
    fn new(data: &'a WeightedSample, taus: &'a [f64], ridge_always: bool) -> Self {
        Newton {
            data,
            taus,
            ridge_always,
            damping: 1e-3,
            resid: vec![0.0; data.len()],
            trial: vec![0.0; data.p() + taus.len()],
        }
    }

    fn smooth_value(&mut self, theta: &[f64], h: f64) -> f64 {
        let p = self.data.p();
        let mut total = 0.0;
        for i in 0..self.data.len() {
            let e = self.data.y()[i] - dot(self.data.row(i), &theta[..p]);
            let mut row = 0.0;
            for (bm, &tau) in theta[p..].iter().zip(self.taus) {
                row += smooth_check(e - bm, tau, h).0;
            }
            total += self.data.weights()[i] * row;
        }
        total
    }

    /// Returns whether the stage met its step-size criterion.
    fn minimize_stage(
        &mut self,
        theta: &mut [f64],
        h: f64,
        opts: &SolverOptions,
        iterations: &mut usize,
    ) -> Result<bool> {
        let data = self.data;
        let p = data.p();
        let m = self.taus.len();
        let d = p + m;
        let mut value = self.smooth_value(theta, h);
        let per_stage_cap = 60;
        for _ in 0..per_stage_cap {
            if *iterations >= opts.max_iterations {
                return Ok(false);
            }
            *iterations += 1;

            let mut grad = vec![0.0; d];
            let mut hess = DMatrix::<f64>::zeros(d, d);
            for i in 0..data.len() {
                let x = data.row(i);
                let w = data.weights()[i];
                let e = data.y()[i] - dot(x, &theta[..p]);
                self.resid[i] = e;
                let mut slope_sum = 0.0;
                let mut curv_sum = 0.0;
                for mm in 0..m {
                    let u = e - theta[p + mm];
                    let (_, d1, d2) = smooth_check(u, self.taus[mm], h);
                    // exact curvature in the band, a small majorizing curvature outside it
                    let metric = d2 + self.damping * 0.5 / u.abs().max(h);
                    slope_sum += d1;
                    curv_sum += metric;
                    grad[p + mm] -= w * d1;
                    hess[(p + mm, p + mm)] += w * metric;
                    if metric != 0.0 {
                        for j in 0..p {
                            hess[(j, p + mm)] += w * metric * x[j];
                        }
                    }
                }
                for j in 0..p {
                    grad[j] -= w * slope_sum * x[j];
                }
                let c = w * curv_sum;
                for s in 0..p {
                    let cs = c * x[s];
                    for t in 0..=s {
                        hess[(s, t)] += cs * x[t];
                    }
                }
            }
            for s in 0..p {
                for t in 0..s {
                    hess[(t, s)] = hess[(s, t)];
                }
            }
            for s in p..d {
                for t in 0..p {
                    hess[(s, t)] = hess[(t, s)];
                }
            }

            let step = self.newton_direction(hess, &grad)?;
            let slope: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if slope >= 0.0 {
                return Ok(true);
            }

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                for j in 0..d {
                    self.trial[j] = theta[j] + t * step[j];
                }
                let trial = std::mem::take(&mut self.trial);
                let v = self.smooth_value(&trial, h);
                self.trial = trial;
                if v <= value + 1e-4 * t * slope {
                    accepted = Some(v);
                    break;
                }
                t *= 0.5;
            }
            let Some(new_value) = accepted else {
                // no decrease along the direction: the stage is at its floor numerically
                return Ok(true);
            };
            if t == 1.0 {
                self.damping = (self.damping * 0.3).max(1e-8);
            } else {
                self.damping = (self.damping * 10.0).min(1.0);
            }
            theta.copy_from_slice(&self.trial);
            let decrease = value - new_value;
            value = new_value;

            let step_inf = step.iter().fold(0.0_f64, |a, s| a.max(s.abs())) * t;
            let scale = 1.0 + theta.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
            if step_inf <= opts.tol_param * scale || decrease <= 1e-15 * value.abs() {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn newton_direction(&self, hess: DMatrix<f64>, grad: &[f64]) -> Result<Vec<f64>> {
        let d = grad.len();
        let g = DVector::from_column_slice(grad);
        let trace: f64 = (0..d).map(|s| hess[(s, s)]).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut ridge = if self.ridge_always { 1e-10 * trace / d as f64 } else { 0.0 };
        for _ in 0..12 {
            let mut h = hess.clone();
            for s in 0..d {
                h[(s, s)] += ridge;
            }
            if let Some(chol) = h.cholesky() {
                let step = chol.solve(&(-&g));
                if step.iter().all(|v| v.is_finite()) {
                    return Ok(step.iter().cloned().collect());
                }
            }
            ridge = if ridge == 0.0 { 1e-12 * trace / d as f64 } else { ridge * 100.0 };
        }
        Err(Error::NonConvergence { iterations: 0 })
    }
}

struct Vertex {
    theta: Vec<f64>,
    objective: f64,
    certified: bool,
}

/// Candidate vertex from the `p + M` smallest linearly independent residuals,
/// with a check of the exact subgradient condition there.
fn polish(data: &WeightedSample, taus: &[f64], theta: &[f64]) -> Option<Vertex> {
    let p = data.p();
    let m = taus.len();
    let d = p + m;
    let n = data.len();
    let total = n * m;
    if total < d {
        return None;
    }

    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(total);
    for i in 0..n {
        let e = data.y()[i] - dot(data.row(i), &theta[..p]);
        for mm in 0..m {
            cand.push(((e - theta[p + mm]).abs(), i * m + mm));
        }
    }
    let head = (4 * d).min(total);
    if head < total {
        cand.select_nth_unstable_by(head - 1, |a, b| a.0.total_cmp(&b.0));
    }
    cand[..head].sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let x_tilde = |idx: usize| -> Vec<f64> {
        let (i, mm) = (idx / m, idx % m);
        let mut v = vec![0.0; d];
        v[..p].copy_from_slice(data.row(i));
        v[p + mm] = 1.0;
        v
    };

    // greedy independent set by modified Gram-Schmidt
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut basis: Vec<usize> = Vec::with_capacity(d);
    let mut sorted_all = false;
    let mut pos = 0;
    while basis.len() < d {
        if pos == head && !sorted_all {
            cand[head..].sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            sorted_all = true;
        }
        if pos >= total {
            return None;
        }
        let idx = cand[pos].1;
        pos += 1;
        let v = x_tilde(idx);
        let norm0 = dot(&v, &v).sqrt();
        let mut u = v;
        for q in &ortho {
            let c = dot(&u, q);
            u.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = dot(&u, &u).sqrt();
        if norm > 1e-9 * norm0 {
            u.iter_mut().for_each(|a| *a /= norm);
            ortho.push(u);
            basis.push(idx);
        }
    }

    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for (r, &idx) in basis.iter().enumerate() {
        let v = x_tilde(idx);
        for c in 0..d {
            a[(r, c)] = v[c];
        }
        rhs[r] = data.y()[idx / m];
    }
    let lu = a.clone().lu();
    let sol = lu.solve(&rhs)?;
    let vertex: Vec<f64> = sol.iter().cloned().collect();
    if vertex.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let objective = objective_unchecked(&vertex[..p], &vertex[p..], data, taus);

    // sum over nonbasic terms of w psi x_tilde; basic multipliers must lie in [tau - 1, tau]
    let mut is_basic = vec![false; total];
    for &idx in &basis {
        is_basic[idx] = true;
    }
    let mut g = DVector::<f64>::zeros(d);
    for i in 0..n {
        let x = data.row(i);
        let w = data.weights()[i];
        let e = data.y()[i] - dot(x, &vertex[..p]);
        let mut slope_sum = 0.0;
        for mm in 0..m {
            if is_basic[i * m + mm] {
                continue;
            }
            let s = w * psi(e - vertex[p + mm], taus[mm]);
            slope_sum += s;
            g[p + mm] += s;
        }
        for j in 0..p {
            g[j] += slope_sum * x[j];
        }
    }
    let certified = match a.transpose().lu().solve(&(-g)) {
        Some(z) => basis.iter().enumerate().all(|(r, &idx)| {
            let tau = taus[idx % m];
            let mult = z[r] / data.weights()[idx / m];
            mult >= tau - 1.0 - 1e-9 && mult <= tau + 1e-9
        }),
        None => false,
    };
    Some(Vertex { theta: vertex, objective, certified })
}
