//! Reference computations for testing `cqrsub`.
//!
//! Everything here is written the slow, literal way: explicit loops over
//! every observation and quantile level, explicitly stacked covariate
//! vectors, and an exact dense simplex for the linear-programming form of
//! weighted composite quantile regression. None of it shares code with the
//! library under test.

pub mod lp;

/// Check loss evaluated straight from its definition.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    let indicator = if u < 0.0 { 1.0 } else { 0.0 };
    u * (tau - indicator)
}

/// `sum_i w_i sum_m rho_{tau_m}(y_i - x_i' beta - b_m)`, accumulated term by term.
pub fn cqr_objective(y: &[f64], x: &[Vec<f64>], w: &[f64], beta: &[f64], b: &[f64], taus: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..y.len() {
        let mut fit = 0.0;
        for j in 0..beta.len() {
            fit += x[i][j] * beta[j];
        }
        for m in 0..taus.len() {
            total += w[i] * check_loss(y[i] - fit - b[m], taus[m]);
        }
    }
    total
}

/// The stacked vector `sum_m {tau_m - I(eps < b_m)} (x', e_m')'` of length `p + M`.
pub fn stacked_score(x: &[f64], eps: f64, taus: &[f64], b: &[f64]) -> Vec<f64> {
    let p = x.len();
    let big_m = taus.len();
    let mut out = vec![0.0; p + big_m];
    for m in 0..big_m {
        let psi = taus[m] - if eps < b[m] { 1.0 } else { 0.0 };
        // x_tilde_{m} = (x, e_m)
        let mut x_tilde = vec![0.0; p + big_m];
        x_tilde[..p].copy_from_slice(x);
        x_tilde[p + m] = 1.0;
        for (o, v) in out.iter_mut().zip(&x_tilde) {
            *o += psi * v;
        }
    }
    out
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `int_0^v {I(u <= s) - I(u <= 0)} ds`, by case analysis on the signs of `u` and `v`.
pub fn knight_remainder(u: f64, v: f64) -> f64 {
    if v >= 0.0 {
        // s runs over [0, v]; the integrand is nonzero only when 0 < u <= s.
        if u > 0.0 {
            (v - u).max(0.0)
        } else {
            0.0
        }
    } else {
        // s runs over [v, 0] with a negative orientation; integrand is -1 on s < u <= 0.
        if u <= 0.0 {
            (u - v).max(0.0)
        } else {
            0.0
        }
    }
}

/// Variance component matrix built from explicit outer products of stacked
/// score vectors. `rows[k]` holds `(x, eps)` pairs for shard `k`; `alloc[k]`
/// may be fractional.
pub fn v_pi_explicit(
    rows: &[Vec<(Vec<f64>, f64)>],
    probs: &[Vec<f64>],
    alloc: &[f64],
    taus: &[f64],
    b: &[f64],
) -> Vec<Vec<f64>> {
    let p = rows[0][0].0.len();
    let d = p + taus.len();
    let n: usize = rows.iter().map(|s| s.len()).sum();
    let r: f64 = alloc.iter().sum();
    let mut out = vec![vec![0.0; d]; d];
    for k in 0..rows.len() {
        for (i, (x, eps)) in rows[k].iter().enumerate() {
            // I(eps < b) - tau is the negative of the stacked score; the sign cancels.
            let g = stacked_score(x, *eps, taus, b);
            let scale = r / alloc[k] / probs[k][i] / (n as f64 * n as f64);
            for s in 0..d {
                for t in 0..d {
                    out[s][t] += scale * g[s] * g[t];
                }
            }
        }
    }
    out
}

/// Two-sided check that an observed count is within `z` multinomial
/// standard errors of its expectation.
pub fn within_multinomial_se(count: u64, total: u64, prob: f64, z: f64) -> bool {
    let expected = total as f64 * prob;
    let se = (total as f64 * prob * (1.0 - prob)).sqrt();
    (count as f64 - expected).abs() <= z * se.max(f64::MIN_POSITIVE)
}
