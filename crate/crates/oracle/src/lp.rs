//! Exact dense-tableau simplex for weighted composite quantile regression.
//!
//! Each residual `y_i - x_i' beta - b_m` is split into nonnegative parts
//! `u+ - u-` with cost `w_i (tau_m u+ + (1 - tau_m) u-)`; free parameters are
//! split the same way. The residual slacks give a feasible starting basis,
//! so no phase one is needed. Intended for small instances only.

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub beta: Vec<f64>,
    pub b: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpError {
    Unbounded,
    IterationLimit,
}

const TOL: f64 = 1e-10;

pub fn solve_cqr_lp(y: &[f64], x: &[Vec<f64>], w: &[f64], taus: &[f64]) -> Result<LpSolution, LpError> {
    let n = y.len();
    let p = if n > 0 { x[0].len() } else { 0 };
    let big_m = taus.len();
    let rows = n * big_m;
    let off_bm = 2 * p;
    let off_up = 2 * p + 2 * big_m;
    let off_un = off_up + rows;
    let cols = off_un + rows;

    let mut tab = vec![0.0; rows * cols];
    let mut rhs = vec![0.0; rows];
    let mut cost = vec![0.0; cols];
    let mut basis = vec![0usize; rows];

    for i in 0..n {
        for m in 0..big_m {
            let r = i * big_m + m;
            let sign = if y[i] < 0.0 { -1.0 } else { 1.0 };
            let row = &mut tab[r * cols..(r + 1) * cols];
            for j in 0..p {
                row[j] = sign * x[i][j];
                row[p + j] = -sign * x[i][j];
            }
            row[off_bm + m] = sign;
            row[off_bm + big_m + m] = -sign;
            row[off_up + r] = sign;
            row[off_un + r] = -sign;
            rhs[r] = sign * y[i];
            cost[off_up + r] = w[i] * taus[m];
            cost[off_un + r] = w[i] * (1.0 - taus[m]);
            basis[r] = if sign > 0.0 { off_up + r } else { off_un + r };
        }
    }

    // reduced costs d_j = c_j - c_B' T_j
    let mut reduced = cost.clone();
    for r in 0..rows {
        let cb = cost[basis[r]];
        if cb != 0.0 {
            let row = &tab[r * cols..(r + 1) * cols];
            for j in 0..cols {
                reduced[j] -= cb * row[j];
            }
        }
    }

    let max_pivots = 200 * (rows + cols);
    let mut pivots = 0;
    let mut degenerate_run = 0usize;
    let mut pivot_row = vec![0.0; cols];
    loop {
        let bland = degenerate_run > 30;
        let mut enter = None;
        let mut best = -TOL;
        for (j, &d) in reduced.iter().enumerate() {
            if d < best {
                enter = Some(j);
                if bland {
                    break;
                }
                best = d;
            }
        }
        let Some(enter) = enter else { break };

        let mut leave = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..rows {
            let a = tab[r * cols + enter];
            if a > TOL {
                let ratio = rhs[r] / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best_ratio - 1e-12 * best_ratio.abs().max(1.0)
                            || (ratio <= best_ratio + 1e-12 * best_ratio.abs().max(1.0) && basis[r] < basis[l])
                    }
                };
                if better {
                    leave = Some(r);
                    best_ratio = ratio.min(best_ratio);
                }
            }
        }
        let Some(leave) = leave else { return Err(LpError::Unbounded) };

        if best_ratio <= 1e-12 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }

        let a = tab[leave * cols + enter];
        for j in 0..cols {
            pivot_row[j] = tab[leave * cols + j] / a;
        }
        let pivot_rhs = rhs[leave] / a;
        for r in 0..rows {
            if r == leave {
                continue;
            }
            let f = tab[r * cols + enter];
            if f != 0.0 {
                let row = &mut tab[r * cols..(r + 1) * cols];
                for j in 0..cols {
                    row[j] -= f * pivot_row[j];
                }
                row[enter] = 0.0;
                rhs[r] = (rhs[r] - f * pivot_rhs).max(0.0);
            }
        }
        tab[leave * cols..(leave + 1) * cols].copy_from_slice(&pivot_row);
        rhs[leave] = pivot_rhs;
        let d = reduced[enter];
        for j in 0..cols {
            reduced[j] -= d * pivot_row[j];
        }
        reduced[enter] = 0.0;
        basis[leave] = enter;

        pivots += 1;
        if pivots > max_pivots {
            return Err(LpError::IterationLimit);
        }
    }

    let mut values = vec![0.0; cols];
    for r in 0..rows {
        values[basis[r]] = rhs[r];
    }
    let beta: Vec<f64> = (0..p).map(|j| values[j] - values[p + j]).collect();
    let b: Vec<f64> = (0..big_m).map(|m| values[off_bm + m] - values[off_bm + big_m + m]).collect();
    let objective = crate::cqr_objective(y, x, w, &beta, &b, taus);
    Ok(LpSolution { objective, beta, b, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three_points() {
        // intercept-only: the median of {1, 2, 7} minimizes sum |y - b| / 2
        let y = [1.0, 2.0, 7.0];
        let x = vec![vec![0.0]; 3];
        let w = [1.0; 3];
        let sol = solve_cqr_lp(&y, &x, &w, &[0.5]).unwrap();
        assert!((sol.b[0] - 2.0).abs() < 1e-9);
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn exact_line_is_recovered() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 - 3.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.5 * r[0] - 1.0).collect();
        let w = [1.0; 8];
        let sol = solve_cqr_lp(&y, &x, &w, &[0.25, 0.5, 0.75]).unwrap();
        assert!(sol.objective.abs() < 1e-9);
        assert!((sol.beta[0] - 2.5).abs() < 1e-9);
        for b in sol.b {
            assert!((b + 1.0).abs() < 1e-9);
        }
    }
}
