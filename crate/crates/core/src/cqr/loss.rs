use super::{QuantileGrid, ThetaEstimate, WeightedSample};
use crate::error::Result;

/// `rho_tau(u) = u (tau - I(u < 0))`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// `psi_tau(u) = tau - I(u < 0)`; `psi(0) = tau`.
#[inline]
pub fn psi(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

/// `sum_i w_i sum_m rho_{tau_m}(y_i - x_i' beta - b_m)`.
pub fn cqr_objective(theta: &ThetaEstimate, data: &WeightedSample, grid: &QuantileGrid) -> Result<f64> {
    theta.check_dims(data.p(), grid.len())?;
    Ok(objective_unchecked(&theta.beta, &theta.b, data, grid.levels()))
}

pub(crate) fn objective_unchecked(beta: &[f64], b: &[f64], data: &WeightedSample, taus: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..data.len() {
        let e = data.y()[i] - dot(data.row(i), beta);
        let mut row = 0.0;
        for (bm, &tau) in b.iter().zip(taus) {
            row += check_loss(e - bm, tau);
        }
        total += data.weights()[i] * row;
    }
    total
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Huberized check loss with bandwidth `h`: quadratic on `|u| < h`, exact
/// outside, `0 <= smooth - rho <= h / 4`. Returns value, slope and curvature.
#[inline]
pub(crate) fn smooth_check(u: f64, tau: f64, h: f64) -> (f64, f64, f64) {
    if u >= h {
        (tau * u, tau, 0.0)
    } else if u <= -h {
        ((tau - 1.0) * u, tau - 1.0, 0.0)
    } else {
        let inv = 0.5 / h;
        (0.5 * inv * u * u + (tau - 0.5) * u + 0.25 * h, inv * u + tau - 0.5, inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_loss_examples() {
        assert_eq!(check_loss(2.0, 0.5), 1.0);
        assert_eq!(check_loss(-4.0, 0.25), 3.0);
        assert_eq!(check_loss(0.0, 0.9), 0.0);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1.0, 0.5), 0.5);
        assert_eq!(psi(-1.0, 0.25), -0.75);
        assert_eq!(psi(0.0, 0.3), 0.3);
    }

    #[test]
    fn loss_is_u_times_psi() {
        for &u in &[-3.0, -0.1, 0.0, 0.2, 5.0] {
            for &tau in &[0.1, 0.5, 0.75] {
                assert_eq!(check_loss(u, tau), u * psi(u, tau));
            }
        }
    }

    #[test]
    fn single_observation_objective() {
        let data = WeightedSample::from_observations(
            1,
            &[super::super::WeightedObservation { y: 1.0, x: vec![0.0], weight: 1.0 }],
        )
        .unwrap();
        let grid = QuantileGrid::new(vec![0.5]).unwrap();
        let theta = ThetaEstimate::zeros(1, 1);
        assert_eq!(cqr_objective(&theta, &data, &grid).unwrap(), 0.5);
        assert!(cqr_objective(&ThetaEstimate::zeros(2, 1), &data, &grid).is_err());
    }

    #[test]
    fn smoothing_is_continuous_and_bounded() {
        let h = 0.3;
        for &tau in &[0.05, 0.5, 0.9] {
            for &u in &[-h, h] {
                let (v, d, _) = smooth_check(u, tau, h);
                let eps = 1e-9 * u.signum();
                let (vo, dout, _) = smooth_check(u + eps, tau, h);
                assert!((v - vo).abs() < 1e-8);
                assert!((d - dout).abs() < 1e-8);
            }
            for k in -40..=40 {
                let u = k as f64 * 0.01;
                let gap = smooth_check(u, tau, h).0 - check_loss(u, tau);
                assert!((-1e-15..=h / 4.0 + 1e-15).contains(&gap));
            }
        }
    }
}
