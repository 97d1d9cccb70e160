use cqrsub::cqr::{cqr_objective, solve_weighted_cqr, SolverOptions};
use cqrsub::{QuantileGrid, ThetaEstimate, WeightedObservation, WeightedSample};
use cqrsub_oracle::lp::solve_cqr_lp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Instance {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    w: Vec<f64>,
    grid: QuantileGrid,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize, weighted: bool) -> Self {
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut w = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            let noise: f64 = StandardNormal.sample(rng);
            y.push(row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise);
            x.push(row);
            w.push(if weighted { rng.random_range(0.2..5.0) } else { 1.0 });
        }
        let mut levels: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..0.95)).collect();
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        Instance { y, x, w, grid: QuantileGrid::new(levels).unwrap() }
    }

    fn sample(&self) -> WeightedSample {
        let obs: Vec<_> = (0..self.y.len())
            .map(|i| WeightedObservation { y: self.y[i], x: self.x[i].clone(), weight: self.w[i] })
            .collect();
        WeightedSample::from_observations(self.x[0].len(), &obs).unwrap()
    }
}

#[test]
fn matches_lp_optimum_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for case in 0..60 {
        let n = rng.random_range(10..=50);
        let p = rng.random_range(1..=3);
        let m = rng.random_range(1..=5);
        let inst = Instance::random(&mut rng, n, p, m, true);
        let data = inst.sample();
        let fit = solve_weighted_cqr(&data, &inst.grid, None, &SolverOptions::default()).unwrap();
        let lp = solve_cqr_lp(&inst.y, &inst.x, &inst.w, inst.grid.levels()).unwrap();
        let rel = (fit.objective - lp.objective) / lp.objective;
        worst = worst.max(rel.abs());
        assert!(rel.abs() < 1e-5, "case {case}: solver {} vs lp {}", fit.objective, lp.objective);
        let again = cqr_objective(&fit.theta, &data, &inst.grid).unwrap();
        assert_eq!(again, fit.objective);
    }
    println!("worst relative gap {worst:e}");
}

#[test]
fn median_regression_special_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut inst = Instance::random(&mut rng, 30, 2, 1, false);
        inst.grid = QuantileGrid::new(vec![0.5]).unwrap();
        let fit = solve_weighted_cqr(&inst.sample(), &inst.grid, None, &SolverOptions::default()).unwrap();
        let lp = solve_cqr_lp(&inst.y, &inst.x, &inst.w, &[0.5]).unwrap();
        assert!(((fit.objective - lp.objective) / lp.objective).abs() < 1e-5);
    }
}

#[test]
fn translation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = Instance::random(&mut rng, 400, 3, 5, true);
    let grid = QuantileGrid::equally_spaced(5).unwrap();
    let data = inst.sample();
    let fit = solve_weighted_cqr(&data, &grid, None, &SolverOptions::default()).unwrap();
    let shifted = solve_weighted_cqr(&data.shifted(3.25), &grid, None, &SolverOptions::default()).unwrap();
    assert!(((fit.objective - shifted.objective) / fit.objective).abs() < 1e-8);
    // n = 400 with continuous noise is strongly identified: parameters match too
    for (a, b) in fit.theta.beta.iter().zip(&shifted.theta.beta) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    for (a, b) in fit.theta.b.iter().zip(&shifted.theta.b) {
        assert!((a + 3.25 - b).abs() < 1e-6);
    }
}

#[test]
fn objective_matches_brute_force_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let inst = Instance::random(&mut rng, 25, 3, 4, true);
        let m = inst.grid.len();
        let theta = ThetaEstimate::new(
            (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let got = cqr_objective(&theta, &inst.sample(), &inst.grid).unwrap();
        let want = cqrsub_oracle::cqr_objective(&inst.y, &inst.x, &inst.w, &theta.beta, &theta.b, inst.grid.levels());
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn objective_is_convex_along_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inst = Instance::random(&mut rng, 40, 2, 3, true);
    let data = inst.sample();
    for _ in 0..500 {
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lam: f64 = rng.random();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| lam * u + (1.0 - lam) * v).collect();
        let f = |v: &[f64]| cqr_objective(&ThetaEstimate::from_stacked(2, v), &data, &inst.grid).unwrap();
        assert!(f(&mix) <= lam * f(&a) + (1.0 - lam) * f(&b) + 1e-10);
    }
}

#[test]
fn larger_problem_timing() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inst = Instance::random(&mut rng, 1000, 5, 1, true);
    let grid = QuantileGrid::default();
    let data = inst.sample();
    let t = std::time::Instant::now();
    let mut its = 0;
    let mut cert = 0;
    for _ in 0..20 {
        let fit = solve_weighted_cqr(&data, &grid, None, &SolverOptions::default()).unwrap();
        its += fit.iterations;
        cert += fit.certified as usize;
    }
    println!("20 solves n=1000 M=15: {:?}, iterations {its}, certified {cert}", t.elapsed());
}
