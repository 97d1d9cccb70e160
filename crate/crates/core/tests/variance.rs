use cqrsub::diagnostics::*;
use cqrsub::simgen::{generate_dataset, CovariateCase, ErrorLaw, SimConfig};
use cqrsub::subsampling::*;
use cqrsub::two_step::{fit_draws, Method};
use cqrsub::{QuantileGrid, Shard, ShardedDataset, ThetaEstimate};
use cqrsub_oracle::v_pi_explicit;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (ShardedDataset, QuantileGrid, ThetaEstimate) {
    let k = rng.random_range(1..=4);
    let p = rng.random_range(1..=3);
    let m = rng.random_range(1..=5);
    let shards = (0..k)
        .map(|_| {
            let n = rng.random_range(1..=50);
            let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            Shard::new(y, x, p).unwrap()
        })
        .collect();
    let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
    b.sort_by(f64::total_cmp);
    let theta = ThetaEstimate::new((0..p).map(|_| rng.random_range(-1.0..1.0)).collect(), b).unwrap();
    (ShardedDataset::new(shards).unwrap(), QuantileGrid::equally_spaced(m).unwrap(), theta)
}

fn random_plan(rng: &mut ChaCha8Rng, d: &ShardedDataset, r: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let probs = d
        .shards()
        .iter()
        .map(|s| {
            let w: Vec<f64> = (0..s.len()).map(|_| rng.random_range(0.01..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.into_iter().map(|v| v / t).collect()
        })
        .collect();
    let w: Vec<f64> = (0..d.num_shards()).map(|_| rng.random_range(0.01..1.0)).collect();
    let t: f64 = w.iter().sum();
    (probs, w.into_iter().map(|v| r * v / t).collect())
}

fn oracle_rows(d: &ShardedDataset, theta: &ThetaEstimate) -> Vec<Vec<(Vec<f64>, f64)>> {
    d.shards()
        .iter()
        .map(|s| {
            s.rows()
                .map(|(y, x)| {
                    let fit: f64 = x.iter().zip(&theta.beta).map(|(a, b)| a * b).sum();
                    (x.to_vec(), y - fit)
                })
                .collect()
        })
        .collect()
}

#[test]
fn matrix_matches_explicit_outer_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (d, grid, theta) = random_instance(&mut rng);
        let (probs, alloc) = random_plan(&mut rng, &d, 100.0);
        let v = v_pi_matrix(&d, &probs, &alloc, &theta, &grid).unwrap();
        let oracle = v_pi_explicit(&oracle_rows(&d, &theta), &probs, &alloc, grid.levels(), &theta.b);
        let scale = v.matrix.abs().max();
        for (a, oracle_row) in oracle.iter().enumerate() {
            for (b, &o) in oracle_row.iter().enumerate() {
                assert!((v.matrix[(a, b)] - o).abs() <= 1e-12 * scale);
                assert_eq!(v.matrix[(a, b)], v.matrix[(b, a)]);
            }
        }
        let eig = v.matrix.clone().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-10 * scale));
        let t = v_pi_trace(&d, &probs, &alloc, &theta, &grid).unwrap();
        assert!((t - v.trace()).abs() <= 1e-10 * t);
    }
}

#[test]
fn duplicated_rows_can_be_permuted() {
    let rows = vec![vec![1.0, 0.0], vec![0.5, -1.0], vec![1.0, 0.0], vec![0.5, -1.0]];
    let y = vec![0.2, -0.3, 0.2, -0.3];
    let d = ShardedDataset::new(vec![Shard::from_rows(y.clone(), &rows).unwrap()]).unwrap();
    let swapped = ShardedDataset::new(vec![Shard::from_rows(
        vec![y[2], y[3], y[0], y[1]],
        &[rows[2].clone(), rows[3].clone(), rows[0].clone(), rows[1].clone()],
    )
    .unwrap()])
    .unwrap();
    let grid = QuantileGrid::equally_spaced(3).unwrap();
    let theta = ThetaEstimate::new(vec![0.1, 0.2], vec![-0.2, 0.0, 0.2]).unwrap();
    let probs = vec![vec![0.1, 0.4, 0.1, 0.4]];
    let a = v_pi_matrix(&d, &probs, &[5.0], &theta, &grid).unwrap();
    let b = v_pi_matrix(&swapped, &probs, &[5.0], &theta, &grid).unwrap();
    assert!((a.matrix - b.matrix).abs().max() < 1e-15);
}

#[test]
fn lopt_attains_the_trace_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (d, grid, theta) = random_instance(&mut rng);
        let r = 200.0;
        let probs: Vec<Vec<f64>> = d.shards().iter().map(|s| lopt_probabilities(s, &theta, &grid).unwrap()).collect();
        let alloc = lopt_real_allocations(&d, &theta, &grid, r).unwrap();
        let best = v_pi_trace(&d, &probs, &alloc, &theta, &grid).unwrap();
        let direct = v_pi_matrix(&d, &probs, &alloc, &theta, &grid).unwrap().trace();
        let bound = v_pi_trace_lower_bound(&d, &theta, &grid).unwrap();
        assert!((direct - bound).abs() <= 1e-10 * bound, "{direct} vs {bound}");
        for _ in 0..50 {
            let (p, a) = random_plan(&mut rng, &d, r);
            let t = v_pi_trace(&d, &p, &a, &theta, &grid).unwrap();
            assert!(best <= t * (1.0 + 1e-9), "{best} > {t}");
        }
    }
}

#[test]
fn sandwich_predicts_draw_to_draw_variance() {
    let mut config = SimConfig::new(CovariateCase::I, ErrorLaw::Normal, 100_000, 5);
    config.seed = 77;
    let (d, theta0) = generate_dataset(&config, 0).unwrap();
    let grid = &config.grid;
    let r = 1000;
    let plan = lopt_plan(&d, &theta0, grid, r).unwrap();
    let v = v_pi_for_plan(&d, &plan, &theta0, grid).unwrap();
    let density: Vec<f64> = theta0.b.iter().map(|&b| ErrorLaw::Normal.density(b).unwrap()).collect();
    let e = e_n_matrix(&d, grid, &density).unwrap();
    let sigma = sandwich(&e, &v.matrix).unwrap();

    let draws = 300;
    let fits = fit_draws(&d, &plan, Method::Lopt, draws, grid, Some(&theta0), 5, &Default::default()).unwrap();
    for j in 0..config.p {
        let mc: f64 =
            fits.iter().map(|f| r as f64 * (f.theta.beta[j] - theta0.beta[j]).powi(2)).sum::<f64>() / draws as f64;
        let ratio = mc / sigma[(j, j)];
        assert!((1.0 / 1.5..1.5).contains(&ratio), "slope {j}: Monte Carlo {mc} vs sandwich {}", sigma[(j, j)]);
    }
}

#[test]
fn integer_plan_matches_real_allocations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (d, grid, theta) = random_instance(&mut rng);
    let plan = uniform_plan(&d, 40).unwrap();
    let probs: Vec<Vec<f64>> = plan.shards.iter().map(|s| s.probabilities.clone()).collect();
    let alloc: Vec<f64> = plan.allocations().iter().map(|&a| a as f64).collect();
    assert!(plan.allocations().iter().all(|&a| a > 0));
    let a = v_pi_for_plan(&d, &plan, &theta, &grid).unwrap();
    let b = v_pi_matrix(&d, &probs, &alloc, &theta, &grid).unwrap();
    assert_eq!(a.matrix, b.matrix);
}

proptest! {
    #[test]
    fn trace_is_free_of_budget_scale(seed in any::<u64>(), c in 1.5f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, grid, theta) = random_instance(&mut rng);
        let (p, a) = random_plan(&mut rng, &d, 50.0);
        let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
        let t1 = v_pi_trace(&d, &p, &a, &theta, &grid).unwrap();
        let t2 = v_pi_trace(&d, &p, &scaled, &theta, &grid).unwrap();
        prop_assert!((t1 - t2).abs() <= 1e-12 * t1);
    }
}
