use cqrsub::rng::StreamKey;
use cqrsub::simgen::*;
use cqrsub_oracle::within_multinomial_se;

fn sample_covariance(law: &CovariateLaw, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let p = law.dim();
    let mut rng = StreamKey::new(seed).rng();
    let mut row = vec![0.0; p];
    let mut acc = vec![vec![0.0; p]; p];
    for _ in 0..n {
        law.sample_into(&mut rng, &mut row);
        for s in 0..p {
            for t in 0..p {
                acc[s][t] += row[s] * row[t];
            }
        }
    }
    acc.iter().map(|r| r.iter().map(|v| v / n as f64).collect()).collect()
}

#[test]
fn case_one_covariance() {
    let law = CovariateCase::I.law(5, 0).unwrap();
    let cov = sample_covariance(&law, 100_000, 31);
    for (s, row) in cov.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            let want = 0.5f64.powi((s as i32 - t as i32).abs());
            assert!((v - want).abs() < 0.01, "({s}, {t}): {v} vs {want}");
        }
    }
}

#[test]
fn case_two_covariance() {
    let law = CovariateCase::II.law(4, 0).unwrap();
    let cov = sample_covariance(&law, 100_000, 32);
    for (s, row) in cov.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            let want = if s == t { 1.0 } else { 0.5 };
            // Var(x_s x_t) = S_ss S_tt + S_st^2 for a normal vector
            let se = ((1.0 + want * want) / 100_000.0f64).sqrt();
            assert!((v - want).abs() < 4.0 * se, "({s}, {t}): {v} vs {want}");
        }
    }
}

#[test]
fn case_four_t5_shard_covariance() {
    // t5 with scale S has covariance 5/3 S
    let law = CovariateCase::IV.law(5, 4).unwrap();
    let cov = sample_covariance(&law, 200_000, 33);
    for (s, row) in cov.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            let want = 5.0 / 3.0 * 0.5f64.powi((s as i32 - t as i32).abs());
            assert!((v - want).abs() < 0.05, "({s}, {t}): {v} vs {want}");
        }
    }
}

#[test]
fn error_laws_hit_their_quantiles() {
    let n = 200_000u64;
    for law in [ErrorLaw::Normal, ErrorLaw::MixNormal, ErrorLaw::T3, ErrorLaw::Cauchy] {
        let mut rng = StreamKey::new(7).child(law as u64).rng();
        let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
        for tau in [0.0625, 0.25, 0.5, 0.75, 0.9375] {
            let q = law.quantile(tau);
            let below = draws.iter().filter(|&&e| e < q).count() as u64;
            assert!(within_multinomial_se(below, n, tau, 4.0), "{law:?} tau {tau}: {below}");
        }
    }
}

#[test]
fn mixture_variance() {
    let n = 200_000;
    let mut rng = StreamKey::new(8).rng();
    let draws: Vec<f64> = (0..n).map(|_| ErrorLaw::MixNormal.sample(&mut rng)).collect();
    let var = draws.iter().map(|e| e * e).sum::<f64>() / n as f64;
    assert!((var - 5.0).abs() < 0.1, "{var}");
}

#[test]
fn shard_sizes_partition_n() {
    for (n, k) in [(10, 5), (10_000, 5), (100_003, 22), (7, 3)] {
        for s in 0..20 {
            let sizes = shard_sizes(n, k, StreamKey::new(s)).unwrap();
            assert_eq!(sizes.len(), k);
            assert_eq!(sizes.iter().sum::<usize>(), n);
            assert!(sizes.iter().all(|&v| v >= 1));
            // u_k in [1, 2): no shard exceeds twice another, up to rounding
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            assert!(hi as f64 <= 2.0 * lo as f64 + 2.0, "{sizes:?}");
        }
    }
}
