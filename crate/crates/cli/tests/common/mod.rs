#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

/// Rows per year in the 22-file airline layout; shard sizes are scaled from these.
pub const YEARLY_ROWS: [usize; 22] = [
    1_287_333, 5_126_498, 4_925_482, 5_110_527, 4_995_005, 5_020_651, 4_993_587, 5_078_411, 5_219_140, 5_209_326,
    5_301_999, 5_227_051, 5_360_018, 5_481_303, 4_873_031, 5_093_462, 6_375_689, 6_987_729, 6_992_838, 7_003_802,
    7_275_288, 2_319_121,
];

pub const AIRLINE_BETA: [f64; 3] = [-0.0451, 0.9179, -0.0248];

pub fn cqrsub() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cqrsub"))
}

pub fn run(args: &[&str]) -> Output {
    cqrsub().args(args).output().expect("spawn cqrsub")
}

fn standardize(v: &mut [f64], keep: &[bool]) {
    let kept: Vec<f64> = v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect();
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let sd = (kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// Airline-like shards: `y = x1 b1 + x2 b2 + x3 b3 + e` with `x1` binary and
/// `x2`, `x3` exactly standardized over the kept rows, then written on raw
/// scales (`x2 = 700 + 550 z`, `x3 = 1330 + 470 z`). Normalizing `x2, x3`
/// therefore recovers covariates on which `AIRLINE_BETA` is the true slope.
/// About `na_rate` of rows get a missing `x3` and are dropped on ingestion.
pub fn write_airline_like(dir: &Path, n: usize, na_rate: f64, seed: u64) -> Vec<PathBuf> {
    fs::create_dir_all(dir).unwrap();
    let total: usize = YEARLY_ROWS.iter().sum();
    let mut sizes: Vec<usize> = YEARLY_ROWS.iter().map(|&r| r * n / total).collect();
    let short = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut().take(short) {
        *s += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t5 = StudentT::new(5.0).unwrap();
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut x3 = Vec::with_capacity(n);
    let mut keep = Vec::with_capacity(n);
    for _ in 0..n {
        x1.push(if rng.random_bool(0.3) { 1.0 } else { 0.0 });
        x2.push(StandardNormal.sample(&mut rng));
        let u: f64 = StandardNormal.sample(&mut rng);
        x3.push(u);
        keep.push(!rng.random_bool(na_rate));
    }
    standardize(&mut x2, &keep);
    standardize(&mut x3, &keep);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = t5.sample(&mut rng);
            AIRLINE_BETA[0] * x1[i] + AIRLINE_BETA[1] * x2[i] + AIRLINE_BETA[2] * x3[i] + 0.35 * e
        })
        .collect();
    let mut paths = Vec::new();
    let mut start = 0;
    for (k, &nk) in sizes.iter().enumerate() {
        let path = dir.join(format!("year_{:02}.csv", k));
        let mut text = String::from("id,y,x1,x2,x3\n");
        for i in start..start + nk {
            let x3_cell = if keep[i] { (1330.0 + 470.0 * x3[i]).to_string() } else { "NA".to_string() };
            text.push_str(&format!("{i},{},{},{},{x3_cell}\n", y[i], x1[i], 700.0 + 550.0 * x2[i]));
        }
        fs::write(&path, text).unwrap();
        paths.push(path);
        start += nk;
    }
    paths
}
