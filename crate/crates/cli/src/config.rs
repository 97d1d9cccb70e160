//! Run configuration: a flat `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use cqrsub::simgen::{CovariateCase, ErrorLaw, SimConfig};
use cqrsub::two_step::Method;
use cqrsub::QuantileGrid;

use crate::error::{CliError, CliResult};
use crate::ingest::{expand_glob, ColumnSpec, NaPolicy};

/// Parsed `key = value` lines. Keys are case-insensitive and `_` equals `-`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{source}:{}: expected key = value", i + 1)))?;
            if entries.insert(canonical(k), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("{source}:{}: {} set twice", i + 1, k.trim())));
            }
        }
        Ok(KeyValues { source: source.to_string(), entries })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("{}: {key} = {v:?}: {e}", self.source))))
            .transpose()
    }

    fn reject_unknown(&self, known: &[&str]) -> CliResult<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!("{}: unknown key {k:?}", self.source))),
            None => Ok(()),
        }
    }
}

fn pick<T: FromStr>(flag: Option<T>, file: &KeyValues, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.parsed(key),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    split_list(s).iter().map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("{key}: {v:?}: {e}")))).collect()
}

/// `--taus`: a count `M` for the `m/(M+1)` grid, or a comma-separated list of levels.
pub fn parse_taus(spec: &str) -> CliResult<QuantileGrid> {
    let spec = spec.trim();
    let grid = match spec.parse::<usize>() {
        Ok(0) => return Err(CliError::Config("taus: need at least one level".into())),
        Ok(m) => QuantileGrid::equally_spaced(m),
        Err(_) => QuantileGrid::new(parse_list("taus", spec)?),
    };
    grid.map_err(|e| CliError::Config(format!("taus: {e}")))
}

pub fn parse_method(s: &str) -> CliResult<Method> {
    match s.trim().to_ascii_lowercase().as_str() {
        "lopt" => Ok(Method::Lopt),
        "uniform" | "unif" => Ok(Method::Uniform),
        other => Err(CliError::Config(format!("unknown method {other:?}; expected lopt or uniform"))),
    }
}

fn parse_na(s: &str) -> CliResult<NaPolicy> {
    match s.trim().to_ascii_lowercase().as_str() {
        "drop" => Ok(NaPolicy::Drop),
        "error" => Ok(NaPolicy::Error),
        other => Err(CliError::Config(format!("unknown NA policy {other:?}; expected drop or error"))),
    }
}

/// Flags shared by `estimate`, `plan` and `diagnose`. Unset flags fall back
/// to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct DataFlags {
    /// Glob matching one CSV file per shard
    #[arg(long)]
    pub shards: Option<String>,
    /// Response column name
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated covariate columns (default: all but the response)
    #[arg(long)]
    pub covariates: Option<String>,
    /// Quantile levels: a count M for m/(M+1), or a comma-separated list
    #[arg(long)]
    pub taus: Option<String>,
    /// Pilot subsample size
    #[arg(long)]
    pub r0: Option<usize>,
    /// Main subsample size
    #[arg(long)]
    pub r: Option<usize>,
    /// Number of draws
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Confidence intervals have level 1 - alpha
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Master seed for every random stream
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated columns to z-score with global statistics
    #[arg(long)]
    pub normalize: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// lopt or uniform
    #[arg(long)]
    pub method: Option<String>,
    /// Rows with missing values: drop or error
    #[arg(long)]
    pub na: Option<String>,
}

const DATA_KEYS: &[&str] =
    &["shards", "response", "covariates", "taus", "r0", "r", "b", "alpha", "seed", "normalize", "out", "method", "na"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub shard_pattern: String,
    pub shards: Vec<PathBuf>,
    pub columns: ColumnSpec,
    pub grid: QuantileGrid,
    pub r0: usize,
    pub r: usize,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub normalize: Vec<String>,
    pub out: PathBuf,
    pub method: Method,
}

impl RunConfig {
    pub const DEFAULT_R0: usize = 200;
    pub const DEFAULT_R: usize = 1000;
    pub const DEFAULT_B: usize = 40;
    pub const DEFAULT_ALPHA: f64 = 0.05;
    pub const DEFAULT_SEED: u64 = 1;

    pub fn resolve(flags: &DataFlags, file: Option<&KeyValues>) -> CliResult<Self> {
        let empty = KeyValues::default();
        let file = file.unwrap_or(&empty);
        file.reject_unknown(DATA_KEYS)?;
        let text = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).map(str::to_string));

        let shard_pattern =
            text(&flags.shards, "shards").ok_or_else(|| CliError::Config("--shards is required".into()))?;
        let response =
            text(&flags.response, "response").ok_or_else(|| CliError::Config("--response is required".into()))?;
        let covariates = text(&flags.covariates, "covariates").map(|s| split_list(&s));
        let na = text(&flags.na, "na").map(|s| parse_na(&s)).transpose()?.unwrap_or(NaPolicy::Drop);
        let grid = match text(&flags.taus, "taus") {
            Some(s) => parse_taus(&s)?,
            None => QuantileGrid::default(),
        };
        let r0 = pick(flags.r0, file, "r0")?.unwrap_or(Self::DEFAULT_R0);
        let r = pick(flags.r, file, "r")?.unwrap_or(Self::DEFAULT_R);
        let b = pick(flags.b, file, "b")?.unwrap_or(Self::DEFAULT_B);
        let alpha = pick(flags.alpha, file, "alpha")?.unwrap_or(Self::DEFAULT_ALPHA);
        let seed = pick(flags.seed, file, "seed")?.unwrap_or(Self::DEFAULT_SEED);
        let normalize = text(&flags.normalize, "normalize").map(|s| split_list(&s)).unwrap_or_default();
        let out = flags
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("cqrsub-out"));
        let method = text(&flags.method, "method").map(|s| parse_method(&s)).transpose()?.unwrap_or(Method::Lopt);

        if r0 == 0 || r == 0 {
            return Err(CliError::Config("r0 and r must be positive".into()));
        }
        if b < 2 {
            return Err(CliError::Config(format!("B must be at least 2, got {b}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let shards = expand_glob(&shard_pattern)?;
        Ok(RunConfig {
            shard_pattern,
            shards,
            columns: ColumnSpec { response, covariates, na },
            grid,
            r0,
            r,
            b,
            alpha,
            seed,
            normalize,
            out,
            method,
        })
    }
}

/// Flags for `simulate`; they override the simulation config file.
#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    /// Simulation config file (key = value)
    #[arg(long = "sim-config")]
    pub sim_config: Option<PathBuf>,
    /// Master seed for every random stream
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of Monte Carlo replications
    #[arg(long)]
    pub replications: Option<usize>,
    /// Quantile levels: a count M for m/(M+1), or a comma-separated list
    #[arg(long)]
    pub taus: Option<String>,
    /// Pilot subsample size
    #[arg(long)]
    pub r0: Option<usize>,
    /// Comma-separated budgets for the single-draw comparison
    #[arg(long)]
    pub r: Option<String>,
    /// Comma-separated draw counts for the combined estimator
    #[arg(long = "B")]
    pub b: Option<String>,
    /// Confidence level of the intervals is 1 - alpha
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const SIM_KEYS: &[&str] = &[
    "case",
    "error",
    "n",
    "k",
    "p",
    "beta0",
    "taus",
    "replications",
    "r0",
    "r-values",
    "b-values",
    "multi-r",
    "alpha",
    "seed",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SimRunConfig {
    pub sim: SimConfig,
    pub out: PathBuf,
}

impl SimRunConfig {
    pub fn resolve(flags: &SimFlags, file: Option<&KeyValues>) -> CliResult<Self> {
        let empty = KeyValues::default();
        let file = file.unwrap_or(&empty);
        file.reject_unknown(SIM_KEYS)?;
        let required =
            |key: &str| file.get(key).ok_or_else(|| CliError::Config(format!("simulation config needs {key}")));
        let case = required("case")?;
        let case = CovariateCase::parse(case).ok_or_else(|| CliError::Config(format!("unknown case {case:?}")))?;
        let error = required("error")?;
        let error = ErrorLaw::parse(error).ok_or_else(|| CliError::Config(format!("unknown error law {error:?}")))?;
        let n = file.parsed("n")?.ok_or_else(|| CliError::Config("simulation config needs n".into()))?;
        let k = file.parsed("k")?.ok_or_else(|| CliError::Config("simulation config needs k".into()))?;
        let mut sim = SimConfig::new(case, error, n, k);
        if let Some(p) = file.parsed("p")? {
            sim.p = p;
            sim.beta0 = vec![1.0; p];
        }
        if let Some(b) = file.get("beta0") {
            sim.beta0 = parse_list("beta0", b)?;
        }
        if let Some(v) = pick(flags.replications, file, "replications")? {
            sim.replications = v;
        }
        if let Some(s) = flags.taus.clone().or_else(|| file.get("taus").map(str::to_string)) {
            sim.grid = parse_taus(&s)?;
        }
        if let Some(v) = pick(flags.r0, file, "r0")? {
            sim.r0 = v;
        }
        if let Some(s) = flags.r.clone().or_else(|| file.get("r-values").map(str::to_string)) {
            sim.r_values = parse_list("r-values", &s)?;
        }
        if let Some(s) = flags.b.clone().or_else(|| file.get("b-values").map(str::to_string)) {
            sim.b_values = parse_list("b-values", &s)?;
        }
        if let Some(v) = file.parsed("multi-r")? {
            sim.multi_r = v;
        }
        if let Some(v) = pick(flags.alpha, file, "alpha")? {
            sim.alpha = v;
        }
        if let Some(v) = pick(flags.seed, file, "seed")? {
            sim.seed = v;
        }
        sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let out = flags
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("cqrsub-sim"));
        Ok(SimRunConfig { sim, out })
    }
}
