//! Sharded CSV input and output.
//!
//! One file per shard, comma separated with a header row. Only the response
//! and covariate columns are kept. Missing values are an empty cell, `NA` or
//! `NaN` (any case).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cqrsub::{Shard, ShardedDataset};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NaPolicy {
    /// Drop rows with a missing value in a selected column.
    Drop,
    /// Any missing value is an ingestion error.
    Error,
}

/// Which columns to read. `covariates: None` takes every column but the response.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub response: String,
    pub covariates: Option<Vec<String>>,
    pub na: NaPolicy,
}

/// Resolved column names, in design order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub response: String,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSource {
    pub path: PathBuf,
    pub rows_kept: usize,
    pub rows_dropped: usize,
}

impl ShardSource {
    pub fn summary(&self) -> String {
        let plural = if self.rows_dropped == 1 { "" } else { "s" };
        format!("{}: {} rows kept, {} row{plural} dropped", self.path.display(), self.rows_kept, self.rows_dropped)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: ShardedDataset,
    pub schema: Schema,
    pub sources: Vec<ShardSource>,
}

impl Ingested {
    pub fn rows_dropped(&self) -> usize {
        self.sources.iter().map(|s| s.rows_dropped).sum()
    }
}

pub fn is_na(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Sorted matches of `pattern`; no match is an error.
pub fn expand_glob(pattern: &str) -> CliResult<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Config(format!("bad shard pattern {pattern:?}: {e}")))?;
    let mut out = Vec::new();
    for p in paths {
        out.push(p.map_err(|e| CliError::Ingest(e.to_string()))?);
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Config(format!("no files match {pattern:?}")));
    }
    Ok(out)
}

fn read_header(path: &Path) -> CliResult<Vec<String>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?;
    Ok(header.iter().map(|h| h.trim().to_string()).collect())
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::Ingest(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::Ingest(format!("{}:{}: {}", path.display(), pos.line(), e)),
        None => CliError::Ingest(format!("{}: {e}", path.display())),
    }
}

fn resolve(spec: &ColumnSpec, header: &[String]) -> CliResult<Schema> {
    let covariates = match &spec.covariates {
        Some(c) => c.clone(),
        None => header.iter().filter(|h| **h != spec.response).cloned().collect(),
    };
    if covariates.is_empty() {
        return Err(CliError::Config("no covariate columns selected".into()));
    }
    if covariates.contains(&spec.response) {
        return Err(CliError::Config(format!("column {:?} is both response and covariate", spec.response)));
    }
    for (i, c) in covariates.iter().enumerate() {
        if covariates[..i].contains(c) {
            return Err(CliError::Config(format!("covariate {c:?} is listed twice")));
        }
    }
    Ok(Schema { response: spec.response.clone(), covariates })
}

fn read_shard(path: &Path, schema: &Schema, na: NaPolicy) -> CliResult<(Shard, ShardSource)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> =
        rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Ingest(format!("{}: no column named {name:?}", path.display())))
    };
    let mut columns = vec![find(&schema.response)?];
    for c in &schema.covariates {
        columns.push(find(c)?);
    }
    let p = schema.covariates.len();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut row = vec![0.0; p + 1];
    let mut dropped = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_error(path, e)),
        }
        let line = record.position().map_or(0, |pos| pos.line());
        let mut missing = false;
        for (slot, &col) in row.iter_mut().zip(&columns) {
            let cell = record.get(col).unwrap_or("");
            if is_na(cell) {
                if na == NaPolicy::Error {
                    return Err(CliError::Cell {
                        path: path.to_path_buf(),
                        line,
                        column: header[col].clone(),
                        message: format!("missing value {cell:?}"),
                    });
                }
                missing = true;
                continue;
            }
            *slot = match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(CliError::Cell {
                        path: path.to_path_buf(),
                        line,
                        column: header[col].clone(),
                        message: format!("cannot parse {cell:?} as a number"),
                    })
                }
            };
        }
        if missing {
            dropped += 1;
            continue;
        }
        y.push(row[0]);
        x.extend_from_slice(&row[1..]);
    }
    if y.is_empty() {
        return Err(CliError::Ingest(format!(
            "{}: no rows left after dropping {dropped} with missing values",
            path.display()
        )));
    }
    let source = ShardSource { path: path.to_path_buf(), rows_kept: y.len(), rows_dropped: dropped };
    let shard = Shard::new(y, x, p).map_err(|e| CliError::Ingest(format!("{}: {e}", path.display())))?;
    Ok((shard, source))
}

/// Reads one shard per path, concurrently. Column selection is resolved
/// against the first file's header; every file must contain the selected columns.
pub fn ingest_shards(paths: &[PathBuf], spec: &ColumnSpec) -> CliResult<Ingested> {
    let first = paths.first().ok_or_else(|| CliError::Config("no shard files given".into()))?;
    let schema = resolve(spec, &read_header(first)?)?;
    let results: Vec<CliResult<(Shard, ShardSource)>> =
        paths.par_iter().map(|p| read_shard(p, &schema, spec.na)).collect();
    let mut shards = Vec::with_capacity(paths.len());
    let mut sources = Vec::with_capacity(paths.len());
    for r in results {
        let (shard, source) = r?;
        if source.rows_dropped > 0 {
            info!("{}", source.summary());
        }
        shards.push(shard);
        sources.push(source);
    }
    let dataset = ShardedDataset::new(shards).map_err(|e| CliError::Ingest(e.to_string()))?;
    Ok(Ingested { dataset, schema, sources })
}

/// Writes `shard` with the response first. Values are printed in shortest
/// round-trip form, so re-reading gives the same bits.
pub fn write_shard_csv(path: &Path, schema: &Schema, shard: &Shard) -> CliResult<()> {
    let out = |e: std::io::Error| CliError::Output { path: path.to_path_buf(), source: e };
    let mut w = BufWriter::new(File::create(path).map_err(out)?);
    let mut line = schema.response.clone();
    for c in &schema.covariates {
        line.push(',');
        line.push_str(c);
    }
    writeln!(w, "{line}").map_err(out)?;
    for (y, x) in shard.rows() {
        line.clear();
        line.push_str(&y.to_string());
        for v in x {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(out)?;
    }
    w.flush().map_err(out)
}

/// Writes shard `k` to `dir/<prefix>_<k>.csv` with zero-padded indices.
pub fn write_dataset_csv(
    dir: &Path,
    prefix: &str,
    schema: &Schema,
    dataset: &ShardedDataset,
) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.to_path_buf(), source: e })?;
    let width = dataset.num_shards().to_string().len();
    dataset
        .shards()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let path = dir.join(format!("{prefix}_{k:0width$}.csv"));
            write_shard_csv(&path, schema, s)?;
            Ok(path)
        })
        .collect()
}
