//! Metrics CSV schema, summary statistics and rate-slope fitting.
//!
//! Every CSV starts with the version line [`CSV_VERSION_LINE`] followed by a
//! header with exactly the columns in [`CSV_COLUMNS`]. Optional values are
//! empty fields. Floats use Rust's shortest round-trip formatting, so a
//! summary recomputed from the files matches the in-memory one bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const CSV_VERSION_LINE: &str = "# ransom-metrics v1";

pub const CSV_COLUMNS: [&str; 10] =
    ["run_id", "seed", "t", "wall_ms", "train_loss", "stationarity", "test_metric", "momentum_error", "s_t", "w_t"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub t: u64,
    pub wall_ms: u64,
    pub train_loss: f64,
    /// Gradient norm (unconstrained) or Frank–Wolfe gap (constrained).
    pub stationarity: f64,
    pub test_metric: Option<f64>,
    pub momentum_error: Option<f64>,
    pub s_t: Option<f64>,
    pub w_t: Option<f64>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl MetricsRow {
    fn fields(&self) -> [String; 10] {
        [
            self.run_id.clone(),
            self.seed.to_string(),
            self.t.to_string(),
            self.wall_ms.to_string(),
            fmt_f64(self.train_loss),
            fmt_f64(self.stationarity),
            fmt_opt(self.test_metric),
            fmt_opt(self.momentum_error),
            fmt_opt(self.s_t),
            fmt_opt(self.w_t),
        ]
    }
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_VERSION_LINE}").map_err(|e| HarnessError::Csv(e.to_string()))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_metrics(std::io::BufWriter::new(file), rows)
}

fn parse_field<T: std::str::FromStr>(field: &str, column: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| HarnessError::parse("metrics", line, format!("bad {column} value {field:?}")))
}

fn parse_opt(field: &str, column: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(field, column, line).map(Some)
    }
}

pub fn read_metrics<R: BufRead>(mut input: R) -> Result<Vec<MetricsRow>> {
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| HarnessError::parse("metrics", 1, e.to_string()))?;
    if first.trim_end() != CSV_VERSION_LINE {
        return Err(HarnessError::parse("metrics", 1, format!("expected {CSV_VERSION_LINE:?}")));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(HarnessError::parse("metrics", 2, format!("columns must be {}", CSV_COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 3;
        let rec = rec?;
        rows.push(MetricsRow {
            run_id: rec[0].to_string(),
            seed: parse_field(&rec[1], "seed", line)?,
            t: parse_field(&rec[2], "t", line)?,
            wall_ms: parse_field(&rec[3], "wall_ms", line)?,
            train_loss: parse_field(&rec[4], "train_loss", line)?,
            stationarity: parse_field(&rec[5], "stationarity", line)?,
            test_metric: parse_opt(&rec[6], "test_metric", line)?,
            momentum_error: parse_opt(&rec[7], "momentum_error", line)?,
            s_t: parse_opt(&rec[8], "s_t", line)?,
            w_t: parse_opt(&rec[9], "w_t", line)?,
        });
    }
    Ok(rows)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_metrics(BufReader::new(file))
}

/// Mean and sample standard deviation (`n - 1` denominator; `None` for a
/// single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n > 1).then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt());
    Some(MeanStd { mean, std, n })
}

/// Mean stationarity over evaluation rows with `t > burn_in · T`, where `T`
/// is the last step in the run.
pub fn tail_average(rows: &[MetricsRow], burn_in: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(HarnessError::config(format!("burn-in fraction must lie in [0, 1), got {burn_in}")));
    }
    let horizon = rows.iter().map(|r| r.t).max().ok_or_else(|| HarnessError::config("run has no rows"))?;
    let cut = burn_in * horizon as f64;
    let tail: Vec<f64> = rows.iter().filter(|r| r.t > 0 && r.t as f64 > cut).map(|r| r.stationarity).collect();
    if tail.is_empty() {
        return Err(HarnessError::config("no evaluation rows after burn-in"));
    }
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `log value` against `log horizon`. Needs at least
/// three distinct horizons. A perfect fit (including a constant series)
/// reports `r2 = 1`.
pub fn fit_rate_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut horizons: Vec<f64> = points.iter().map(|p| p.0).collect();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    if horizons.len() < 3 {
        return Err(HarnessError::config(format!("rate fit needs 3 distinct horizons, got {}", horizons.len())));
    }
    if points.iter().any(|&(t, v)| !(t > 0.0 && v > 0.0 && v.is_finite())) {
        return Err(HarnessError::config("rate fit needs positive finite values"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r2 })
}

/// Group runs by horizon (last `t`), average each run's tail stationarity
/// across seeds, and fit the slope.
pub fn fit_rate_slope_runs(runs: &[Vec<MetricsRow>], burn_in: f64) -> Result<(Vec<(f64, f64)>, SlopeFit)> {
    let mut by_horizon: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for rows in runs {
        let horizon = rows.iter().map(|r| r.t).max().ok_or_else(|| HarnessError::config("run has no rows"))?;
        by_horizon.entry(horizon).or_default().push(tail_average(rows, burn_in)?);
    }
    let points: Vec<(f64, f64)> = by_horizon
        .into_iter()
        .map(|(t, v)| (t as f64, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let fit = fit_rate_slope(&points)?;
    Ok((points, fit))
}

pub fn fit_rate_slope_files(paths: &[impl AsRef<Path>], burn_in: f64) -> Result<(Vec<(f64, f64)>, SlopeFit)> {
    let runs = paths.iter().map(|p| read_metrics_file(p.as_ref())).collect::<Result<Vec<_>>>()?;
    fit_rate_slope_runs(&runs, burn_in)
}
