//! Configuration parsing and plot-ready output files.
//!
//! Configs are TOML documents:
//!
//! ```toml
//! k = 10
//! alpha = 0.5
//! lambda = 0.25
//! # optional, with defaults
//! h = 0.1                 # 1/k
//! horizon = 10000
//! seed = 0
//! record_stride = 1
//! epsilon = 1e-6
//! stop_at_flocking = true
//!
//! [initial]
//! kind = "standard-normal"  # or "explicit" with `positions` / `velocities`
//!
//! [sweep]                   # only read by `sweep`; each list replaces the base value
//! alpha = [0.0, 0.5]
//! lambda = [0.25, 0.9]
//! ```
//!
//! Tables are written as CSV with 17 significant digits, next to a JSON
//! metadata sidecar. Nothing time- or host-dependent is written, so equal
//! inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Estimate;
use crate::error::FlockError;
use crate::experiment::{
    detect_flocking, ExperimentConfig, InitialCondition, SweepSummary, TrajectoryRecord, TrajectoryRow,
    DEFAULT_EPSILON, DEFAULT_HORIZON, RNG_ALGORITHM, STREAM_DERIVATION,
};

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t",
    "v_norm",
    "log_v_norm",
    "fiedler_colored",
    "fiedler_plain",
    "connected",
    "mu",
    "S_partial",
];

pub const SWEEP_HEADER: [&str; 8] = [
    "k",
    "alpha",
    "lambda",
    "n_runs",
    "flocking_fraction",
    "median_flocking_time",
    "mean_slope",
    "slope_std",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("config: {0}")]
    Config(String),
    #[error("config field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: malformed value `{value}` in column {column}")]
    Malformed {
        path: PathBuf,
        column: &'static str,
        value: String,
    },
    #[error(transparent)]
    Run(#[from] FlockError),
}

impl IoError {
    /// True for problems with the user's configuration rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(self, IoError::Config(_) | IoError::InvalidField { .. })
    }
}

fn config_error(e: FlockError) -> IoError {
    match e {
        FlockError::InvalidTimestep { k, h } => IoError::InvalidField {
            field: "h".into(),
            reason: format!("h = {h} violates 0 < h <= 1/k for k = {k}"),
        },
        FlockError::InvalidParameter { field, reason } => IoError::InvalidField {
            field: field.into(),
            reason,
        },
        other => IoError::Config(other.to_string()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    k: usize,
    alpha: f64,
    lambda: f64,
    h: Option<f64>,
    horizon: Option<u64>,
    seed: Option<u64>,
    record_stride: Option<u64>,
    epsilon: Option<f64>,
    stop_at_flocking: Option<bool>,
    initial: Option<InitialCondition>,
    sweep: Option<SweepGrid>,
}

/// Axis values for a sweep; missing axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub k: Option<Vec<usize>>,
    pub alpha: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub base: ExperimentConfig,
    /// Whether `h` was given rather than defaulted to `1/k`.
    pub h_explicit: bool,
    pub sweep: Option<SweepGrid>,
}

impl ParsedConfig {
    /// Cells of the sweep grid, nested as k, then alpha, then lambda.
    /// Without a `[sweep]` table this is the base config alone.
    pub fn grid(&self) -> Result<Vec<ExperimentConfig>, IoError> {
        let g = self.sweep.clone().unwrap_or_default();
        let ks = g.k.unwrap_or_else(|| vec![self.base.k]);
        let alphas = g.alpha.unwrap_or_else(|| vec![self.base.alpha]);
        let lambdas = g.lambda.unwrap_or_else(|| vec![self.base.lambda]);
        let mut cells = Vec::new();
        for &k in &ks {
            for &alpha in &alphas {
                for &lambda in &lambdas {
                    let cfg = ExperimentConfig {
                        k,
                        alpha,
                        lambda,
                        h: if self.h_explicit {
                            self.base.h
                        } else {
                            1.0 / k.max(1) as f64
                        },
                        initial: if k == self.base.k {
                            self.base.initial.clone()
                        } else {
                            InitialCondition::StandardNormal
                        },
                        ..self.base.clone()
                    };
                    cfg.validate().map_err(config_error)?;
                    cells.push(cfg);
                }
            }
        }
        Ok(cells)
    }
}

/// Splits `key=value`; the value is read as a TOML value, falling back to a bare string.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value), IoError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| IoError::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(IoError::Config(format!("override `{spec}` has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), IoError> {
    let (last, parents) = path.split_last().expect("nonempty key path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| IoError::Config(format!("override path `{}` crosses a non-table value", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Parses a config document, applies `key=value` overrides on top and fills defaults.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ParsedConfig, IoError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut table, &path, value)?;
    }
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| IoError::Config(e.message().to_string()))?;

    let mut base = ExperimentConfig::new(raw.k, raw.alpha, raw.lambda);
    let h_explicit = raw.h.is_some();
    if let Some(h) = raw.h {
        base.h = h;
    }
    base.horizon = raw.horizon.unwrap_or(DEFAULT_HORIZON);
    base.master_seed = raw.seed.unwrap_or(0);
    base.record_stride = raw.record_stride.unwrap_or(1);
    base.epsilon = raw.epsilon.unwrap_or(DEFAULT_EPSILON);
    base.stop_at_flocking = raw.stop_at_flocking.unwrap_or(true);
    base.initial = raw.initial.unwrap_or(InitialCondition::StandardNormal);
    base.validate().map_err(config_error)?;
    Ok(ParsedConfig {
        base,
        h_explicit,
        sweep: raw.sweep,
    })
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ParsedConfig, IoError> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| IoError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

/// Path of the metadata sidecar: `trajectory.csv` -> `trajectory.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("metadata serializes");
    text.push('\n');
    fs::write(path, text).map_err(file_err(path))
}

#[derive(Debug, Serialize)]
struct Metadata<'a, T: Serialize> {
    artifact: &'static str,
    version: &'static str,
    kind: &'static str,
    rng_algorithm: &'static str,
    stream_derivation: &'static str,
    master_seed: u64,
    #[serde(flatten)]
    details: &'a T,
}

fn metadata<'a, T: Serialize>(kind: &'static str, master_seed: u64, details: &'a T) -> Metadata<'a, T> {
    Metadata {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind,
        rng_algorithm: RNG_ALGORITHM,
        stream_derivation: STREAM_DERIVATION,
        master_seed,
        details,
    }
}

fn trajectory_row(r: &TrajectoryRow) -> Vec<String> {
    vec![
        r.t.to_string(),
        format_f64(r.v_norm),
        format_opt(r.log_v_norm),
        format_f64(r.fiedler_colored),
        format_f64(r.fiedler_plain),
        if r.connected { "1" } else { "0" }.to_string(),
        format_opt(r.mu),
        format_f64(r.s_partial),
    ]
}

/// Writes the trajectory table and its metadata sidecar.
pub fn write_trajectory(record: &TrajectoryRecord, config: &ExperimentConfig, path: &Path) -> Result<(), IoError> {
    write_table(path, &TRAJECTORY_HEADER, record.rows.iter().map(trajectory_row))?;

    #[derive(Serialize)]
    struct Details<'a> {
        stream: u64,
        config: &'a ExperimentConfig,
        rows: usize,
        flocked_at: Option<u64>,
    }
    let details = Details {
        stream: record.stream,
        config,
        rows: record.rows.len(),
        flocked_at: detect_flocking(record, config.epsilon),
    };
    write_json(&sidecar_path(path), &metadata("trajectory", config.master_seed, &details))
}

fn parse_field<T: std::str::FromStr>(path: &Path, column: &'static str, s: &str) -> Result<T, IoError> {
    s.parse().map_err(|_| IoError::Malformed {
        path: path.to_path_buf(),
        column,
        value: s.to_string(),
    })
}

fn parse_opt(path: &Path, column: &'static str, s: &str) -> Result<Option<f64>, IoError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(path, column, s).map(Some)
    }
}

/// Reads back the rows of a trajectory table.
pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(IoError::Malformed {
            path: path.to_path_buf(),
            column: "header",
            value: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        rows.push(TrajectoryRow {
            t: parse_field(path, "t", &rec[0])?,
            v_norm: parse_field(path, "v_norm", &rec[1])?,
            log_v_norm: parse_opt(path, "log_v_norm", &rec[2])?,
            fiedler_colored: parse_field(path, "fiedler_colored", &rec[3])?,
            fiedler_plain: parse_field(path, "fiedler_plain", &rec[4])?,
            connected: match &rec[5] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(IoError::Malformed {
                        path: path.to_path_buf(),
                        column: "connected",
                        value: other.to_string(),
                    })
                }
            },
            mu: parse_opt(path, "mu", &rec[6])?,
            s_partial: parse_field(path, "S_partial", &rec[7])?,
        });
    }
    Ok(rows)
}

/// Writes one row per sweep cell, in cell order.
pub fn write_sweep(summary: &SweepSummary, n_runs: usize, path: &Path) -> Result<(), IoError> {
    write_table(
        path,
        &SWEEP_HEADER,
        summary.cells.iter().map(|c| {
            vec![
                c.k.to_string(),
                format_f64(c.alpha),
                format_f64(c.lambda),
                c.n_runs.to_string(),
                format_f64(c.flocking_fraction),
                format_opt(c.median_flocking_time),
                format_opt(c.mean_slope),
                format_opt(c.slope_std),
            ]
        }),
    )?;

    #[derive(Serialize)]
    struct Details<'a> {
        n_runs: usize,
        cells: &'a SweepSummary,
    }
    let details = Details {
        n_runs,
        cells: summary,
    };
    write_json(&sidecar_path(path), &metadata("sweep", summary.master_seed, &details))
}

/// Writes the Monte Carlo critical-velocity estimate, with the exact value when available.
pub fn write_critical_velocity(
    path: &Path,
    k: usize,
    lambda: f64,
    samples: usize,
    master_seed: u64,
    estimate: &Estimate<f64>,
    exact: Option<f64>,
) -> Result<(), IoError> {
    write_table(
        path,
        &["k", "lambda", "samples", "estimate", "std_error", "exact"],
        [vec![
            k.to_string(),
            format_f64(lambda),
            samples.to_string(),
            format_f64(estimate.mean),
            format_f64(estimate.std_error),
            format_opt(exact),
        ]],
    )?;
    #[derive(Serialize)]
    struct Details {
        k: usize,
        lambda: f64,
        samples: usize,
        stream: u64,
    }
    let details = Details {
        k,
        lambda,
        samples,
        stream: 0,
    };
    write_json(&sidecar_path(path), &metadata("critical-velocity", master_seed, &details))
}
