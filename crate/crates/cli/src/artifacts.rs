//! Run-directory layout and the readers/writers for its artifacts.
//!
//! A finished run leaves three files behind: `config.toml`, the exact
//! configuration that produced the run (snapshot, minus any output path);
//! `metrics.csv`, one row per round; and `final_round.json`, the aggregated
//! model and ranges after the last round. Snapshot plus metrics are the
//! reproduction contract: feeding the snapshot back through `run` writes a
//! byte-identical `metrics.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use fedldp_core::federation::RoundState;

use crate::config::ExperimentConfig;
use crate::error::{io_at, CliError};

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_STATE_FILE: &str = "final_round.json";

/// The only environment variable the tool reads: a default output
/// directory, overridden by an explicit `--out`.
pub const OUTPUT_ENV: &str = "FEDLDP_OUT";

/// Resolves where artifacts go: `--out` flag, then `FEDLDP_OUT`, then the
/// config's `output_dir`, then the command's default.
pub fn resolve_out_dir(
    flag: Option<PathBuf>,
    configured: Option<&Path>,
    default: PathBuf,
) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = configured {
        return dir.to_path_buf();
    }
    default
}

/// Renders per-round metrics as CSV: the fixed metric columns, then one
/// center/radius pair per layer. Floats print in shortest round-trip form,
/// so identical runs produce identical bytes.
pub fn metrics_csv(states: &[RoundState]) -> String {
    let layers = states.first().map_or(0, |s| s.layer_ranges.len());
    let mut out = String::from("round,accuracy,clip_rate,consumed_budget");
    for l in 0..layers {
        out.push_str(&format!(",center_{l},radius_{l}"));
    }
    out.push('\n');
    for state in states {
        let m = &state.metrics;
        out.push_str(&format!(
            "{},{},{},{}",
            m.round, m.accuracy, m.clip_rate, m.consumed_budget
        ));
        for range in &state.layer_ranges {
            out.push_str(&format!(",{},{}", range.center(), range.radius()));
        }
        out.push('\n');
    }
    out
}

/// Parsed metrics table: header names plus numeric rows.
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    /// Index of a named column.
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::config(format!("metrics file lacks a `{name}` column")))
    }
}

/// Parses a metrics CSV written by `metrics_csv`. Shape problems are
/// reported as config errors: the directory exists but does not hold what
/// a run directory promises.
pub fn parse_metrics_csv(text: &str) -> Result<MetricsTable, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::config("metrics file is empty"))?;
    let columns: Vec<String> = header.split(',').map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    CliError::config(format!(
                        "metrics row {}: `{field}` is not a number",
                        index + 1
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        if row.len() != columns.len() {
            return Err(CliError::config(format!(
                "metrics row {} has {} fields, header has {}",
                index + 1,
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok(MetricsTable { columns, rows })
}

/// Writes the three run artifacts, creating the directory if needed.
/// Re-running into the same directory overwrites deterministically.
pub fn write_run_dir(
    dir: &Path,
    snapshot: &ExperimentConfig,
    states: &[RoundState],
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    let config_path = dir.join(CONFIG_SNAPSHOT);
    fs::write(&config_path, snapshot.to_toml()?).map_err(|e| io_at(&config_path, e))?;
    let metrics_path = dir.join(METRICS_FILE);
    fs::write(&metrics_path, metrics_csv(states)).map_err(|e| io_at(&metrics_path, e))?;
    let state_path = dir.join(FINAL_STATE_FILE);
    let final_state = states.last().ok_or_else(|| {
        CliError::failed("run produced no rounds; nothing to write")
    })?;
    let json = serde_json::to_string_pretty(final_state)
        .map_err(|e| CliError::failed(format!("cannot serialize final round: {e}")))?;
    fs::write(&state_path, json).map_err(|e| io_at(&state_path, e))?;
    Ok(())
}

/// Reads a file that a command requires. Absence is an I/O error.
pub fn read_required(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_at(path, e))
}
