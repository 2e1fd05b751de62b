//! CSV and JSON tables.
//!
//! Numbers are printed in the shortest form that parses back to the same
//! `f64`; nothing time-dependent goes into the output, so identical inputs
//! give identical bytes.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::sweep::{Record, SweepConfig, SweepResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e16)`.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn row(r: &Record) -> Vec<String> {
    let mut out: Vec<String> = r.coords.iter().map(|&c| cell(c)).collect();
    out.extend(r.values.iter().map(|&v| cell(v)));
    out.push(match r.stable {
        Some(true) => "true".into(),
        Some(false) => "false".into(),
        None => String::new(),
    });
    out.push(r.error.clone().unwrap_or_default());
    out
}

pub fn write_csv(result: &SweepResult, out: impl Write) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Output(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(result.config.columns()).map_err(err)?;
    for r in &result.records {
        w.write_record(row(r)).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

/// SHA-256 of the canonical JSON form of the sweep configuration.
pub fn config_hash(cfg: &SweepConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("sweep configs always serialize");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct Provenance<'a> {
    config_sha256: String,
    version: &'static str,
    stage: String,
    physicality_tol: f64,
    step_tolerance: f64,
    dt_s: Option<f64>,
    config: &'a SweepConfig,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    columns: Vec<String>,
    records: Vec<serde_json::Map<String, serde_json::Value>>,
    provenance: Provenance<'a>,
}

pub fn write_json(result: &SweepResult, mut out: impl Write) -> Result<(), CliError> {
    let cfg = &result.config;
    let columns = cfg.columns();
    let number = |x: Option<f64>| match x {
        Some(v) if v.is_finite() => serde_json::Value::from(v),
        _ => serde_json::Value::Null,
    };
    let records = result
        .records
        .iter()
        .map(|r| {
            let mut values: Vec<serde_json::Value> = r.coords.iter().map(|&c| number(c)).collect();
            values.extend(r.values.iter().map(|&v| number(v)));
            values.push(
                r.stable
                    .map_or(serde_json::Value::Null, serde_json::Value::from),
            );
            values.push(
                r.error
                    .clone()
                    .map_or(serde_json::Value::Null, serde_json::Value::from),
            );
            columns.iter().cloned().zip(values).collect()
        })
        .collect();
    let n = &cfg.params.numerics;
    let table = JsonTable {
        columns: columns.clone(),
        records,
        provenance: Provenance {
            config_sha256: config_hash(cfg),
            version: VERSION,
            stage: cfg.stage.to_string(),
            physicality_tol: n.physicality_tol,
            step_tolerance: n.step_tolerance,
            dt_s: n.dt_s,
            config: cfg,
        },
    };
    serde_json::to_writer_pretty(&mut out, &table).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Output(e.to_string()))
}
