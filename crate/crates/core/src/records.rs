//! Curve records and their CSV / JSON forms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    CrbBound,
    Ser,
}

/// One point of one curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub sweep_name: String,
    pub sweep_value: f64,
    pub m: usize,
    pub rho: f64,
    pub metric_name: Metric,
    pub estimator_or_bound: String,
    pub value: f64,
    pub ci_half_width: f64,
    pub trials: u64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 10] = [
    "sweep_name",
    "sweep_value",
    "m",
    "rho",
    "metric_name",
    "estimator_or_bound",
    "value",
    "ci_half_width",
    "trials",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format `{other}`, expected csv or json"))),
        }
    }
}

/// Plain decimal with at least 17 significant digits, enough to round-trip.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 {
        return "0.000000000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let e = x.abs().log10().floor() as i64;
    let decimals = (17 - e).max(1) as usize;
    format!("{x:.decimals$}")
}

fn metric_str(m: Metric) -> &'static str {
    match m {
        Metric::Mse => "mse",
        Metric::CrbBound => "crb_bound",
        Metric::Ser => "ser",
    }
}

pub fn write_csv<W: Write>(records: &[CurveRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.sweep_name.clone(),
            format_decimal(r.sweep_value),
            r.m.to_string(),
            format_decimal(r.rho),
            metric_str(r.metric_name).to_string(),
            r.estimator_or_bound.clone(),
            format_decimal(r.value),
            format_decimal(r.ci_half_width),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<CurveRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().collect()
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Writes records to any sink; `label` names it in errors.
pub fn write_records<W: Write>(records: &[CurveRecord], out: W, format: Format, label: &Path) -> Result<()> {
    let mut w = BufWriter::new(out);
    match format {
        Format::Csv => write_csv(records, &mut w).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(label, io),
            other => format_err(label, format!("{other:?}")),
        })?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, records).map_err(|e| format_err(label, e))?;
            w.write_all(b"\n").map_err(|e| io_err(label, e))?;
        }
    }
    w.flush().map_err(|e| io_err(label, e))
}

pub fn emit_csv(records: &[CurveRecord], path: &Path) -> Result<()> {
    emit(records, path, Format::Csv)
}

pub fn emit_json(records: &[CurveRecord], path: &Path) -> Result<()> {
    emit(records, path, Format::Json)
}

pub fn parse_csv(path: &Path) -> Result<Vec<CurveRecord>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_csv(BufReader::new(f)).map_err(|e| format_err(path, e))
}

pub fn parse_json(path: &Path) -> Result<Vec<CurveRecord>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| format_err(path, e))
}

pub fn emit(records: &[CurveRecord], path: &Path, format: Format) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_records(records, f, format, path)
}

pub fn parse(path: &Path, format: Format) -> Result<Vec<CurveRecord>> {
    match format {
        Format::Csv => parse_csv(path),
        Format::Json => parse_json(path),
    }
}
