//! CSV reports and the console table.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use pact_core::inr::EpochRecord;
use pact_core::mb::LossRecord;
use pact_core::metrics::MetricSet;

use crate::config::Method;
use crate::error::{PactError, Result};

/// One evaluated reconstruction. A standalone `evaluate` has no method or
/// projection count.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub projections: Option<usize>,
    pub method: Option<Method>,
    pub metrics: MetricSet,
}

pub const METRICS_HEADER: [&str; 8] = ["seed", "projections", "method", "ssim", "psnr", "mse", "snr", "cnr"];

/// Shortest round-trip decimal; infinities as `inf` / `-inf`.
pub fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> PactError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PactError::io(path, io),
        other => PactError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let file = File::create(path).map_err(|e| PactError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PactError::io(path, e))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv(
        path,
        METRICS_HEADER,
        rows.iter().map(|r| {
            let m = &r.metrics;
            [
                r.seed.to_string(),
                r.projections.map(|n| n.to_string()).unwrap_or_default(),
                r.method.map(|m| m.to_string()).unwrap_or_default(),
                opt(m.ssim),
                opt(m.psnr),
                opt(m.mse),
                opt(m.snr),
                opt(m.cnr),
            ]
        }),
    )
}

pub fn write_mb_trace(path: &Path, trace: &[LossRecord]) -> Result<()> {
    write_csv(
        path,
        ["iteration", "data", "tv", "total"],
        trace.iter().map(|r| [r.iteration.to_string(), fmt_value(r.data), fmt_value(r.tv), fmt_value(r.total)]),
    )
}

pub fn write_inr_trace(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    write_csv(
        path,
        ["epoch", "lr", "data", "tv", "total", "gain"],
        trace.iter().map(|r| {
            [
                r.epoch.to_string(),
                fmt_value(r.lr),
                fmt_value(r.data),
                fmt_value(r.tv),
                fmt_value(r.total),
                fmt_value(r.gain),
            ]
        }),
    )
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    match v {
        None => "-".into(),
        Some(x) if x.is_infinite() => fmt_value(x),
        Some(x) => format!("{x:.decimals$}"),
    }
}

/// Fixed-width table of metrics for the console.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>6} {:>6} {:>8} {:>9} {:>11} {:>9} {:>9}",
        "seed", "proj", "method", "SSIM", "PSNR/dB", "MSE", "SNR/dB", "CNR/dB"
    );
    for r in rows {
        let m = &r.metrics;
        let mse = match m.mse {
            None => "-".into(),
            Some(x) => format!("{x:.3e}"),
        };
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>6} {:>8} {:>9} {:>11} {:>9} {:>9}",
            r.seed,
            r.projections.map_or("-".into(), |n| n.to_string()),
            r.method.map_or("-", Method::name),
            cell(m.ssim, 4),
            cell(m.psnr, 2),
            mse,
            cell(m.snr, 2),
            cell(m.cnr, 2)
        );
    }
    out
}
