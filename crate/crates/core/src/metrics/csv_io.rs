use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{AggregateRow, MetricsRecord, AGGREGATE_FIELDS};
use crate::error::{HdoError, Result};

pub const METRICS_HEADER: &str =
    "step,parallel_time,eta,gamma,mu_loss_gap,grad_norm_sq_mu,mean_val_loss,mean_val_acc,mt_g,function_evals_total";

fn csv_err(path: &Path, e: csv::Error) -> HdoError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HdoError::io(path, io),
        other => HdoError::Format {
            row,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// One file per (experiment, seed); missing values are written as empty
/// fields.
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if records.is_empty() {
        w.write_record(METRICS_HEADER.split(',')).map_err(|e| csv_err(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HdoError::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Aggregated series: `step` followed by a `<name>_mean,<name>_stderr` pair
/// per metric.
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = String::from("step");
    for f in AGGREGATE_FIELDS {
        out.push_str(&format!(",{f}_mean,{f}_stderr"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.step.to_string());
        for v in &row.values {
            match v {
                Some((m, s)) => out.push_str(&format!(",{m},{s}")),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| HdoError::io(path, e))
}
