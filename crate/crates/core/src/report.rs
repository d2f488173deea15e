//! CSV and JSON writers for [`AuditReport`].

use std::io::Write;
use std::path::Path;

use crate::campaign::{AuditRecord, AuditReport};
use crate::config::OutputFormat;
use crate::numfmt::sci17;

/// Column order of the CSV report.
pub const CSV_COLUMNS: [&str; 13] = [
    "audit_kind",
    "function",
    "q",
    "x",
    "r",
    "variant_pairing",
    "variant_first_factor",
    "moment_source",
    "lhs",
    "rhs",
    "margin",
    "holds",
    "reason_code",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn csv_row(r: &AuditRecord) -> [String; 13] {
    [
        r.audit_kind.clone(),
        r.function.clone(),
        sci17(r.q),
        sci17(r.x),
        sci17(r.r),
        r.variant_pairing
            .map(|p| p.as_str())
            .unwrap_or("")
            .to_string(),
        r.variant_first_factor
            .map(|p| p.as_str())
            .unwrap_or("")
            .to_string(),
        r.moment_source
            .map(|p| p.as_str())
            .unwrap_or("")
            .to_string(),
        sci17(r.lhs),
        sci17(r.rhs),
        sci17(r.margin),
        r.holds.to_string(),
        r.reason_code.clone(),
    ]
}

pub fn write_csv<W: Write>(report: &AuditReport, w: W) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in &report.records {
        out.write_record(csv_row(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(report: &AuditReport, mut w: W) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_report<W: Write>(
    report: &AuditReport,
    format: OutputFormat,
    w: W,
) -> Result<(), ReportError> {
    match format {
        OutputFormat::Csv => write_csv(report, w),
        OutputFormat::Json => write_json(report, w),
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(
    report: &AuditReport,
    format: OutputFormat,
    path: Option<&Path>,
) -> Result<(), ReportError> {
    match path {
        Some(p) => {
            let file = std::io::BufWriter::new(std::fs::File::create(p)?);
            write_report(report, format, file)
        }
        None => write_report(report, format, std::io::stdout().lock()),
    }
}
