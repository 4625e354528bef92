use std::path::Path;

use super::{ComparisonSummary, EpochMetrics, RunReport, Stage};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,wall_s";

/// `%g`-style rendering with 6 significant digits.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    fn trim(s: &str) -> &str {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            s
        }
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize)).to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn render_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for e in &report.epochs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            format_real(e.train_loss),
            opt(e.train_acc),
            opt(e.test_loss),
            opt(e.test_acc),
            opt(e.wall_seconds)
        ));
    }
    out
}

pub fn emit_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_atomic(path, render_csv(report).as_bytes())
}

/// `epoch,<metric>_a,<metric>_b`, one row per common epoch.
pub fn render_comparison_csv(summary: &ComparisonSummary) -> String {
    let m = summary.metric.name();
    let mut out = format!("epoch,{m}_a,{m}_b\n");
    for &(epoch, a, b) in &summary.paired {
        out.push_str(&format!("{epoch},{},{}\n", format_real(a), format_real(b)));
    }
    out
}

pub fn emit_comparison_csv(summary: &ComparisonSummary, path: &Path) -> Result<()> {
    write_atomic(path, render_comparison_csv(summary).as_bytes())
}

/// Parses a report table. Run metadata that the table does not carry
/// (config fingerprint, seed) is left empty / zero.
pub fn parse_csv(text: &str, run_id: &str, phase: Stage) -> Result<RunReport> {
    let bad = |m: String| Error::BadReport(m);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(bad(format!("header must be `{CSV_HEADER}`")));
    }
    let mut report = RunReport::new(run_id, phase, "", 0);
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| -> Result<Option<f64>> {
            let s = record.get(k).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| bad(format!("row {}: `{s}` is not a number", i + 2)))
        };
        let epoch =
            record.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("row {}: bad epoch", i + 2)))?;
        report.epochs.push(EpochMetrics {
            epoch,
            train_loss: field(1)?.ok_or_else(|| bad(format!("row {}: missing train_loss", i + 2)))?,
            train_acc: field(2)?,
            test_loss: field(3)?,
            test_acc: field(4)?,
            wall_seconds: field(5)?,
        });
    }
    report.validate()?;
    Ok(report)
}

/// Reads `<run_id>.<phase>.csv`, taking run id and phase from the file name.
pub fn read_csv(path: &Path) -> Result<RunReport> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::BadReport(format!("{}: unusable file name", path.display())))?;
    let (run_id, phase) = stem
        .rsplit_once('.')
        .ok_or_else(|| Error::BadReport(format!("{}: expected <run_id>.<phase>.csv", path.display())))?;
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, run_id, phase.parse()?)
}
