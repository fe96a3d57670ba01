//! Artifact writers: CSV series and JSON summaries.
//!
//! Outputs are deterministic down to the byte: stats live in ordered maps,
//! floats serialize with the shortest round-trip representation, and rows
//! are written in the order produced.

use std::path::{Path, PathBuf};

use crate::error::{HarnessError, HarnessResult};
use crate::spec::ExperimentResult;

pub fn ensure_dir(dir: &Path) -> HarnessResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Write a numeric table with a header row.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<f64>],
) -> HarnessResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(HarnessError::param(
                "csv-row",
                format!(
                    "{}: row has {} cells under a {}-column header",
                    path.display(),
                    row.len(),
                    header.len()
                ),
            ));
        }
        writer.write_record(row.iter().map(|v| format_float(*v)))?;
    }
    writer.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Write a table whose first column is a label.
pub fn write_labeled_csv(
    path: &Path,
    header: &[&str],
    rows: &[(String, Vec<f64>)],
) -> HarnessResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for (label, values) in rows {
        let mut record = vec![label.clone()];
        record.extend(values.iter().map(|v| format_float(*v)));
        if record.len() != header.len() {
            return Err(HarnessError::param(
                "csv-row",
                format!(
                    "{}: row has {} cells under a {}-column header",
                    path.display(),
                    record.len(),
                    header.len()
                ),
            ));
        }
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Shortest representation that round-trips, same as the JSON encoder, so
/// the two artifact kinds always agree on a value.
fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json's float path; reuse it rather than pulling in a second
    // formatter that could disagree.
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

/// Write the run summary; returns the path written.
pub fn write_summary(dir: &Path, result: &ExperimentResult) -> HarnessResult<PathBuf> {
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}
