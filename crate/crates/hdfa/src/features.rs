//! Text feature files.
//!
//! ```text
//! #dim=3
//! #curvature=-1
//! cat	0.1	-0.2	0.05
//! dog	0.3	0.0	-0.4
//! ```
//!
//! The first column is the label, the rest are the coordinates. Columns are
//! separated by tabs (commas are accepted on input). Other `#` lines and
//! blank lines are ignored. Vectors are tangent vectors at the origin unless
//! the file is read as ball coordinates.

use crate::error::{CliError, Result};
use hdfa_core::harness::FeatureTable;
use hdfa_core::Curvature;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// How to interpret the vectors of a file.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Ingest {
    #[default]
    Tangent,
    /// Ball coordinates; the curvature is the file's `#curvature=` line or
    /// else the given fallback.
    Ball(f64),
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parse the text of a feature file. `path` is only used in messages.
pub fn parse_features(text: &str, path: &Path, ingest: Ingest) -> Result<FeatureTable> {
    let mut dim: Option<usize> = None;
    let mut curvature: Option<f64> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(v) = meta.trim().strip_prefix("dim=") {
                let d = v.trim().parse().map_err(|_| format_err(path, n, format!("bad dimension `{v}`")))?;
                dim = Some(d);
            } else if let Some(v) = meta.trim().strip_prefix("curvature=") {
                let c = v.trim().parse().map_err(|_| format_err(path, n, format!("bad curvature `{v}`")))?;
                curvature = Some(c);
            }
            continue;
        }
        let Some(d) = dim else {
            return Err(format_err(path, n, "data row before the #dim= header"));
        };
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let mut cols = line.split(sep);
        let label = cols.next().unwrap_or("").trim();
        if label.is_empty() {
            return Err(format_err(path, n, "empty label"));
        }
        let v = cols
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format_err(path, n, format!("bad number `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != d {
            return Err(format_err(path, n, format!("expected {d} values, found {}", v.len())));
        }
        rows.push((label.to_string(), v));
    }
    let dim = dim.ok_or_else(|| format_err(path, 1, "missing #dim= header"))?;
    let table = match ingest {
        Ingest::Tangent => FeatureTable::new(dim, rows)?.with_curvature(curvature),
        Ingest::Ball(fallback) => {
            let c = Curvature::new(curvature.unwrap_or(fallback))?;
            FeatureTable::from_ball(dim, rows, c)?
        }
    };
    Ok(table)
}

pub fn load_features(path: &Path, ingest: Ingest) -> Result<FeatureTable> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_features(&text, path, ingest)
}

/// Render a table. Floats use the shortest representation that reads back
/// to the same value.
pub fn format_features(table: &FeatureTable) -> String {
    let mut out = format!("#dim={}\n", table.dim());
    if let Some(c) = table.curvature() {
        writeln!(out, "#curvature={c}").unwrap();
    }
    for (label, v) in table.rows() {
        out.push_str(label);
        for x in v {
            write!(out, "\t{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Render labelled rows under a `#curvature=c` header followed by the
/// `extra` comment lines (without their `#`).
pub fn format_rows(dim: usize, c: f64, extra: &[String], rows: &[(String, Vec<f64>)]) -> String {
    let mut out = format!("#dim={dim}\n#curvature={c}\n");
    for e in extra {
        writeln!(out, "#{e}").unwrap();
    }
    for (label, v) in rows {
        out.push_str(label);
        for x in v {
            write!(out, "\t{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Labels that would not read back as written.
pub fn check_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<()> {
    for l in labels {
        if l.starts_with('#') || l.contains(['\t', '\n', '\r', ',']) || l.trim() != l {
            return Err(CliError::usage(format!("label `{l}` cannot be written to a feature file")));
        }
    }
    Ok(())
}

pub fn save_features(table: &FeatureTable, path: &Path) -> Result<()> {
    check_labels(table.labels())?;
    write_text(path, &format_features(table))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: PathBuf::from(path),
        source,
    })
}
