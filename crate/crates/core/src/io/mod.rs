//! Readers and writers for the pipeline's file formats.
//!
//! * GNSS log: UTF-8 text, `#` comments, one fix per line as
//!   `timestamp lat lon alt sd_e sd_n sd_u`.
//! * Odometry: KITTI rows (12 floats, row-major 3x4 pose) with a sidecar
//!   timestamp file, or TUM rows `t x y z qx qy qz qw`.
//! * Point clouds: PCD v0.7 (ASCII or little-endian binary) and plain
//!   `x y z [intensity]` text.
//! * Plot data: `x y z meta` rows.
//!
//! Every parser rejects malformed input and names the line (and column
//! where it applies) of the problem.

mod gnss;
mod pcd;
mod plot;
mod poses;

pub use gnss::{parse_gnss_log, write_gnss_log};
pub use pcd::{read_point_cloud, write_point_cloud, PcdEncoding, PcdError};
pub use plot::{parse_plot_data, write_plot_data};
pub use poses::{parse_odometry_poses, write_kitti, write_tum, PoseFormat};

use std::fmt;

/// Location-tagged parse failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    /// 1-based line number; 0 when the problem concerns the whole input.
    pub line: usize,
    /// 1-based byte column of the offending field, if known.
    pub column: Option<usize>,
    pub message: String,
}

impl ParseError {
    pub(crate) fn at(line: usize, column: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "line {}, column {}: {}", self.line, c, self.message),
            None if self.line > 0 => write!(f, "line {}: {}", self.line, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Whitespace-separated tokens with their 1-based byte column.
pub(crate) fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

/// Data lines of a text format: skips blank lines and `#` comments and keeps
/// 1-based line numbers.
pub(crate) fn data_lines(bytes: &[u8]) -> Result<Vec<(usize, &str)>, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        ParseError::at(line, None, "invalid UTF-8")
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('#')
        })
        .collect())
}

/// Parses every token of a line as a finite f64, expecting exactly `expected`
/// tokens (or any count when `expected` is `None`).
pub(crate) fn parse_floats(
    line_no: usize,
    line: &str,
    expected: Option<usize>,
) -> Result<Vec<f64>, ParseError> {
    let toks = tokens(line);
    if let Some(n) = expected {
        if toks.len() != n {
            return Err(ParseError::at(
                line_no,
                None,
                format!("expected {n} fields, found {}", toks.len()),
            ));
        }
    }
    toks.into_iter()
        .map(|(col, t)| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(ParseError::at(line_no, Some(col), format!("non-finite value `{t}`"))),
            Err(_) => Err(ParseError::at(line_no, Some(col), format!("malformed number `{t}`"))),
        })
        .collect()
}
