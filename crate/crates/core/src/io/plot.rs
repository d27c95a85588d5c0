use std::fmt::Write;

use super::{data_lines, parse_floats, ParseError};
use crate::trajectory::Trajectory;
use crate::Point3;

/// `x y z meta` rows, one per trajectory point.
pub fn write_plot_data(traj: &Trajectory, meta: &[f64]) -> Result<Vec<u8>, ParseError> {
    if meta.len() != traj.len() {
        return Err(ParseError::at(
            0,
            None,
            format!("{} meta values for {} trajectory points", meta.len(), traj.len()),
        ));
    }
    let mut out = String::new();
    for (p, m) in traj.points().iter().zip(meta) {
        let q = p.position;
        let _ = writeln!(out, "{} {} {} {}", q.x, q.y, q.z, m);
    }
    Ok(out.into_bytes())
}

/// Reads `x y z` or `x y z meta` rows; returns positions and the meta column
/// (empty when absent).
pub fn parse_plot_data(bytes: &[u8]) -> Result<(Vec<Point3>, Vec<f64>), ParseError> {
    let mut points = Vec::new();
    let mut meta = Vec::new();
    let mut width = None;
    for (no, line) in data_lines(bytes)? {
        let v = parse_floats(no, line, width)?;
        if !(v.len() == 3 || v.len() == 4) {
            return Err(ParseError::at(no, None, format!("expected 3 or 4 fields, found {}", v.len())));
        }
        width = Some(v.len());
        points.push(Point3::new(v[0], v[1], v[2]));
        if v.len() == 4 {
            meta.push(v[3]);
        }
    }
    Ok((points, meta))
}
