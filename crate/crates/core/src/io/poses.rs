use std::fmt::Write;

use super::{data_lines, parse_floats, ParseError};
use crate::trajectory::{Trajectory, TrajectoryPoint};
use crate::Point3;

const QUATERNION_TOLERANCE: f64 = 1e-3;

/// Layout of an odometry pose file.
#[derive(Debug, Clone, Copy)]
pub enum PoseFormat<'a> {
    /// Row-major 3x4 poses; the sidecar holds one timestamp per pose row.
    Kitti { timestamps: &'a [u8] },
    /// `t x y z qx qy qz qw`.
    Tum,
}

/// Reads an odometry trajectory. Only translations are kept.
pub fn parse_odometry_poses(bytes: &[u8], format: PoseFormat<'_>) -> Result<Trajectory, ParseError> {
    let rows = data_lines(bytes)?;
    let mut samples: Vec<(usize, f64, Point3)> = Vec::with_capacity(rows.len());
    match format {
        PoseFormat::Tum => {
            for (no, line) in rows {
                let v = parse_floats(no, line, Some(8))?;
                let qn = (v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]).sqrt();
                if (qn - 1.0).abs() > QUATERNION_TOLERANCE {
                    return Err(ParseError::at(
                        no,
                        None,
                        format!("quaternion norm {qn} deviates from 1 by more than {QUATERNION_TOLERANCE}"),
                    ));
                }
                samples.push((no, v[0], Point3::new(v[1], v[2], v[3])));
            }
        }
        PoseFormat::Kitti { timestamps } => {
            let stamps = data_lines(timestamps)?;
            if stamps.len() != rows.len() {
                return Err(ParseError::at(
                    0,
                    None,
                    format!(
                        "{} pose rows but {} timestamps in the sidecar file",
                        rows.len(),
                        stamps.len()
                    ),
                ));
            }
            for ((no, line), (tno, tline)) in rows.into_iter().zip(stamps) {
                let v = parse_floats(no, line, Some(12))?;
                let t = parse_floats(tno, tline, Some(1))?[0];
                samples.push((no, t, Point3::new(v[3], v[7], v[11])));
            }
        }
    }
    for w in samples.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(ParseError::at(w[1].0, None, "timestamp not strictly increasing"));
        }
    }
    let points = samples
        .into_iter()
        .map(|(_, t, p)| TrajectoryPoint::new(t, p))
        .collect();
    Trajectory::new(points).map_err(|e| ParseError::at(0, None, e.to_string()))
}

/// TUM rows with identity orientation.
pub fn write_tum(traj: &Trajectory) -> Vec<u8> {
    let mut out = String::new();
    for p in traj.points() {
        let q = p.position;
        let _ = writeln!(out, "{} {} {} {} 0 0 0 1", p.timestamp, q.x, q.y, q.z);
    }
    out.into_bytes()
}

/// KITTI pose rows (identity rotation) and the matching timestamp sidecar.
pub fn write_kitti(traj: &Trajectory) -> (Vec<u8>, Vec<u8>) {
    let mut poses = String::new();
    let mut stamps = String::new();
    for p in traj.points() {
        let q = p.position;
        let _ = writeln!(poses, "1 0 0 {} 0 1 0 {} 0 0 1 {}", q.x, q.y, q.z);
        let _ = writeln!(stamps, "{}", p.timestamp);
    }
    (poses.into_bytes(), stamps.into_bytes())
}
