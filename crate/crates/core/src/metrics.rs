//! Deviation statistics between index-aligned trajectories.

use std::fmt;

use crate::trajectory::Trajectory;
use crate::Point3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("trajectories differ in length ({left} vs {right})")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// Euclidean deviation per point and its summary. The standard deviation is
/// the population value (divided by `n`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationReport {
    pub per_point: Vec<f64>,
    pub mae: f64,
    pub stddev: f64,
    pub max: f64,
}

impl DeviationReport {
    pub fn from_deviations(per_point: Vec<f64>) -> Self {
        let n = per_point.len();
        if n == 0 {
            return Self::default();
        }
        let mae = per_point.iter().sum::<f64>() / n as f64;
        let var = per_point.iter().map(|d| (d - mae) * (d - mae)).sum::<f64>() / n as f64;
        let max = per_point.iter().cloned().fold(0.0, f64::max);
        Self {
            per_point,
            mae,
            stddev: var.sqrt(),
            max,
        }
    }

    pub fn len(&self) -> usize {
        self.per_point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_point.is_empty()
    }

    /// Report over the given subset of indices.
    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        Self::from_deviations(indices.into_iter().map(|i| self.per_point[i]).collect())
    }
}

impl fmt::Display for DeviationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "points: {}", self.len())?;
        writeln!(f, "mae_m: {:.6}", self.mae)?;
        writeln!(f, "stddev_m: {:.6}", self.stddev)?;
        write!(f, "max_m: {:.6}", self.max)
    }
}

pub fn point_deviations(a: &[Point3], b: &[Point3]) -> Result<DeviationReport, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(DeviationReport::from_deviations(
        a.iter().zip(b).map(|(p, q)| (p - q).norm()).collect(),
    ))
}

/// Deviation of every odometry point from its target counterpart.
pub fn deviation_report(odom: &Trajectory, target: &Trajectory) -> Result<DeviationReport, LengthMismatch> {
    point_deviations(&odom.positions(), &target.positions())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{apply_rigid, RigidTransform};
    use crate::trajectory::TrajectoryPoint;
    use crate::Vector3;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn traj(pts: &[Point3]) -> Trajectory {
        Trajectory::new(pts.iter().enumerate().map(|(i, p)| TrajectoryPoint::new(i as f64, *p)).collect()).unwrap()
    }

    #[test]
    fn identical_and_offset() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
        let r = deviation_report(&traj(&pts), &traj(&pts)).unwrap();
        assert_eq!((r.mae, r.stddev, r.max), (0.0, 0.0, 0.0));
        let shifted: Vec<Point3> = pts.iter().map(|p| p + Vector3::new(3.0, 4.0, 0.0)).collect();
        let r = deviation_report(&traj(&pts), &traj(&shifted)).unwrap();
        assert!(r.per_point.iter().all(|&d| d == 5.0));
        assert_eq!((r.mae, r.stddev, r.max), (5.0, 0.0, 5.0));
    }

    #[test]
    fn length_mismatch() {
        let a = [Point3::origin(); 3];
        assert_eq!(point_deviations(&a, &a[..2]), Err(LengthMismatch { left: 3, right: 2 }));
    }

    #[test]
    fn text_form() {
        let r = DeviationReport::from_deviations(vec![1.0, 3.0]);
        assert_eq!(r.to_string(), "points: 2\nmae_m: 2.000000\nstddev_m: 1.000000\nmax_m: 3.000000");
    }

    fn coords() -> impl Strategy<Value = Vec<(f64, f64, f64, f64, f64, f64)>> {
        proptest::collection::vec(
            (-100.0..100.0, -100.0..100.0, -10.0..10.0, -100.0..100.0, -100.0..100.0, -10.0..10.0),
            1..60,
        )
    }

    proptest! {
        #[test]
        fn matches_direct_recomputation(c in coords()) {
            let a: Vec<Point3> = c.iter().map(|t| Point3::new(t.0, t.1, t.2)).collect();
            let b: Vec<Point3> = c.iter().map(|t| Point3::new(t.3, t.4, t.5)).collect();
            let r = point_deviations(&a, &b).unwrap();
            let d: Vec<f64> = c.iter().map(|t| ((t.0 - t.3).powi(2) + (t.1 - t.4).powi(2) + (t.2 - t.5).powi(2)).sqrt()).collect();
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            prop_assert!((r.mae - mean).abs() <= 1e-12 * (1.0 + mean));
            prop_assert!((r.max - d.iter().cloned().fold(f64::MIN, f64::max)).abs() == 0.0);
            prop_assert!(r.mae <= r.max && r.stddev >= 0.0);
            let mean_sq = d.iter().map(|x| x * x).sum::<f64>() / n;
            prop_assert!((r.stddev.powi(2) - (mean_sq - mean * mean)).abs() <= 1e-12 * mean_sq.max(1e-300) * 10.0);
        }

        #[test]
        fn rigid_invariance(c in coords(), angle in -3.0f64..3.0, t in (-500.0f64..500.0, -500.0f64..500.0, -50.0f64..50.0)) {
            let a: Vec<Point3> = c.iter().map(|t| Point3::new(t.0, t.1, t.2)).collect();
            let b: Vec<Point3> = c.iter().map(|t| Point3::new(t.3, t.4, t.5)).collect();
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -0.5, 1.0)), angle).into_inner();
            let tf = RigidTransform::new(rot, Vector3::new(t.0, t.1, t.2), 1.0).unwrap();
            let before = point_deviations(&a, &b).unwrap();
            let after = point_deviations(&apply_rigid(&tf, &a, false), &apply_rigid(&tf, &b, false)).unwrap();
            prop_assert!((before.mae - after.mae).abs() < 1e-9);
            prop_assert!((before.stddev - after.stddev).abs() < 1e-9);
            prop_assert!((before.max - after.max).abs() < 1e-9);
        }
    }
}
