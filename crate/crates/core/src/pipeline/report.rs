use std::fmt::{self, Write};
use std::time::Duration;

use super::Stage;
use crate::align::RigidTransform;
use crate::geodesy::EnuOrigin;
use crate::metrics::DeviationReport;

/// Summary of a pipeline run. The text form (via `Display`) leaves out the
/// timings so that identical runs produce identical reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub origin: EnuOrigin,
    pub poses_total: usize,
    pub poses_matched: usize,
    pub poses_dropped: usize,
    pub cp_requested: usize,
    /// Matched-trajectory indices used as control points.
    pub cp_selected: Vec<usize>,
    pub cp_skipped: Vec<usize>,
    pub stddev_threshold_m: f64,
    pub tetrahedra: usize,
    pub conditions: Vec<f64>,
    pub rigid: RigidTransform,
    pub alignment_mse: f64,
    pub trajectory_outside: usize,
    pub cloud_points: usize,
    /// Outside count and min / max / mean displacement of the cloud warp.
    pub cloud_warp: Option<(usize, f64, f64, f64)>,
    pub after_alignment: DeviationReport,
    pub after_sheet: DeviationReport,
    pub timings: Vec<(Stage, Duration)>,
}

fn indices(v: &[usize]) -> String {
    let mut s = String::new();
    for (k, i) in v.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{i}");
    }
    s
}

fn deviation(f: &mut fmt::Formatter<'_>, prefix: &str, r: &DeviationReport) -> fmt::Result {
    writeln!(f, "{prefix}.points: {}", r.len())?;
    writeln!(f, "{prefix}.mae_m: {:.6}", r.mae)?;
    writeln!(f, "{prefix}.stddev_m: {:.6}", r.stddev)?;
    writeln!(f, "{prefix}.max_m: {:.6}", r.max)
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# georeferencing run report")?;
        writeln!(f, "# deviations are Euclidean distances to the interpolated GNSS trajectory;")?;
        writeln!(f, "# stddev is the population standard deviation")?;
        let o = &self.origin;
        writeln!(f, "origin: {} {} {}", o.latitude, o.longitude, o.altitude)?;
        writeln!(f, "poses.total: {}", self.poses_total)?;
        writeln!(f, "poses.matched: {}", self.poses_matched)?;
        writeln!(f, "poses.dropped: {}", self.poses_dropped)?;
        let m = self.rigid.to_homogeneous();
        for r in 0..4 {
            writeln!(
                f,
                "rigid.row{r}: {:.12} {:.12} {:.12} {:.12}",
                m[(r, 0)],
                m[(r, 1)],
                m[(r, 2)],
                m[(r, 3)]
            )?;
        }
        writeln!(f, "rigid.scale_not_applied: {:.12}", self.rigid.scale)?;
        writeln!(f, "rigid.mse_m2: {:.9e}", self.alignment_mse)?;
        deviation(f, "after_alignment", &self.after_alignment)?;
        writeln!(f, "cp.requested: {}", self.cp_requested)?;
        writeln!(f, "cp.stddev_threshold_m: {}", self.stddev_threshold_m)?;
        writeln!(f, "cp.selected_count: {}", self.cp_selected.len())?;
        writeln!(f, "cp.skipped_count: {}", self.cp_skipped.len())?;
        writeln!(f, "cp.selected: {}", indices(&self.cp_selected))?;
        writeln!(f, "cp.skipped: {}", indices(&self.cp_skipped))?;
        writeln!(f, "sheet.tetrahedra: {}", self.tetrahedra)?;
        let worst = self.conditions.iter().cloned().fold(0.0, f64::max);
        writeln!(f, "sheet.condition_max: {worst:.6e}")?;
        let mut conds = String::new();
        for (k, c) in self.conditions.iter().enumerate() {
            if k > 0 {
                conds.push(' ');
            }
            let _ = write!(conds, "{c:.3e}");
        }
        writeln!(f, "sheet.conditions: {conds}")?;
        writeln!(f, "trajectory.outside: {}", self.trajectory_outside)?;
        writeln!(f, "cloud.points: {}", self.cloud_points)?;
        if let Some((outside, min, max, mean)) = self.cloud_warp {
            writeln!(f, "cloud.outside: {outside}")?;
            writeln!(f, "cloud.displacement_min_m: {min:.6}")?;
            writeln!(f, "cloud.displacement_max_m: {max:.6}")?;
            writeln!(f, "cloud.displacement_mean_m: {mean:.6}")?;
        }
        deviation(f, "after_sheet", &self.after_sheet)
    }
}
