//! End-to-end georeferencing: projection, spline matching, rigid alignment,
//! rubber sheet and deviation reports.
//!
//! [`process`] works on in-memory inputs; [`run_pipeline`] adds file
//! reading and writes every output only after all stages have succeeded.

mod config;
mod report;

pub use config::{ConfigError, OdometryFormat, PipelineConfig, DEFAULT_N_CP, DEFAULT_STDDEV_THRESHOLD};
pub use report::RunReport;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::align::{apply_rigid, umeyama, RigidTransform};
use crate::cloud::PointCloud;
use crate::geodesy::{project_trajectory, EnuOrigin, GeodeticPosition};
use crate::interp::{interpolate_trajectory, InterpError, MatchedTrajectories};
use crate::io::{parse_gnss_log, parse_odometry_poses, read_point_cloud, write_plot_data, write_point_cloud, PoseFormat};
use crate::metrics::deviation_report;
use crate::rubber_sheet::{enclosing_cuboid, select_control_points, RubberSheet, RubberSheetError, WarpStats};
use crate::trajectory::Trajectory;

pub const REPORT_FILE: &str = "report.txt";
pub const MAP_FILE: &str = "map_georef.pcd";
pub const TRAJECTORY_FILE: &str = "trajectory_georef.txt";
pub const ALIGNED_TRAJECTORY_FILE: &str = "trajectory_aligned.txt";
pub const TRIANGULATION_FILE: &str = "triangulation.off";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Input,
    Projection,
    Interpolation,
    Alignment,
    ControlPoints,
    RubberSheet,
    Warp,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Input => "input",
            Stage::Projection => "projection",
            Stage::Interpolation => "interpolation",
            Stage::Alignment => "alignment",
            Stage::ControlPoints => "control points",
            Stage::RubberSheet => "rubber sheet",
            Stage::Warp => "warp",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

/// Whether a failure lies with the inputs or with the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    fn input(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            kind: FailureKind::Input,
            message: message.to_string(),
        }
    }

    fn numerical(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            kind: FailureKind::Numerical,
            message: message.to_string(),
        }
    }
}

/// Numeric parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub origin: Option<EnuOrigin>,
    pub spline_min_distance_m: f64,
    pub n_cp: usize,
    pub stddev_threshold_m: f64,
    pub cuboid_factor_xy: f64,
    pub cuboid_factor_z: f64,
}

impl Default for Params {
    fn default() -> Self {
        PipelineConfig::default().params()
    }
}

impl PipelineConfig {
    pub fn params(&self) -> Params {
        Params {
            origin: self.origin,
            spline_min_distance_m: self.spline_min_distance_m,
            n_cp: self.n_cp,
            stddev_threshold_m: self.stddev_threshold_m,
            cuboid_factor_xy: self.cuboid_factor_xy,
            cuboid_factor_z: self.cuboid_factor_z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inputs {
    pub gnss: Vec<GeodeticPosition>,
    /// Odometry in its local frame.
    pub odometry: Trajectory,
    pub cloud: Option<PointCloud>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    /// Matched pairs; `odometry` is in the local frame.
    pub matched: MatchedTrajectories,
    pub rigid: RigidTransform,
    /// Matched odometry after rigid alignment.
    pub aligned: Trajectory,
    /// Matched odometry after the rubber sheet.
    pub georeferenced: Trajectory,
    /// Full odometry (including dropped keyframes) after both transforms.
    pub odometry_georeferenced: Trajectory,
    pub cloud: Option<PointCloud>,
    pub cloud_warp: Option<WarpStats>,
    pub sheet: RubberSheet,
}

fn timed<T>(timings: &mut Vec<(Stage, Duration)>, stage: Stage, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    log::info!("{stage}: {:.3} s", elapsed.as_secs_f64());
    timings.push((stage, elapsed));
    out
}

fn interp_error(e: InterpError) -> PipelineError {
    match e {
        InterpError::TooFewFrames(_) | InterpError::NoMatches => PipelineError::input(Stage::Interpolation, e),
        _ => PipelineError::numerical(Stage::Interpolation, e),
    }
}

fn sheet_error(stage: Stage, e: RubberSheetError) -> PipelineError {
    match e {
        RubberSheetError::InvalidParameter(_) => PipelineError::input(stage, e),
        _ => PipelineError::numerical(stage, e),
    }
}

/// Runs every stage on in-memory inputs.
pub fn process(inputs: &Inputs, params: &Params) -> Result<Outcome, PipelineError> {
    let mut timings = Vec::new();

    let (gnss, origin) = timed(&mut timings, Stage::Projection, || project_trajectory(&inputs.gnss, params.origin))
        .map_err(|e| PipelineError::input(Stage::Projection, e))?;

    let matched = timed(&mut timings, Stage::Interpolation, || {
        interpolate_trajectory(&gnss, &inputs.odometry, params.spline_min_distance_m)
    })
    .map_err(interp_error)?;
    if !matched.dropped.is_empty() {
        log::warn!("{} keyframes could not be matched", matched.dropped.len());
    }

    let fit = timed(&mut timings, Stage::Alignment, || {
        umeyama(&matched.odometry.positions(), &matched.target.positions())
    })
    .map_err(|e| PipelineError::numerical(Stage::Alignment, e))?;
    let rigid = fit.transform;
    log::info!("alignment scale {} (not applied)", rigid.scale);
    let aligned = apply_rigid(&rigid, &matched.odometry, false);
    let odometry_aligned = apply_rigid(&rigid, &inputs.odometry, false);
    let cloud_aligned = inputs.cloud.as_ref().map(|c| apply_rigid(&rigid, c, false));
    let after_alignment = deviation_report(&aligned, &matched.target).expect("matched trajectories are index-aligned");

    let aligned_matches = MatchedTrajectories {
        odometry: aligned.clone(),
        ..matched.clone()
    };
    let (selection, corners) = timed(&mut timings, Stage::ControlPoints, || {
        let selection = select_control_points(&aligned_matches, params.n_cp, params.stddev_threshold_m)?;
        let corners = enclosing_cuboid(
            &odometry_aligned.positions(),
            &matched.target.positions(),
            params.cuboid_factor_xy,
            params.cuboid_factor_z,
        )?;
        Ok((selection, corners))
    })
    .map_err(|e| sheet_error(Stage::ControlPoints, e))?;
    log::info!(
        "{} control points selected, {} skipped",
        selection.pairs.len(),
        selection.skipped.len()
    );

    let mut pairs = selection.pairs.clone();
    pairs.extend(corners);
    let sheet = timed(&mut timings, Stage::RubberSheet, || RubberSheet::solve(pairs))
        .map_err(|e| sheet_error(Stage::RubberSheet, e))?;

    let (georeferenced, odometry_georeferenced, traj_warp, cloud_out) = timed(&mut timings, Stage::Warp, || {
        let (georeferenced, traj_warp) = sheet.transform_trajectory(&aligned);
        let (full, _) = sheet.transform_trajectory(&odometry_aligned);
        let cloud = cloud_aligned.as_ref().map(|c| sheet.transform_cloud(c));
        (georeferenced, full, traj_warp, cloud)
    });
    let after_sheet = deviation_report(&georeferenced, &matched.target).expect("matched trajectories are index-aligned");

    let (cloud, cloud_warp) = match cloud_out {
        Some((c, w)) => (Some(c), Some(w)),
        None => (None, None),
    };
    let report = RunReport {
        origin,
        poses_total: inputs.odometry.len(),
        poses_matched: matched.len(),
        poses_dropped: matched.dropped.len(),
        cp_requested: params.n_cp,
        cp_selected: selection.pairs.iter().filter_map(|p| p.source_index).collect(),
        cp_skipped: selection.skipped.clone(),
        stddev_threshold_m: params.stddev_threshold_m,
        tetrahedra: sheet.triangulation().len(),
        conditions: sheet.conditions().to_vec(),
        rigid,
        alignment_mse: fit.mse,
        trajectory_outside: traj_warp.outside,
        cloud_points: cloud.as_ref().map_or(0, PointCloud::len),
        cloud_warp: cloud_warp.as_ref().map(|w| (w.outside, w.min, w.max, w.mean)),
        after_alignment,
        after_sheet,
        timings,
    };
    Ok(Outcome {
        report,
        matched,
        rigid,
        aligned,
        georeferenced,
        odometry_georeferenced,
        cloud,
        cloud_warp,
        sheet,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| PipelineError::input(Stage::Input, format!("{}: {e}", path.display())))
}

/// Reads the inputs named in `cfg`.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::input(Stage::Config, e))?;
    let named = |path: &Path, e: &dyn fmt::Display| PipelineError::input(Stage::Input, format!("{}: {e}", path.display()));
    let gnss = parse_gnss_log(&read(&cfg.gnss)?).map_err(|e| named(&cfg.gnss, &e))?;
    let poses = read(&cfg.odometry)?;
    let odometry = match cfg.odometry_format {
        OdometryFormat::Tum => parse_odometry_poses(&poses, PoseFormat::Tum),
        OdometryFormat::Kitti => {
            let stamps_path = cfg.odometry_timestamps.as_ref().expect("validated");
            let stamps = read(stamps_path)?;
            parse_odometry_poses(&poses, PoseFormat::Kitti { timestamps: &stamps })
        }
    }
    .map_err(|e| named(&cfg.odometry, &e))?;
    let cloud = match &cfg.cloud {
        Some(path) => {
            let cloud = read_point_cloud(&read(path)?).map_err(|e| named(path, &e))?;
            if let Some(i) = cloud.first_non_finite() {
                return Err(named(path, &format!("point {i} is not finite")));
            }
            Some(cloud)
        }
        None => None,
    };
    Ok(Inputs { gnss, odometry, cloud })
}

/// Serialized outputs of a run, keyed by file name.
pub fn render_outputs(outcome: &Outcome, cfg: &PipelineConfig) -> Vec<(&'static str, Vec<u8>)> {
    let r = &outcome.report;
    let mut files = vec![
        (REPORT_FILE, r.to_string().into_bytes()),
        (
            ALIGNED_TRAJECTORY_FILE,
            write_plot_data(&outcome.aligned, &r.after_alignment.per_point).expect("lengths match"),
        ),
        (
            TRAJECTORY_FILE,
            write_plot_data(&outcome.georeferenced, &r.after_sheet.per_point).expect("lengths match"),
        ),
        (TRIANGULATION_FILE, outcome.sheet.triangulation().to_off().into_bytes()),
    ];
    if let Some(cloud) = &outcome.cloud {
        files.push((MAP_FILE, write_point_cloud(cloud, cfg.cloud_encoding)));
    }
    files
}

/// Loads inputs, runs every stage and writes the outputs to `cfg.output`.
/// Nothing is written unless all stages succeed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let outcome = process(&inputs, &cfg.params())?;
    let files = render_outputs(&outcome, cfg);
    write_outputs(&cfg.output, &files)?;
    Ok(outcome.report)
}

fn write_outputs(dir: &Path, files: &[(&'static str, Vec<u8>)]) -> Result<(), PipelineError> {
    let fail = |path: &Path, e: std::io::Error| PipelineError::input(Stage::Output, format!("{}: {e}", path.display()));
    std::fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
    // write beside the final names first so a failure leaves no half-written
    // set of outputs behind
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (dir.join(format!(".{name}.partial")), dir.join(name)))
        .collect();
    for ((tmp, _), (_, bytes)) in staged.iter().zip(files) {
        if let Err(e) = std::fs::write(tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(fail(tmp, e));
        }
    }
    for (tmp, dst) in &staged {
        std::fs::rename(tmp, dst).map_err(|e| fail(dst, e))?;
    }
    Ok(())
}
