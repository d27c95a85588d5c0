//! Temporal matching of odometry keyframes to the GNSS trajectory.
//!
//! For every keyframe time `t_o` four GNSS frames are picked around it (two
//! before, two after, spaced at least `d_min` apart), their timestamps are
//! mapped affinely onto `[0, 1]`, and the cubic B-spline that interpolates
//! the four frames is evaluated at the normalized `t_o`.

use nalgebra::{Matrix4, Vector4};

use crate::trajectory::{Trajectory, TrajectoryPoint};
use crate::{Point3, Vector3};

/// Spline degree. Four reference frames are needed per segment.
pub const DEGREE: usize = 3;
/// Default minimum spacing between reference frames in meters.
pub const DEFAULT_MIN_DISTANCE: f64 = 0.5;

/// Clamped knot vector for four control points of a cubic.
const KNOTS: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpError {
    #[error("GNSS trajectory has {0} frames, at least 4 are required")]
    TooFewFrames(usize),
    #[error("time {t} outside GNSS coverage [{first}, {last}]")]
    OutOfRange { t: f64, first: f64, last: f64 },
    #[error("only {found} spacing-compliant GNSS frames around time {t}")]
    InsufficientSupport { t: f64, found: usize },
    #[error("invalid spline segment: {0}")]
    InvalidSegment(&'static str),
    #[error("curve parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("no odometry keyframe could be matched to the GNSS trajectory")]
    NoMatches,
}

/// Cubic segment interpolating four reference points.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSegment {
    reference_points: [Point3; 4],
    reference_times: [f64; 4],
    control_points: [Vector3; 4],
    /// Indices of the reference frames in the source trajectory, if known.
    pub frame_indices: Option<[usize; 4]>,
    time_origin: f64,
    time_span: f64,
}

/// Cox-de Boor recursion on the clamped knot vector; returns `N_{i,3}(u)`
/// for the four control points.
fn basis(u: f64) -> [f64; 4] {
    let k = &KNOTS;
    // degree 0: [k_3, k_4) is the only non-empty span; u = 1 is assigned to it.
    let mut n = [0.0f64; 7];
    n[3] = 1.0;
    for p in 1..=DEGREE {
        for i in 0..(7 - p) {
            let left = if k[i + p] > k[i] {
                (u - k[i]) / (k[i + p] - k[i]) * n[i]
            } else {
                0.0
            };
            let right = if k[i + p + 1] > k[i + 1] {
                (k[i + p + 1] - u) / (k[i + p + 1] - k[i + 1]) * n[i + 1]
            } else {
                0.0
            };
            n[i] = left + right;
        }
    }
    [n[0], n[1], n[2], n[3]]
}

impl SplineSegment {
    /// Builds the interpolating segment. `times` are normalized parameters:
    /// strictly increasing, starting at 0 and ending at 1.
    pub fn new(points: [Point3; 4], times: [f64; 4]) -> Result<Self, InterpError> {
        if times[0] != 0.0 || times[3] != 1.0 {
            return Err(InterpError::InvalidSegment("reference times must span exactly [0, 1]"));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(InterpError::InvalidSegment("reference times must be strictly increasing"));
        }
        let mut a = Matrix4::zeros();
        for (r, &u) in times.iter().enumerate() {
            for (c, v) in basis(u).into_iter().enumerate() {
                a[(r, c)] = v;
            }
        }
        let lu = a.lu();
        let mut control = [Vector3::zeros(); 4];
        for axis in 0..3 {
            let rhs = Vector4::from_fn(|r, _| points[r][axis]);
            let sol = lu
                .solve(&rhs)
                .ok_or(InterpError::InvalidSegment("singular collocation matrix"))?;
            for (c, cp) in control.iter_mut().enumerate() {
                cp[axis] = sol[c];
            }
        }
        Ok(Self {
            reference_points: points,
            reference_times: times,
            control_points: control,
            frame_indices: None,
            time_origin: 0.0,
            time_span: 1.0,
        })
    }

    /// Builds a segment from four timed frames, normalizing their times.
    pub fn from_frames(points: [Point3; 4], timestamps: [f64; 4]) -> Result<Self, InterpError> {
        let origin = timestamps[0];
        let span = timestamps[3] - origin;
        if span.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(InterpError::InvalidSegment("reference frames must span a positive time"));
        }
        let mut times = timestamps.map(|t| (t - origin) / span);
        times[0] = 0.0;
        times[3] = 1.0;
        let mut seg = Self::new(points, times)?;
        seg.time_origin = origin;
        seg.time_span = span;
        Ok(seg)
    }

    pub fn degree(&self) -> usize {
        DEGREE
    }

    pub fn reference_points(&self) -> &[Point3; 4] {
        &self.reference_points
    }

    pub fn reference_times(&self) -> &[f64; 4] {
        &self.reference_times
    }

    /// B-spline control points solving the interpolation conditions.
    pub fn control_points(&self) -> &[Vector3; 4] {
        &self.control_points
    }

    /// Maps an absolute timestamp with the same affine map as the reference
    /// frames.
    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.time_origin) / self.time_span
    }

    pub fn evaluate(&self, u: f64) -> Result<Point3, InterpError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(InterpError::ParameterOutOfRange(u));
        }
        let n = basis(u);
        let v = self
            .control_points
            .iter()
            .zip(n)
            .fold(Vector3::zeros(), |acc, (p, w)| acc + p * w);
        Ok(Point3::from(v))
    }
}

/// Evaluates `seg` at the normalized parameter `u`.
pub fn evaluate_spline(seg: &SplineSegment, u: f64) -> Result<Point3, InterpError> {
    seg.evaluate(u)
}

/// Walks outward from a starting index, skipping frames that sit closer
/// than `d_min` to any frame already accepted.
struct Scan {
    next: Option<usize>,
    step_up: bool,
    len: usize,
}

impl Scan {
    fn take(&mut self, positions: &[Point3], accepted: &[usize], d_min: f64) -> Option<usize> {
        while let Some(i) = self.next {
            self.next = if self.step_up {
                (i + 1 < self.len).then_some(i + 1)
            } else {
                i.checked_sub(1)
            };
            let p = positions[i];
            if accepted.iter().all(|&a| (positions[a] - p).norm() >= d_min) {
                return Some(i);
            }
        }
        None
    }
}

/// Picks the four reference frames for time `t_o`.
///
/// The latest frame at or before `t_o` is always used. Then the pattern is
/// one after, one before, one after; a candidate closer than `d_min` to any
/// accepted frame is skipped and scanning continues outward in time. Near
/// the ends of the trajectory, when one side runs out, the remaining frames
/// come from the other side as long as `t_o` stays inside the selected time
/// span.
pub fn select_reference_frames(gnss: &Trajectory, t_o: f64, d_min: f64) -> Result<SplineSegment, InterpError> {
    let pts = gnss.points();
    if pts.len() < 4 {
        return Err(InterpError::TooFewFrames(pts.len()));
    }
    let (first, last) = (pts[0].timestamp, pts[pts.len() - 1].timestamp);
    if !(first..=last).contains(&t_o) {
        return Err(InterpError::OutOfRange { t: t_o, first, last });
    }
    let positions: Vec<Point3> = pts.iter().map(|p| p.position).collect();
    let k = pts.partition_point(|p| p.timestamp <= t_o) - 1;
    let mut before = Scan {
        next: k.checked_sub(1),
        step_up: false,
        len: pts.len(),
    };
    let mut after = Scan {
        next: (k + 1 < pts.len()).then_some(k + 1),
        step_up: true,
        len: pts.len(),
    };
    let mut accepted = vec![k];
    for up in [true, false, true] {
        let scan = if up { &mut after } else { &mut before };
        if let Some(i) = scan.take(&positions, &accepted, d_min) {
            accepted.push(i);
        }
    }
    while accepted.len() < 4 {
        let got = before
            .take(&positions, &accepted, d_min)
            .or_else(|| after.take(&positions, &accepted, d_min));
        match got {
            Some(i) => accepted.push(i),
            None => break,
        }
    }
    accepted.sort_unstable();
    let covers = accepted.len() == 4 && pts[accepted[3]].timestamp >= t_o;
    if !covers {
        return Err(InterpError::InsufficientSupport {
            t: t_o,
            found: accepted.len(),
        });
    }
    let idx = [accepted[0], accepted[1], accepted[2], accepted[3]];
    let mut seg = SplineSegment::from_frames(idx.map(|i| positions[i]), idx.map(|i| pts[i].timestamp))?;
    seg.frame_indices = Some(idx);
    Ok(seg)
}

/// Odometry keyframes paired with interpolated GNSS positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedTrajectories {
    /// Matched odometry keyframes in the local frame.
    pub odometry: Trajectory,
    /// Interpolated ENU positions at the odometry timestamps. Each point
    /// carries the stddev of the temporally nearest GNSS fix.
    pub target: Trajectory,
    /// Index into the input odometry of every matched pair.
    pub matched: Vec<usize>,
    /// Odometry indices that could not be matched.
    pub dropped: Vec<usize>,
}

impl MatchedTrajectories {
    pub fn len(&self) -> usize {
        self.matched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matched.is_empty()
    }

    /// GNSS stddev attached to matched pair `i` (zero if the GNSS input
    /// carried none).
    pub fn stddev(&self, i: usize) -> Vector3 {
        self.target.points()[i].stddev.unwrap_or_else(Vector3::zeros)
    }
}

fn nearest_fix(gnss: &Trajectory, t: f64) -> usize {
    let pts = gnss.points();
    let j = pts.partition_point(|p| p.timestamp < t);
    match j {
        0 => 0,
        j if j == pts.len() => j - 1,
        j if t - pts[j - 1].timestamp <= pts[j].timestamp - t => j - 1,
        j => j,
    }
}

/// Matches every odometry keyframe to an interpolated GNSS position.
/// Keyframes outside the GNSS coverage, or without enough well-spaced
/// support, are listed in `dropped`.
pub fn interpolate_trajectory(
    gnss: &Trajectory,
    odometry: &Trajectory,
    d_min: f64,
) -> Result<MatchedTrajectories, InterpError> {
    if gnss.len() < 4 {
        return Err(InterpError::TooFewFrames(gnss.len()));
    }
    let mut matched = Vec::new();
    let mut dropped = Vec::new();
    let mut target = Vec::new();
    for (i, kf) in odometry.points().iter().enumerate() {
        let seg = match select_reference_frames(gnss, kf.timestamp, d_min) {
            Ok(seg) => seg,
            Err(InterpError::OutOfRange { .. } | InterpError::InsufficientSupport { .. }) => {
                dropped.push(i);
                continue;
            }
            Err(e) => return Err(e),
        };
        let u = seg.normalize(kf.timestamp).clamp(0.0, 1.0);
        let pos = seg.evaluate(u)?;
        let mut tp = TrajectoryPoint::new(kf.timestamp, pos);
        tp.stddev = Some(
            gnss.points()[nearest_fix(gnss, kf.timestamp)]
                .stddev
                .unwrap_or_else(Vector3::zeros),
        );
        matched.push(i);
        target.push(tp);
    }
    if matched.is_empty() {
        return Err(InterpError::NoMatches);
    }
    if !dropped.is_empty() {
        log::info!("{} odometry keyframes without GNSS match", dropped.len());
    }
    Ok(MatchedTrajectories {
        odometry: odometry.select(&matched),
        target: Trajectory::new(target).expect("odometry timestamps are increasing"),
        matched,
        dropped,
    })
}
