//! Piecewise-linear 3D rubber-sheet transformation.
//!
//! Control points pair rigidly aligned odometry positions (source) with
//! matched GNSS positions (target). Eight corners of a cuboid enclosing both
//! trajectories are added as fixed points. The source points are
//! tetrahedralized and every tetrahedron `j` gets the 4x4 matrix `T_j` that
//! maps its four source vertices onto their targets. A point is warped with
//! the matrix of the tetrahedron containing it.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::cloud::PointCloud;
use crate::delaunay::{tetrahedralize_with, DelaunayError, Locator, Tetrahedralization};
use crate::interp::MatchedTrajectories;
use crate::qr::FullPivQr;
use crate::trajectory::Trajectory;
use crate::Point3;

/// Condition number above which a tetrahedron's system counts as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Allowed deviation of a solved bottom row from `(0, 0, 0, 1)`.
pub const AFFINE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_FACTOR_XY: f64 = 0.1;
pub const DEFAULT_FACTOR_Z: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RubberSheetError {
    #[error("no control points survived selection")]
    NoControlPoints,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("enclosing cuboid has zero extent along {axis}")]
    DegenerateExtent { axis: char },
    #[error("triangulation failed: {0}")]
    Triangulation(#[from] DelaunayError),
    #[error("tetrahedron {tetrahedron} with vertices {vertices:?} is singular (condition {condition:e})")]
    Singular {
        tetrahedron: usize,
        vertices: [usize; 4],
        condition: f64,
    },
    #[error("tetrahedron {tetrahedron} solved to a non-affine matrix (bottom row off by {deviation:e})")]
    NotAffine { tetrahedron: usize, deviation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlPointKind {
    Trajectory,
    CuboidCorner,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPointPair {
    pub source: Point3,
    pub target: Point3,
    pub kind: ControlPointKind,
    /// Index into the matched trajectories for trajectory control points.
    pub source_index: Option<usize>,
}

impl ControlPointPair {
    pub fn fixed(p: Point3) -> Self {
        Self {
            source: p,
            target: p,
            kind: ControlPointKind::CuboidCorner,
            source_index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSelection {
    pub pairs: Vec<ControlPointPair>,
    /// Candidate indices rejected by the stddev gate.
    pub skipped: Vec<usize>,
}

/// Evenly spaced candidate indices `round(k (n - 1) / (n_cp - 1))`,
/// deduplicated.
pub fn candidate_indices(n: usize, n_cp: usize) -> Vec<usize> {
    if n == 0 || n_cp == 0 {
        return Vec::new();
    }
    if n_cp == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..n_cp)
        .map(|k| (k as f64 * (n - 1) as f64 / (n_cp - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Picks `n_cp` evenly spaced matched pairs as control points. The source of
/// each pair is `m.odometry`, which should already be rigidly aligned.
/// Candidates with any GNSS stddev component above `sigma_max` are skipped,
/// not replaced.
pub fn select_control_points(
    m: &MatchedTrajectories,
    n_cp: usize,
    sigma_max: f64,
) -> Result<ControlPointSelection, RubberSheetError> {
    if n_cp == 0 {
        return Err(RubberSheetError::InvalidParameter("n_cp must be at least 1".into()));
    }
    if !(sigma_max >= 0.0) {
        return Err(RubberSheetError::InvalidParameter(format!("stddev threshold {sigma_max}")));
    }
    let src = m.odometry.points();
    let dst = m.target.points();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for i in candidate_indices(m.len(), n_cp) {
        if m.stddev(i).iter().any(|&s| s > sigma_max) {
            skipped.push(i);
            continue;
        }
        pairs.push(ControlPointPair {
            source: src[i].position,
            target: dst[i].position,
            kind: ControlPointKind::Trajectory,
            source_index: Some(i),
        });
    }
    if !skipped.is_empty() {
        log::info!("skipped {} control point candidates above {sigma_max} m stddev", skipped.len());
    }
    if pairs.is_empty() {
        return Err(RubberSheetError::NoControlPoints);
    }
    Ok(ControlPointSelection { pairs, skipped })
}

/// Eight fixed corners of the bounding box of `source` and `target`,
/// expanded on each side by `factor_xy` times the x and y extents and
/// `factor_z` times the z extent.
pub fn enclosing_cuboid(
    source: &[Point3],
    target: &[Point3],
    factor_xy: f64,
    factor_z: f64,
) -> Result<[ControlPointPair; 8], RubberSheetError> {
    if !(factor_xy > 0.0 && factor_z > 0.0) {
        return Err(RubberSheetError::InvalidParameter(format!(
            "cuboid factors must be positive, got {factor_xy} and {factor_z}"
        )));
    }
    let mut all = source.iter().chain(target);
    let first = *all.next().ok_or(RubberSheetError::NoControlPoints)?;
    let (mut lo, mut hi) = (first, first);
    for p in all {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    let factors = [factor_xy, factor_xy, factor_z];
    for (axis, name) in ['x', 'y', 'z'].into_iter().enumerate() {
        let pad = factors[axis] * extent[axis];
        lo[axis] -= pad;
        hi[axis] += pad;
        if !(hi[axis] > lo[axis]) {
            return Err(RubberSheetError::DegenerateExtent { axis: name });
        }
    }
    Ok(std::array::from_fn(|i| {
        let pick = |axis: usize| if i >> axis & 1 == 0 { lo[axis] } else { hi[axis] };
        ControlPointPair::fixed(Point3::new(pick(0), pick(1), pick(2)))
    }))
}

fn homog(p: &Point3) -> Vector4<f64> {
    Vector4::new(p.x, p.y, p.z, 1.0)
}

/// Solves `homog(target_i) = T homog(source_i)` for the 16 entries of `T`
/// (row-major unknowns).
fn solve_tetrahedron(src: &[Point3; 4], dst: &[Point3; 4]) -> Option<Matrix4<f64>> {
    let mut a = DMatrix::zeros(16, 16);
    let mut b = DVector::zeros(16);
    for i in 0..4 {
        let s = homog(&src[i]);
        let g = homog(&dst[i]);
        for r in 0..4 {
            let row = 4 * i + r;
            for c in 0..4 {
                a[(row, 4 * r + c)] = s[c];
            }
            b[row] = g[r];
        }
    }
    let qr = FullPivQr::new(&a);
    if qr.rank() < 16 {
        log::debug!("tetrahedron system has rank {}", qr.rank());
        return None;
    }
    let t = qr.solve(&b)?;
    Some(Matrix4::from_row_slice(t.as_slice()))
}

fn condition_number(src: &[Point3; 4]) -> f64 {
    let m = Matrix4::from_columns(&src.map(|p| homog(&p)));
    let sv = m.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

#[derive(Debug, Clone)]
pub struct RubberSheet {
    pairs: Vec<ControlPointPair>,
    triangulation: Tetrahedralization,
    transforms: Vec<Matrix4<f64>>,
    conditions: Vec<f64>,
}

impl RubberSheet {
    /// Triangulates the source points of `pairs` and solves one transform
    /// per tetrahedron.
    pub fn solve(pairs: Vec<ControlPointPair>) -> Result<Self, RubberSheetError> {
        let sources: Vec<Point3> = pairs.iter().map(|p| p.source).collect();
        let triangulation = tetrahedralize_with(&sources, 0.0)?;
        let mut transforms = Vec::with_capacity(triangulation.len());
        let mut conditions = Vec::with_capacity(triangulation.len());
        for (j, t) in triangulation.tetrahedra().iter().enumerate() {
            let src = t.map(|v| pairs[v].source);
            let dst = t.map(|v| pairs[v].target);
            let condition = condition_number(&src);
            log::trace!("tetrahedron {j}: condition {condition:e}");
            let singular = || RubberSheetError::Singular {
                tetrahedron: j,
                vertices: *t,
                condition,
            };
            if !(condition <= MAX_CONDITION) {
                return Err(singular());
            }
            let m = solve_tetrahedron(&src, &dst).ok_or_else(singular)?;
            let deviation = (m.row(3) - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).abs().max();
            if !(deviation <= AFFINE_TOLERANCE) {
                return Err(RubberSheetError::NotAffine { tetrahedron: j, deviation });
            }
            transforms.push(m);
            conditions.push(condition);
        }
        let worst = conditions.iter().cloned().fold(0.0, f64::max);
        log::debug!("solved {} tetrahedra, worst condition {worst:e}", transforms.len());
        Ok(Self {
            pairs,
            triangulation,
            transforms,
            conditions,
        })
    }

    pub fn pairs(&self) -> &[ControlPointPair] {
        &self.pairs
    }

    pub fn triangulation(&self) -> &Tetrahedralization {
        &self.triangulation
    }

    pub fn transforms(&self) -> &[Matrix4<f64>] {
        &self.transforms
    }

    /// Condition number of each tetrahedron's vertex matrix.
    pub fn conditions(&self) -> &[f64] {
        &self.conditions
    }

    /// `T_j x`, dehomogenized.
    pub fn apply(&self, j: usize, x: &Point3) -> Point3 {
        let h = self.transforms[j] * homog(x);
        Point3::new(h.x / h.w, h.y / h.w, h.z / h.w)
    }

    pub fn warper(&self) -> Warper<'_> {
        Warper {
            sheet: self,
            locator: self.triangulation.locator(),
            outside: 0,
        }
    }

    /// Warps a single point; points outside the triangulation are returned
    /// unchanged.
    pub fn transform_point(&self, x: &Point3) -> Point3 {
        self.warper().transform_point(x)
    }

    /// Warps every point, in parallel when the `parallel` feature is on.
    /// Output order matches input order.
    pub fn transform_points(&self, points: &[Point3]) -> (Vec<Point3>, WarpStats) {
        const CHUNK: usize = 4096;
        let run = |chunk: &[Point3]| {
            let mut w = self.warper();
            let out: Vec<Point3> = chunk.iter().map(|p| w.transform_point(p)).collect();
            (out, w.outside())
        };
        #[cfg(feature = "parallel")]
        let parts: Vec<(Vec<Point3>, usize)> = {
            use rayon::prelude::*;
            points.par_chunks(CHUNK).map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<(Vec<Point3>, usize)> = points.chunks(CHUNK).map(run).collect();
        let mut out = Vec::with_capacity(points.len());
        let mut outside = 0;
        for (part, n) in parts {
            out.extend(part);
            outside += n;
        }
        let stats = WarpStats::new(points, &out, outside);
        if outside > 0 {
            log::warn!("{outside} points lie outside the triangulation and were left unchanged");
        }
        (out, stats)
    }

    pub fn transform_cloud(&self, cloud: &PointCloud) -> (PointCloud, WarpStats) {
        let (points, stats) = self.transform_points(&cloud.points);
        (cloud.with_points(points), stats)
    }

    pub fn transform_trajectory(&self, traj: &Trajectory) -> (Trajectory, WarpStats) {
        let (points, stats) = self.transform_points(&traj.positions());
        (traj.with_positions(&points), stats)
    }
}

/// Sequential point warper with a remembering walk and an outside counter.
#[derive(Debug, Clone)]
pub struct Warper<'a> {
    sheet: &'a RubberSheet,
    locator: Locator<'a>,
    outside: usize,
}

impl Warper<'_> {
    pub fn transform_point(&mut self, x: &Point3) -> Point3 {
        match self.locator.locate(x) {
            Some(j) => self.sheet.apply(j, x),
            None => {
                self.outside += 1;
                *x
            }
        }
    }

    pub fn outside(&self) -> usize {
        self.outside
    }
}

/// Per-point displacement magnitudes of a warp.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpStats {
    pub displacement: Vec<f64>,
    pub outside: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl WarpStats {
    fn new(before: &[Point3], after: &[Point3], outside: usize) -> Self {
        let displacement: Vec<f64> = before.iter().zip(after).map(|(a, b)| (b - a).norm()).collect();
        let (min, max, sum) = displacement
            .iter()
            .fold((f64::INFINITY, 0.0f64, 0.0), |(lo, hi, s), &d| (lo.min(d), hi.max(d), s + d));
        let n = displacement.len();
        Self {
            displacement,
            outside,
            min: if n == 0 { 0.0 } else { min },
            max,
            mean: if n == 0 { 0.0 } else { sum / n as f64 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryPoint;
    use crate::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matched(n: usize, stddev: impl Fn(usize) -> Vector3) -> MatchedTrajectories {
        let odo: Vec<TrajectoryPoint> = (0..n)
            .map(|i| TrajectoryPoint::new(i as f64, Point3::new(i as f64, (i * i) as f64 * 0.1, 0.0)))
            .collect();
        let tgt: Vec<TrajectoryPoint> = odo
            .iter()
            .enumerate()
            .map(|(i, p)| TrajectoryPoint::new(p.timestamp, p.position + Vector3::new(0.0, 0.0, 1.0)).with_stddev(stddev(i)))
            .collect();
        MatchedTrajectories {
            odometry: Trajectory::new(odo).unwrap(),
            target: Trajectory::new(tgt).unwrap(),
            matched: (0..n).collect(),
            dropped: vec![],
        }
    }

    fn indices(sel: &ControlPointSelection) -> Vec<usize> {
        sel.pairs.iter().map(|p| p.source_index.unwrap()).collect()
    }

    /// Random pairs inside a box, plus the fixed cuboid.
    fn random_sheet(seed: u64, n: usize, warp: f64) -> RubberSheet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<ControlPointPair> = (0..n)
            .map(|i| {
                let s = Point3::new(rng.random_range(0.0..100.0), rng.random_range(0.0..80.0), rng.random_range(0.0..5.0));
                let mut d = Vector3::zeros();
                if warp > 0.0 {
                    d = Vector3::new(rng.random_range(-warp..warp), rng.random_range(-warp..warp), rng.random_range(-warp..warp));
                }
                ControlPointPair {
                    source: s,
                    target: s + d,
                    kind: ControlPointKind::Trajectory,
                    source_index: Some(i),
                }
            })
            .collect();
        let src: Vec<Point3> = pairs.iter().map(|p| p.source).collect();
        let dst: Vec<Point3> = pairs.iter().map(|p| p.target).collect();
        pairs.extend(enclosing_cuboid(&src, &dst, DEFAULT_FACTOR_XY, DEFAULT_FACTOR_Z).unwrap());
        RubberSheet::solve(pairs).unwrap()
    }

    /// Independent oracle: barycentric weights from a 3x3 solve, applied to
    /// the vertex targets.
    fn barycentric_map(sheet: &RubberSheet, j: usize, x: &Point3) -> Point3 {
        let t = sheet.triangulation().tetrahedra()[j];
        let s = t.map(|v| sheet.pairs()[v].source);
        let g = t.map(|v| sheet.pairs()[v].target);
        let m = nalgebra::Matrix3::from_columns(&[s[1] - s[0], s[2] - s[0], s[3] - s[0]]);
        let w = m.lu().solve(&(x - s[0])).unwrap();
        let b = [1.0 - w.sum(), w[0], w[1], w[2]];
        Point3::from((0..4).map(|i| g[i].coords * b[i]).sum::<Vector3>())
    }

    #[test]
    fn even_spacing() {
        let m = matched(5, |_| Vector3::repeat(0.01));
        assert_eq!(indices(&select_control_points(&m, 3, 0.25).unwrap()), vec![0, 2, 4]);
        assert_eq!(indices(&select_control_points(&m, 1, 0.25).unwrap()), vec![0]);
        assert_eq!(indices(&select_control_points(&m, 5, 0.25).unwrap()), vec![0, 1, 2, 3, 4]);
        assert_eq!(indices(&select_control_points(&m, 9, 0.25).unwrap()), vec![0, 1, 2, 3, 4]);
        assert!(select_control_points(&m, 0, 0.25).is_err());
    }

    #[test]
    fn stddev_gate_skips_without_replacement() {
        let m = matched(5, |i| if i == 2 { Vector3::new(0.01, 0.01, 0.60) } else { Vector3::repeat(0.01) });
        let sel = select_control_points(&m, 3, 0.25).unwrap();
        assert_eq!(indices(&sel), vec![0, 4]);
        assert_eq!(sel.skipped, vec![2]);
        let all_bad = matched(5, |_| Vector3::repeat(1.0));
        assert_eq!(select_control_points(&all_bad, 3, 0.25), Err(RubberSheetError::NoControlPoints));
    }

    #[test]
    fn cuboid_expansion() {
        let a = [Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 5.0, 1.0)];
        let b = [Point3::new(3.0, 20.0, 0.5)];
        let c = enclosing_cuboid(&a, &b, 0.1, 10.0).unwrap();
        let lo = c.iter().fold(c[0].source, |l, p| l.inf(&p.source));
        let hi = c.iter().fold(c[0].source, |h, p| h.sup(&p.source));
        assert_eq!(lo, Point3::new(-1.0, -2.0, -10.0));
        assert_eq!(hi, Point3::new(11.0, 22.0, 11.0));
        assert!(c.iter().all(|p| p.source == p.target && p.kind == ControlPointKind::CuboidCorner));
        let flat = [Point3::new(0.0, 0.0, 2.0), Point3::new(1.0, 1.0, 2.0)];
        assert_eq!(enclosing_cuboid(&flat, &flat, 0.1, 10.0), Err(RubberSheetError::DegenerateExtent { axis: 'z' }));
        assert!(enclosing_cuboid(&a, &b, 0.0, 10.0).is_err());
    }

    #[test]
    fn identity_and_translation_sheets() {
        let sheet = random_sheet(1, 30, 0.0);
        for m in sheet.transforms() {
            assert!((m - Matrix4::identity()).abs().max() < 1e-12);
        }
        let x = Point3::new(12.0, 34.0, 2.0);
        assert!((sheet.transform_point(&x) - x).norm() < 1e-12 * x.coords.norm());

        let shift = Vector3::new(1.0, 2.0, 3.0);
        let pairs: Vec<ControlPointPair> = sheet
            .pairs()
            .iter()
            .map(|p| ControlPointPair { target: p.source + shift, ..*p })
            .collect();
        let moved = RubberSheet::solve(pairs).unwrap();
        let expected = Matrix4::new_translation(&shift);
        for m in moved.transforms() {
            assert!((m - expected).abs().max() < 1e-9);
        }
    }

    #[test]
    fn control_points_are_exact() {
        let sheet = random_sheet(2, 60, 3.0);
        for p in sheet.pairs() {
            assert!((sheet.transform_point(&p.source) - p.target).norm() < 1e-6);
        }
        for (j, t) in sheet.triangulation().tetrahedra().iter().enumerate() {
            for &v in t {
                let p = sheet.pairs()[v];
                assert!((sheet.apply(j, &p.source) - p.target).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_barycentric_oracle() {
        let sheet = random_sheet(3, 60, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for j in 0..sheet.triangulation().len() {
            let corners = sheet.triangulation().corners(j);
            for _ in 0..5 {
                let mut w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= total);
                let x = Point3::from((0..4).map(|i| corners[i].coords * w[i]).sum::<Vector3>());
                assert!((sheet.apply(j, &x) - barycentric_map(&sheet, j, &x)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn shared_faces_are_continuous() {
        let sheet = random_sheet(5, 40, 3.0);
        let tri = sheet.triangulation();
        let diag = tri.bbox_diagonal();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for j in 0..tri.len() {
            for i in 0..4 {
                let Some(k) = tri.neighbors()[j][i] else { continue };
                let face: Vec<Point3> = (0..4).filter(|&v| v != i).map(|v| tri.vertices()[tri.tetrahedra()[j][v]]).collect();
                for _ in 0..50 {
                    let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                    let (a, b): (f64, f64) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                    let x = face[0] + (face[1] - face[0]) * a + (face[2] - face[0]) * b;
                    assert!((sheet.apply(j, &x) - sheet.apply(k, &x)).norm() <= 1e-9 * diag);
                }
            }
        }
    }

    #[test]
    fn warp_stats_and_outside_points() {
        let sheet = random_sheet(7, 20, 2.0);
        let mut pts: Vec<Point3> = sheet.pairs().iter().map(|p| p.source).collect();
        pts.push(Point3::new(1e6, 0.0, 0.0));
        let (out, stats) = sheet.transform_points(&pts);
        assert_eq!(stats.outside, 1);
        assert_eq!(out.last(), pts.last());
        for (i, p) in sheet.pairs().iter().enumerate() {
            assert!((stats.displacement[i] - (p.target - p.source).norm()).abs() < 1e-6);
            if p.kind == ControlPointKind::CuboidCorner {
                assert!(stats.displacement[i] < 1e-9);
            }
        }
        assert!(stats.min <= stats.mean && stats.mean <= stats.max);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn cloud_warp_matches_brute_force(seed in 0u64..1000) {
            let sheet = random_sheet(seed, 25, 2.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let pts: Vec<Point3> = (0..300)
                .map(|_| Point3::new(rng.random_range(0.0..100.0), rng.random_range(0.0..80.0), rng.random_range(0.0..5.0)))
                .collect();
            let (out, stats) = sheet.transform_points(&pts);
            let corners: Vec<Point3> = sheet.pairs().iter().filter(|p| p.kind == ControlPointKind::CuboidCorner).map(|p| p.source).collect();
            let lo = corners.iter().fold(corners[0], |l, p| l.inf(p));
            let hi = corners.iter().fold(corners[0], |h, p| h.sup(p));
            let inside = pts.iter().filter(|x| (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a])).count();
            prop_assert_eq!(stats.outside, pts.len() - inside);
            let tri = sheet.triangulation();
            let max_vertex_shift = sheet.pairs().iter().map(|p| (p.target - p.source).norm()).fold(0.0, f64::max);
            for (x, y) in pts.iter().zip(&out) {
                let Some(j) = (0..tri.len()).find(|&j| tri.barycentric(j, x).iter().all(|&b| b >= -1e-12)) else {
                    prop_assert_eq!(x, y);
                    continue;
                };
                prop_assert!((barycentric_map(&sheet, j, x) - y).norm() < 1e-9);
                prop_assert!((y - x).norm() <= max_vertex_shift + 1e-9);
            }
        }
    }
}
