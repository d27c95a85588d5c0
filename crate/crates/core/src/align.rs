//! Closed-form similarity alignment of point sets (Umeyama).

use nalgebra::{Matrix3, Matrix4};

use crate::cloud::PointCloud;
use crate::trajectory::Trajectory;
use crate::{Point3, Vector3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("point sets differ in length ({source_len} vs {target_len})")]
    LengthMismatch { source_len: usize, target_len: usize },
    #[error("at least 3 point pairs are required, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate geometry: cross-covariance has rank {rank}")]
    Degenerate { rank: usize },
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

/// `x -> s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3,
    pub scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3, scale: f64) -> Result<Self, AlignError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-9 && (rotation.determinant() - 1.0).abs() <= 1e-9) {
            return Err(AlignError::InvalidRotation);
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(AlignError::InvalidScale(scale));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros() && self.scale == 1.0
    }

    pub fn apply(&self, p: &Point3, with_scale: bool) -> Point3 {
        let s = if with_scale { self.scale } else { 1.0 };
        Point3::from(self.rotation * p.coords * s + self.translation)
    }

    /// Inverse of the full similarity (`x -> R^T (x - t) / s`).
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    /// 4x4 homogeneous matrix of the similarity (scale included).
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.rotation * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Result of [`umeyama`]: the transform and its mean squared residual
/// `e^2 = 1/n sum |y_i - (s R x_i + t)|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UmeyamaFit {
    pub transform: RigidTransform,
    pub mse: f64,
}

fn centroid(points: &[Point3]) -> Vector3 {
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64
}

/// Least-squares similarity mapping `source` onto `target`.
pub fn umeyama(source: &[Point3], target: &[Point3]) -> Result<UmeyamaFit, AlignError> {
    if source.len() != target.len() {
        return Err(AlignError::LengthMismatch {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(AlignError::TooFewPoints(n));
    }
    let mx = centroid(source);
    let my = centroid(target);
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x.coords - mx;
        let dy = y.coords - my;
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n as f64;
    var_x /= n as f64;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = svd.singular_values;
    let smax = d.max();
    let tol = smax * 1e-12 * 3.0;
    let rank = d.iter().filter(|&&s| s > tol).count();
    if rank < 2 || var_x <= 0.0 {
        return Err(AlignError::Degenerate { rank });
    }
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let imin = d.imin();
        sign[imin] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = d.dot(&sign) / var_x;
    let translation = my - rotation * mx * scale;
    let transform = RigidTransform {
        rotation,
        translation,
        scale,
    };
    let mse = residual(&transform, source, target);
    Ok(UmeyamaFit { transform, mse })
}

/// Mean squared distance between `target` and the scaled transform of
/// `source`.
pub fn residual(tf: &RigidTransform, source: &[Point3], target: &[Point3]) -> f64 {
    source
        .iter()
        .zip(target)
        .map(|(x, y)| (y - tf.apply(x, true)).norm_squared())
        .sum::<f64>()
        / source.len() as f64
}

/// Anything whose points can be moved by a [`RigidTransform`].
pub trait Transformable: Sized + Clone {
    fn map_points(&self, f: impl Fn(&Point3) -> Point3 + Sync) -> Self;
}

impl Transformable for Trajectory {
    fn map_points(&self, f: impl Fn(&Point3) -> Point3 + Sync) -> Self {
        self.map_positions(f)
    }
}

impl Transformable for PointCloud {
    fn map_points(&self, f: impl Fn(&Point3) -> Point3 + Sync) -> Self {
        #[cfg(feature = "parallel")]
        let points = {
            use rayon::prelude::*;
            self.points.par_iter().map(&f).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let points = self.points.iter().map(&f).collect();
        self.with_points(points)
    }
}

impl Transformable for Vec<Point3> {
    fn map_points(&self, f: impl Fn(&Point3) -> Point3 + Sync) -> Self {
        self.iter().map(f).collect()
    }
}

/// Applies `R x + t` (or `s R x + t` when `with_scale`) to every point.
/// Timestamps, stddev and intensity are untouched.
pub fn apply_rigid<T: Transformable>(tf: &RigidTransform, items: &T, with_scale: bool) -> T {
    if tf.is_identity() {
        return items.clone();
    }
    items.map_points(|p| tf.apply(p, with_scale))
}
