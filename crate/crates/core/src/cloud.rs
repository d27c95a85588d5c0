use crate::Point3;

/// Storage precision of the coordinate fields a cloud was read from.
///
/// Coordinates are always held as `f64` in memory. The precision decides how
/// a cloud is encoded when written back out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// A point cloud map: positions plus an optional per-point intensity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub intensity: Option<Vec<f32>>,
    pub precision: Precision,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            intensity: None,
            precision: Precision::F32,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the first point with a non-finite coordinate.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
    }

    pub fn with_points(&self, points: Vec<Point3>) -> Self {
        assert_eq!(points.len(), self.points.len());
        Self {
            points,
            intensity: self.intensity.clone(),
            precision: self.precision,
        }
    }
}
