use crate::{Point3, Vector3};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("timestamp at index {index} is not strictly greater than its predecessor")]
    NonMonotonic { index: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("negative standard deviation at index {index}")]
    NegativeStddev { index: usize },
}

/// One sample of a trajectory: time, position and optional per-axis 1-sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub timestamp: f64,
    pub position: Point3,
    pub stddev: Option<Vector3>,
}

impl TrajectoryPoint {
    pub fn new(timestamp: f64, position: Point3) -> Self {
        Self {
            timestamp,
            position,
            stddev: None,
        }
    }

    pub fn with_stddev(mut self, stddev: Vector3) -> Self {
        self.stddev = Some(stddev);
        self
    }
}

/// Time-ordered sequence of 3D positions.
///
/// Timestamps are strictly increasing, positions are finite and any carried
/// standard deviation is non-negative. The only way to build one is through
/// [`Trajectory::new`], which checks all three.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self, TrajectoryError> {
        for (index, p) in points.iter().enumerate() {
            let finite = p.timestamp.is_finite()
                && p.position.iter().all(|c| c.is_finite())
                && p.stddev.is_none_or(|s| s.iter().all(|c| c.is_finite()));
            if !finite {
                return Err(TrajectoryError::NonFinite { index });
            }
            if p.stddev.is_some_and(|s| s.iter().any(|&c| c < 0.0)) {
                return Err(TrajectoryError::NegativeStddev { index });
            }
            if index > 0 && p.timestamp <= points[index - 1].timestamp {
                return Err(TrajectoryError::NonMonotonic { index });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.timestamp).collect()
    }

    /// Returns a copy with every position replaced by `f(position)`.
    /// Timestamps and stddev are kept, so the invariants still hold as long as
    /// `f` returns finite values.
    pub fn map_positions(&self, mut f: impl FnMut(&Point3) -> Point3) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| TrajectoryPoint {
                    position: f(&p.position),
                    ..*p
                })
                .collect(),
        }
    }

    /// Same as [`map_positions`](Self::map_positions) with the new positions
    /// supplied in order. Panics when the length differs.
    pub fn with_positions(&self, positions: &[Point3]) -> Self {
        assert_eq!(positions.len(), self.points.len());
        let mut it = positions.iter();
        self.map_positions(|_| *it.next().unwrap())
    }

    /// Sub-trajectory of the given indices, which must be increasing.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}
