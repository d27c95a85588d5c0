//! Georeferencing and drift correction for SLAM point cloud maps.
//!
//! The crate takes a local odometry trajectory (and the map built along it),
//! a GNSS trajectory recorded on the same vehicle, and produces a map in a
//! metric East-North-Up frame:
//!
//! 1. GNSS fixes are projected to ENU ([`geodesy`]).
//! 2. Every odometry keyframe gets a matched GNSS position by cubic spline
//!    interpolation over four reference fixes ([`interp`]).
//! 3. The odometry is rigidly aligned to the matched positions with the
//!    closed-form Umeyama solution ([`align`]).
//! 4. Remaining long-term drift is removed by a piecewise-linear 3D rubber
//!    sheet over a Delaunay tetrahedralization of control points
//!    ([`delaunay`], [`rubber_sheet`]).
//! 5. Deviation statistics are reported ([`metrics`]).
//!
//! [`pipeline`] strings the stages together and [`synth`] produces synthetic
//! scenarios with known ground truth.

pub mod align;
pub mod cloud;
pub mod delaunay;
pub mod geodesy;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod rubber_sheet;
pub mod synth;
pub mod trajectory;

mod qr;

pub use align::{apply_rigid, umeyama, RigidTransform, UmeyamaFit};
pub use cloud::{PointCloud, Precision};
pub use delaunay::{tetrahedralize, Locator, Tetrahedralization};
pub use geodesy::{EnuOrigin, GeodeticPosition};
pub use interp::{interpolate_trajectory, MatchedTrajectories, SplineSegment};
pub use metrics::{deviation_report, DeviationReport};
pub use rubber_sheet::{ControlPointKind, ControlPointPair, RubberSheet, WarpStats};
pub use trajectory::{Trajectory, TrajectoryPoint};

/// 3D point in meters.
pub type Point3 = nalgebra::Point3<f64>;
/// 3D vector in meters.
pub type Vector3 = nalgebra::Vector3<f64>;
