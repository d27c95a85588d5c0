//! WGS84 geodetic, ECEF and local East-North-Up conversions.
//!
//! Altitudes are ellipsoidal heights. No geoid model is applied.

use nalgebra::Matrix3;

use crate::trajectory::{Trajectory, TrajectoryError, TrajectoryPoint};
use crate::{Point3, Vector3};

/// WGS84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Semi-minor axis in meters.
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("non-finite geodetic input")]
    NonFinite,
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("negative standard deviation")]
    NegativeStddev,
    #[error("no GNSS fixes to project")]
    Empty,
    #[error("GNSS timestamps not strictly increasing at index {index}")]
    NonMonotonic { index: usize },
}

fn check_lat_lon(latitude: f64, longitude: f64, altitude: f64) -> Result<(), GeodesyError> {
    if !(latitude.is_finite() && longitude.is_finite() && altitude.is_finite()) {
        return Err(GeodesyError::NonFinite);
    }
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(GeodesyError::Latitude(latitude));
    }
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(GeodesyError::Longitude(longitude));
    }
    Ok(())
}

/// A raw GNSS fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticPosition {
    /// Degrees, WGS84.
    pub latitude: f64,
    /// Degrees, WGS84.
    pub longitude: f64,
    /// Ellipsoidal height in meters.
    pub altitude: f64,
    /// Seconds.
    pub timestamp: f64,
    /// Per-axis (east, north, up) 1-sigma in meters.
    pub stddev: Vector3,
}

impl GeodeticPosition {
    pub fn new(
        timestamp: f64,
        latitude: f64,
        longitude: f64,
        altitude: f64,
        stddev: Vector3,
    ) -> Result<Self, GeodesyError> {
        let p = Self {
            latitude,
            longitude,
            altitude,
            timestamp,
            stddev,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeodesyError> {
        check_lat_lon(self.latitude, self.longitude, self.altitude)?;
        if !self.timestamp.is_finite() || !self.stddev.iter().all(|s| s.is_finite()) {
            return Err(GeodesyError::NonFinite);
        }
        if self.stddev.iter().any(|&s| s < 0.0) {
            return Err(GeodesyError::NegativeStddev);
        }
        Ok(())
    }

    pub fn origin(&self) -> EnuOrigin {
        EnuOrigin {
            latitude: self.latitude,
            longitude: self.longitude,
            altitude: self.altitude,
        }
    }
}

/// Anchor of a local East-North-Up frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnuOrigin {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl EnuOrigin {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, GeodesyError> {
        check_lat_lon(latitude, longitude, altitude)?;
        Ok(Self {
            latitude,
            longitude,
            altitude,
        })
    }

    pub fn ecef(&self) -> Point3 {
        lla_to_ecef(self.latitude, self.longitude, self.altitude)
    }

    /// Rows are the east, north and up unit vectors expressed in ECEF.
    fn rotation(&self) -> Matrix3<f64> {
        let (sp, cp) = self.latitude.to_radians().sin_cos();
        let (sl, cl) = self.longitude.to_radians().sin_cos();
        Matrix3::new(
            -sl, cl, 0.0, //
            -sp * cl, -sp * sl, cp, //
            cp * cl, cp * sl, sp,
        )
    }
}

fn lla_to_ecef(latitude: f64, longitude: f64, altitude: f64) -> Point3 {
    let (sp, cp) = latitude.to_radians().sin_cos();
    let (sl, cl) = longitude.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sp * sp).sqrt();
    Point3::new(
        (n + altitude) * cp * cl,
        (n + altitude) * cp * sl,
        (n * (1.0 - WGS84_E2) + altitude) * sp,
    )
}

pub fn geodetic_to_ecef(p: &GeodeticPosition) -> Result<Point3, GeodesyError> {
    check_lat_lon(p.latitude, p.longitude, p.altitude)?;
    Ok(lla_to_ecef(p.latitude, p.longitude, p.altitude))
}

pub fn ecef_to_enu(p: &Point3, origin: &EnuOrigin) -> Point3 {
    Point3::from(origin.rotation() * (p - origin.ecef()))
}

pub fn enu_to_ecef(p: &Point3, origin: &EnuOrigin) -> Point3 {
    origin.ecef() + origin.rotation().transpose() * p.coords
}

/// Inverse of [`geodetic_to_ecef`], returned as (latitude, longitude,
/// altitude). Iterates on the latitude until it stops changing.
pub fn ecef_to_geodetic(p: &Point3) -> (f64, f64, f64) {
    let lon = p.y.atan2(p.x);
    let rho = p.x.hypot(p.y);
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    let mut alt = 0.0;
    for _ in 0..16 {
        let sp = lat.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * sp * sp).sqrt();
        alt = if lat.cos().abs() > 1e-10 {
            rho / lat.cos() - n
        } else {
            p.z.abs() - n * (1.0 - WGS84_E2)
        };
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + alt)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    (lat.to_degrees(), lon.to_degrees(), alt)
}

pub fn enu_to_geodetic(p: &Point3, origin: &EnuOrigin) -> (f64, f64, f64) {
    ecef_to_geodetic(&enu_to_ecef(p, origin))
}

/// Projects GNSS fixes into an ENU trajectory.
///
/// Without an explicit origin the first fix anchors the frame. The origin
/// actually used is returned so results can be mapped back to geodetic
/// coordinates.
pub fn project_trajectory(
    fixes: &[GeodeticPosition],
    origin: Option<EnuOrigin>,
) -> Result<(Trajectory, EnuOrigin), GeodesyError> {
    let first = fixes.first().ok_or(GeodesyError::Empty)?;
    let origin = origin.unwrap_or_else(|| first.origin());
    let mut points = Vec::with_capacity(fixes.len());
    for (index, fix) in fixes.iter().enumerate() {
        fix.validate()?;
        if index > 0 && fix.timestamp <= fixes[index - 1].timestamp {
            return Err(GeodesyError::NonMonotonic { index });
        }
        let enu = ecef_to_enu(&geodetic_to_ecef(fix)?, &origin);
        points.push(TrajectoryPoint::new(fix.timestamp, enu).with_stddev(fix.stddev));
    }
    let traj = Trajectory::new(points).map_err(|e| match e {
        TrajectoryError::NonMonotonic { index } => GeodesyError::NonMonotonic { index },
        _ => GeodesyError::NonFinite,
    })?;
    Ok((traj, origin))
}
