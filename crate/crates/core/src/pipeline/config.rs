//! Flat `key = value` configuration.

use std::path::{Path, PathBuf};

use crate::geodesy::EnuOrigin;
use crate::interp::DEFAULT_MIN_DISTANCE;
use crate::io::PcdEncoding;
use crate::rubber_sheet::{DEFAULT_FACTOR_XY, DEFAULT_FACTOR_Z};

pub const DEFAULT_N_CP: usize = 100;
pub const DEFAULT_STDDEV_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OdometryFormat {
    #[default]
    Tum,
    Kitti,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub gnss: PathBuf,
    pub odometry: PathBuf,
    pub odometry_format: OdometryFormat,
    /// Sidecar timestamps, required for KITTI poses.
    pub odometry_timestamps: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    /// ENU anchor; the first GNSS fix when unset.
    pub origin: Option<EnuOrigin>,
    pub spline_min_distance_m: f64,
    pub n_cp: usize,
    pub stddev_threshold_m: f64,
    pub cuboid_factor_xy: f64,
    pub cuboid_factor_z: f64,
    pub output: PathBuf,
    pub cloud_encoding: PcdEncoding,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gnss: PathBuf::new(),
            odometry: PathBuf::new(),
            odometry_format: OdometryFormat::Tum,
            odometry_timestamps: None,
            cloud: None,
            origin: None,
            spline_min_distance_m: DEFAULT_MIN_DISTANCE,
            n_cp: DEFAULT_N_CP,
            stddev_threshold_m: DEFAULT_STDDEV_THRESHOLD,
            cuboid_factor_xy: DEFAULT_FACTOR_XY,
            cuboid_factor_z: DEFAULT_FACTOR_Z,
            output: PathBuf::from("out"),
            cloud_encoding: PcdEncoding::Binary,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    match value.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err(invalid(key, value, "must be positive")),
        Err(e) => Err(invalid(key, value, e.to_string())),
    }
}

impl PipelineConfig {
    /// Parses a config file. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(key.trim(), value.trim(), base)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Sets one key. Used for config lines and command-line overrides alike.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let path = || -> Result<PathBuf, ConfigError> {
            if value.is_empty() {
                return Err(invalid(key, value, "path is empty"));
            }
            Ok(base.join(value))
        };
        match key {
            "gnss" => self.gnss = path()?,
            "odometry" => self.odometry = path()?,
            "odometry_timestamps" => self.odometry_timestamps = Some(path()?),
            "cloud" => self.cloud = Some(path()?),
            "output" => self.output = path()?,
            "odometry_format" => {
                self.odometry_format = match value {
                    "tum" => OdometryFormat::Tum,
                    "kitti" => OdometryFormat::Kitti,
                    _ => return Err(invalid(key, value, "expected `tum` or `kitti`")),
                }
            }
            "cloud_encoding" => {
                self.cloud_encoding = match value {
                    "ascii" => PcdEncoding::Ascii,
                    "binary" => PcdEncoding::Binary,
                    _ => return Err(invalid(key, value, "expected `ascii` or `binary`")),
                }
            }
            "origin" => {
                let v: Vec<f64> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e: std::num::ParseFloatError| invalid(key, value, e.to_string()))?;
                let [lat, lon, alt] = v[..] else {
                    return Err(invalid(key, value, "expected `latitude longitude altitude`"));
                };
                self.origin = Some(EnuOrigin::new(lat, lon, alt).map_err(|e| invalid(key, value, e.to_string()))?);
            }
            "spline_min_distance_m" => self.spline_min_distance_m = positive(key, value)?,
            "stddev_threshold_m" => self.stddev_threshold_m = positive(key, value)?,
            "cuboid_factor_xy" => self.cuboid_factor_xy = positive(key, value)?,
            "cuboid_factor_z" => self.cuboid_factor_z = positive(key, value)?,
            "n_cp" => {
                self.n_cp = match value.parse::<usize>() {
                    Ok(0) => return Err(invalid(key, value, "must be at least 1")),
                    Ok(n) => n,
                    Err(e) => return Err(invalid(key, value, e.to_string())),
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.gnss.as_os_str().is_empty() {
            return Err(ConfigError::Missing("gnss"));
        }
        if self.odometry.as_os_str().is_empty() {
            return Err(ConfigError::Missing("odometry"));
        }
        if self.odometry_format == OdometryFormat::Kitti && self.odometry_timestamps.is_none() {
            return Err(ConfigError::Missing("odometry_timestamps"));
        }
        Ok(())
    }
}
