//! Synthetic scenarios with known ground truth.
//!
//! A closed loop is driven at constant angular rate. The odometry is the
//! ground truth bent by a smooth drift field (a function of along-track
//! distance) and then moved by a random rigid transform. GNSS fixes are the
//! ground truth plus Gaussian noise, with inflated stddev inside outage
//! windows. The point cloud is scattered around the path and bent by the
//! same drift as the pose it was recorded from.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3 as V3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::align::{umeyama, RigidTransform};
use crate::cloud::PointCloud;
use crate::geodesy::{enu_to_geodetic, EnuOrigin, GeodeticPosition};
use crate::io::{write_gnss_log, write_point_cloud, write_tum, PcdEncoding};
use crate::trajectory::{Trajectory, TrajectoryPoint};
use crate::{Point3, Vector3};

/// Stddev multiplier inside outage windows.
pub const OUTAGE_INFLATION: f64 = 20.0;
/// Number of sinusoids per drift axis.
const DRIFT_TERMS: usize = 3;
/// Resolution of the arc-length table.
const ARC_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid scenario parameter: {0}")]
pub struct SynthError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopShape {
    #[default]
    Oval,
    FigureEight,
}

/// Along-track interval `[start_m, end_m]` with degraded GNSS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageWindow {
    pub start_m: f64,
    pub end_m: f64,
}

impl OutageWindow {
    pub fn contains(&self, s: f64) -> bool {
        s >= self.start_m && s <= self.end_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub length_m: f64,
    /// RMS of the drift that a rigid alignment cannot remove.
    pub drift_amplitude_m: f64,
    pub gnss_noise_m: f64,
    pub outages: Vec<OutageWindow>,
    pub shape: LoopShape,
    pub speed_mps: f64,
    pub odometry_rate_hz: f64,
    pub gnss_rate_hz: f64,
    pub hill_height_m: f64,
    pub points_per_pose: usize,
    pub corridor_radius_m: f64,
    pub origin: EnuOrigin,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            length_m: 5000.0,
            drift_amplitude_m: 15.0,
            gnss_noise_m: 0.02,
            outages: Vec::new(),
            shape: LoopShape::Oval,
            speed_mps: 10.0,
            odometry_rate_hz: 5.0,
            gnss_rate_hz: 10.0,
            hill_height_m: 4.0,
            points_per_pose: 10,
            corridor_radius_m: 15.0,
            origin: EnuOrigin {
                latitude: 48.0,
                longitude: 11.0,
                altitude: 500.0,
            },
        }
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("length_m", self.length_m),
            ("speed_mps", self.speed_mps),
            ("odometry_rate_hz", self.odometry_rate_hz),
            ("gnss_rate_hz", self.gnss_rate_hz),
            ("corridor_radius_m", self.corridor_radius_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SynthError(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("drift_amplitude_m", self.drift_amplitude_m),
            ("gnss_noise_m", self.gnss_noise_m),
            ("hill_height_m", self.hill_height_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(w) = self.outages.iter().find(|w| !(w.start_m <= w.end_m)) {
            return Err(SynthError(format!("outage window {}..{} is empty", w.start_m, w.end_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub config: ScenarioConfig,
    /// ENU positions at the odometry timestamps.
    pub ground_truth: Trajectory,
    pub gnss: Vec<GeodeticPosition>,
    /// Odometry in its own local frame.
    pub odometry: Trajectory,
    pub cloud: PointCloud,
    /// Undistorted ENU position of every cloud point.
    pub cloud_truth: Vec<Point3>,
    /// Along-track distance of every odometry pose.
    pub along_track: Vec<f64>,
    /// Drift vector (ENU) added at every odometry pose.
    pub drift: Vec<Vector3>,
    /// Maps drifted ENU positions into the odometry frame.
    pub de_reference: RigidTransform,
}

impl SyntheticScenario {
    pub fn in_outage(&self, pose: usize) -> bool {
        let s = self.along_track[pose];
        self.config.outages.iter().any(|w| w.contains(s))
    }
}

/// Unit-size loop and its arc-length table.
struct Curve {
    shape: LoopShape,
    scale: f64,
    hill: f64,
    /// Cumulative length at `theta = TAU * k / ARC_SAMPLES`.
    arc: Vec<f64>,
}

impl Curve {
    fn new(shape: LoopShape, length: f64, hill: f64) -> Self {
        let unit = |theta: f64| -> (f64, f64) {
            match shape {
                LoopShape::Oval => (theta.cos(), 0.5 * theta.sin()),
                LoopShape::FigureEight => (theta.sin(), theta.sin() * theta.cos()),
            }
        };
        let mut arc = Vec::with_capacity(ARC_SAMPLES + 1);
        arc.push(0.0);
        let mut prev = unit(0.0);
        for k in 1..=ARC_SAMPLES {
            let p = unit(TAU * k as f64 / ARC_SAMPLES as f64);
            let last = *arc.last().unwrap();
            arc.push(last + (p.0 - prev.0).hypot(p.1 - prev.1));
            prev = p;
        }
        let scale = length / arc[ARC_SAMPLES];
        arc.iter_mut().for_each(|a| *a *= scale);
        Self { shape, scale, hill, arc }
    }

    fn position(&self, theta: f64) -> Point3 {
        let (x, y, z) = match self.shape {
            LoopShape::Oval => (theta.cos(), 0.5 * theta.sin(), (3.0 * theta).sin()),
            LoopShape::FigureEight => (theta.sin(), theta.sin() * theta.cos(), theta.cos()),
        };
        Point3::new(self.scale * x, self.scale * y, self.hill * z)
    }

    /// Along-track distance of `theta`, wrapped into one lap.
    fn arc_length(&self, theta: f64) -> f64 {
        let f = theta.rem_euclid(TAU) / TAU * ARC_SAMPLES as f64;
        let k = (f.floor() as usize).min(ARC_SAMPLES - 1);
        let w = f - k as f64;
        self.arc[k] * (1.0 - w) + self.arc[k + 1] * w
    }
}

/// Sum of sinusoids per axis, zero at `s = 0`.
struct DriftField {
    terms: [[(f64, f64, f64); DRIFT_TERMS]; 3],
    gain: V3<f64>,
}

impl DriftField {
    fn random(rng: &mut ChaCha8Rng, length: f64) -> Self {
        let terms = std::array::from_fn(|_| {
            std::array::from_fn(|_| {
                let weight = rng.random_range(0.3..1.0);
                let wavelength = rng.random_range(2.0..3.0) * length;
                let phase = rng.random_range(0.0..TAU);
                (weight, wavelength, phase)
            })
        });
        Self {
            terms,
            gain: V3::repeat(1.0),
        }
    }

    fn raw(&self, s: f64) -> Vector3 {
        Vector3::from_fn(|axis, _| {
            self.terms[axis]
                .iter()
                .map(|&(w, l, ph)| w * ((TAU * s / l + ph).sin() - ph.sin()))
                .sum()
        })
    }

    fn at(&self, s: f64) -> Vector3 {
        self.raw(s).component_mul(&self.gain)
    }

    /// Scales the field so the peak horizontal norm over `samples` is one
    /// and the peak vertical magnitude is a fifth of it.
    fn normalize_peak(&mut self, samples: &[f64]) {
        let (mut h, mut v) = (0.0f64, 0.0f64);
        for &s in samples {
            let d = self.raw(s);
            h = h.max(d.xy().norm());
            v = v.max(d.z.abs());
        }
        let gh = if h > 0.0 { 1.0 / h } else { 0.0 };
        let gv = if v > 0.0 { 0.2 / v } else { 0.0 };
        self.gain = V3::new(gh, gh, gv);
    }

    /// Rescales the field until the RMS distance left after rigidly aligning
    /// the odometry (`frame` applied to `truth + drift`) back onto `truth`
    /// equals `amplitude`. The fitted scale is not applied, as in the
    /// pipeline.
    fn normalize_residual(&mut self, truth: &[Point3], samples: &[f64], frame: &RigidTransform, amplitude: f64) {
        self.normalize_peak(samples);
        if amplitude == 0.0 {
            self.gain = V3::zeros();
            return;
        }
        let rms = |k: f64| {
            let drifted: Vec<Point3> = truth.iter().zip(samples).map(|(p, &s)| frame.apply(&(p + self.at(s) * k), false)).collect();
            let Ok(fit) = umeyama(&drifted, truth) else { return 0.0 };
            let sq: f64 = drifted.iter().zip(truth).map(|(x, y)| (fit.transform.apply(x, false) - y).norm_squared()).sum();
            (sq / truth.len() as f64).sqrt()
        };
        let (mut lo, mut hi) = (0.0, amplitude);
        for _ in 0..64 {
            if rms(hi) >= amplitude {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if rms(mid) < amplitude {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = 0.5 * (lo + hi);
        self.gain *= k;
    }
}

pub fn generate_scenario(config: &ScenarioConfig) -> Result<SyntheticScenario, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let curve = Curve::new(config.shape, config.length_m, config.hill_height_m);
    let duration = config.length_m / config.speed_mps;
    let theta_at = |t: f64| TAU * t / duration;

    let n_poses = (duration * config.odometry_rate_hz).floor() as usize;
    let times: Vec<f64> = (0..n_poses).map(|i| i as f64 / config.odometry_rate_hz).collect();
    let truth: Vec<Point3> = times.iter().map(|&t| curve.position(theta_at(t))).collect();
    let along_track: Vec<f64> = times.iter().map(|&t| curve.arc_length(theta_at(t))).collect();

    let mut field = DriftField::random(&mut rng, config.length_m);
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let roll = rng.random_range(-0.02..0.02);
    let pitch = rng.random_range(-0.02..0.02);
    let translation = Vector3::new(
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
        rng.random_range(-20.0..20.0),
    );
    let rotation = Rotation3::from_euler_angles(roll, pitch, yaw).into_inner();
    let de_reference = RigidTransform::new(rotation, translation, 1.0).expect("rotation is orthonormal");

    field.normalize_residual(&truth, &along_track, &de_reference, config.drift_amplitude_m);
    let drift: Vec<Vector3> = along_track.iter().map(|&s| field.at(s)).collect();

    let ground_truth = Trajectory::new(
        times.iter().zip(&truth).map(|(&t, p)| TrajectoryPoint::new(t, *p)).collect(),
    )
    .expect("timestamps increase");
    let odometry = ground_truth.map_positions(|_| Point3::origin());
    let drifted: Vec<Point3> = truth
        .iter()
        .zip(&drift)
        .map(|(p, d)| de_reference.apply(&(p + d), false))
        .collect();
    let odometry = odometry.with_positions(&drifted);

    let noise = Normal::new(0.0, config.gnss_noise_m).expect("noise is finite and non-negative");
    // cover the odometry span with margin so every keyframe can be matched
    let margin = 2.0;
    let first = ((-margin) * config.gnss_rate_hz).floor() as i64;
    let last = ((duration + margin) * config.gnss_rate_hz).ceil() as i64;
    let mut gnss = Vec::with_capacity((last - first + 1) as usize);
    for k in first..=last {
        let t = (k as f64 + 0.5) / config.gnss_rate_hz;
        let theta = theta_at(t);
        let p = curve.position(theta);
        let noisy = Point3::new(
            p.x + noise.sample(&mut rng),
            p.y + noise.sample(&mut rng),
            p.z + noise.sample(&mut rng),
        );
        let s = curve.arc_length(theta);
        let sigma = if config.outages.iter().any(|w| w.contains(s)) {
            config.gnss_noise_m * OUTAGE_INFLATION
        } else {
            config.gnss_noise_m
        };
        let (latitude, longitude, altitude) = enu_to_geodetic(&noisy, &config.origin);
        gnss.push(GeodeticPosition {
            latitude,
            longitude,
            altitude,
            timestamp: t,
            stddev: Vector3::repeat(sigma),
        });
    }

    let r = config.corridor_radius_m;
    let mut cloud_truth = Vec::with_capacity(n_poses * config.points_per_pose);
    let mut cloud_points = Vec::with_capacity(n_poses * config.points_per_pose);
    let mut intensity = Vec::with_capacity(n_poses * config.points_per_pose);
    for (i, p) in truth.iter().enumerate() {
        for _ in 0..config.points_per_pose {
            let offset = loop {
                let o = Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-0.2 * r..0.6 * r));
                if o.norm() <= r {
                    break o;
                }
            };
            let q = p + offset;
            cloud_truth.push(q);
            cloud_points.push(de_reference.apply(&(q + drift[i]), false));
            intensity.push(rng.random_range(0.0f32..1.0));
        }
    }
    let mut cloud = PointCloud::new(cloud_points);
    cloud.intensity = Some(intensity);

    Ok(SyntheticScenario {
        config: config.clone(),
        ground_truth,
        gnss,
        odometry,
        cloud,
        cloud_truth,
        along_track,
        drift,
        de_reference,
    })
}

/// Paths written by [`write_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioFiles {
    pub gnss: PathBuf,
    pub odometry: PathBuf,
    pub cloud: PathBuf,
    pub ground_truth: PathBuf,
    pub config: PathBuf,
}

/// Writes the scenario as pipeline inputs: `gnss.txt`, `odometry.tum`,
/// `map.pcd`, `ground_truth.tum` and a `georef.cfg` that points at them
/// (relative paths) and pins the ENU origin.
pub fn write_scenario(dir: &Path, scenario: &SyntheticScenario) -> std::io::Result<ScenarioFiles> {
    std::fs::create_dir_all(dir)?;
    let files = ScenarioFiles {
        gnss: dir.join("gnss.txt"),
        odometry: dir.join("odometry.tum"),
        cloud: dir.join("map.pcd"),
        ground_truth: dir.join("ground_truth.tum"),
        config: dir.join("georef.cfg"),
    };
    std::fs::write(&files.gnss, write_gnss_log(&scenario.gnss))?;
    std::fs::write(&files.odometry, write_tum(&scenario.odometry))?;
    std::fs::write(&files.cloud, write_point_cloud(&scenario.cloud, PcdEncoding::Binary))?;
    std::fs::write(&files.ground_truth, write_tum(&scenario.ground_truth))?;
    let o = scenario.config.origin;
    let cfg = format!(
        "# synthetic scenario, seed {}\n\
         gnss = gnss.txt\n\
         odometry = odometry.tum\n\
         odometry_format = tum\n\
         cloud = map.pcd\n\
         origin = {} {} {}\n\
         output = out\n",
        scenario.config.seed, o.latitude, o.longitude, o.altitude
    );
    std::fs::write(&files.config, cfg)?;
    Ok(files)
}
