//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pcm_georef::io::{parse_gnss_log, parse_odometry_poses, parse_plot_data, read_point_cloud, PoseFormat};
use pcm_georef::metrics::point_deviations;
use pcm_georef::pipeline::{run_pipeline, FailureKind, PipelineConfig};
use pcm_georef::synth::{generate_scenario, write_scenario, LoopShape, OutageWindow, ScenarioConfig};
use pcm_georef::Point3;

#[derive(Parser)]
#[command(name = "pcm-georef", version, about = "Georeference SLAM point cloud maps with GNSS")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full georeferencing pipeline.
    Georef(GeorefArgs),
    /// Deviation statistics between two index-aligned trajectory files.
    Eval {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = TrajFormat::Auto)]
        format: TrajFormat,
    },
    /// Write a synthetic scenario (inputs, ground truth and config).
    Synth(SynthArgs),
    /// Print a summary of input files.
    Inspect {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct GeorefArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gnss: Option<String>,
    #[arg(long)]
    odometry: Option<String>,
    /// `tum` or `kitti`.
    #[arg(long)]
    odometry_format: Option<String>,
    #[arg(long)]
    odometry_timestamps: Option<String>,
    #[arg(long)]
    cloud: Option<String>,
    /// `latitude longitude altitude`.
    #[arg(long)]
    origin: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    n_cp: Option<String>,
    #[arg(long)]
    stddev_threshold_m: Option<String>,
    #[arg(long)]
    spline_min_distance_m: Option<String>,
    #[arg(long)]
    cuboid_factor_xy: Option<String>,
    #[arg(long)]
    cuboid_factor_z: Option<String>,
    /// `ascii` or `binary`.
    #[arg(long)]
    cloud_encoding: Option<String>,
}

impl GeorefArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 13] {
        [
            ("gnss", &self.gnss),
            ("odometry", &self.odometry),
            ("odometry_format", &self.odometry_format),
            ("odometry_timestamps", &self.odometry_timestamps),
            ("cloud", &self.cloud),
            ("origin", &self.origin),
            ("output", &self.output),
            ("n_cp", &self.n_cp),
            ("stddev_threshold_m", &self.stddev_threshold_m),
            ("spline_min_distance_m", &self.spline_min_distance_m),
            ("cuboid_factor_xy", &self.cuboid_factor_xy),
            ("cuboid_factor_z", &self.cuboid_factor_z),
            ("cloud_encoding", &self.cloud_encoding),
        ]
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    output: PathBuf,
    #[arg(long, default_value_t = 5000.0)]
    length_m: f64,
    /// RMS drift left after rigid alignment.
    #[arg(long, default_value_t = 15.0)]
    drift_m: f64,
    #[arg(long, default_value_t = 0.02)]
    noise_m: f64,
    /// Along-track outage `start:end` in meters (repeatable).
    #[arg(long, value_parser = parse_outage)]
    outage: Vec<OutageWindow>,
    #[arg(long, value_enum, default_value_t = Shape::Oval)]
    shape: Shape,
    #[arg(long, default_value_t = 10)]
    points_per_pose: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Oval,
    FigureEight,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TrajFormat {
    Auto,
    Tum,
    Plot,
}

fn parse_outage(s: &str) -> Result<OutageWindow, String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    let start_m = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let end_m = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(OutageWindow { start_m, end_m })
}

/// Failure carrying its exit code.
struct Failure(u8, String);

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Failure(1, message.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn first_row_width(bytes: &[u8]) -> usize {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .map_or(0, |l| l.split_whitespace().count())
}

fn load_positions(path: &Path, format: TrajFormat) -> Result<Vec<Point3>, Failure> {
    let bytes = read(path)?;
    let format = match format {
        TrajFormat::Auto if first_row_width(&bytes) == 8 => TrajFormat::Tum,
        TrajFormat::Auto => TrajFormat::Plot,
        f => f,
    };
    let named = |e: &dyn std::fmt::Display| Failure::input(format!("{}: {e}", path.display()));
    match format {
        TrajFormat::Tum => parse_odometry_poses(&bytes, PoseFormat::Tum)
            .map(|t| t.positions())
            .map_err(|e| named(&e)),
        _ => parse_plot_data(&bytes).map(|(p, _)| p).map_err(|e| named(&e)),
    }
}

fn georef(args: &GeorefArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path).map_err(Failure::input)?,
        None => PipelineConfig::default(),
    };
    let cwd = Path::new(".");
    for (key, value) in args.overrides() {
        if let Some(v) = value {
            cfg.set(key, v, cwd).map_err(Failure::input)?;
        }
    }
    let report = run_pipeline(&cfg).map_err(|e| {
        let code = match e.kind {
            FailureKind::Input => 1,
            FailureKind::Numerical => 2,
        };
        Failure(code, e.to_string())
    })?;
    for (stage, t) in &report.timings {
        log::info!("timing {stage}: {:.3} s", t.as_secs_f64());
    }
    println!("outputs written to {}", cfg.output.display());
    println!("after alignment: mae {:.6} m, max {:.6} m", report.after_alignment.mae, report.after_alignment.max);
    println!("after rubber sheet: mae {:.6} m, max {:.6} m", report.after_sheet.mae, report.after_sheet.max);
    Ok(())
}

fn eval(a: &Path, b: &Path, format: TrajFormat) -> Result<(), Failure> {
    let pa = load_positions(a, format)?;
    let pb = load_positions(b, format)?;
    let report = point_deviations(&pa, &pb).map_err(Failure::input)?;
    println!("{report}");
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let cfg = ScenarioConfig {
        seed: args.seed,
        length_m: args.length_m,
        drift_amplitude_m: args.drift_m,
        gnss_noise_m: args.noise_m,
        outages: args.outage.clone(),
        shape: match args.shape {
            Shape::Oval => LoopShape::Oval,
            Shape::FigureEight => LoopShape::FigureEight,
        },
        points_per_pose: args.points_per_pose,
        ..Default::default()
    };
    let scenario = generate_scenario(&cfg).map_err(Failure::input)?;
    let files = write_scenario(&args.output, &scenario).map_err(|e| Failure::input(format!("{}: {e}", args.output.display())))?;
    println!("scenario written; run `pcm-georef georef --config {}`", files.config.display());
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let bytes = read(path)?;
    let named = |e: &dyn std::fmt::Display| Failure::input(format!("{}: {e}", path.display()));
    println!("{}:", path.display());
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "pcd" || bytes.starts_with(b"# .PCD") || bytes.starts_with(b"VERSION") {
        let cloud = read_point_cloud(&bytes).map_err(|e| named(&e))?;
        println!("  point cloud, {} points, {:?} precision", cloud.len(), cloud.precision);
        if let Some(first) = cloud.points.first() {
            let (lo, hi) = cloud.points.iter().fold((*first, *first), |(l, h), p| (l.inf(p), h.sup(p)));
            println!("  bounds [{:.3} {:.3} {:.3}] .. [{:.3} {:.3} {:.3}]", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z);
        }
        return Ok(());
    }
    if ext == "cfg" {
        let cfg = PipelineConfig::parse(&String::from_utf8_lossy(&bytes), path.parent().unwrap_or(Path::new("."))).map_err(|e| named(&e))?;
        println!("  config: {cfg:#?}");
        return Ok(());
    }
    match first_row_width(&bytes) {
        7 => {
            let fixes = parse_gnss_log(&bytes).map_err(|e| named(&e))?;
            println!("  GNSS log, {} fixes", fixes.len());
            if let (Some(a), Some(b)) = (fixes.first(), fixes.last()) {
                println!("  time {} .. {} s", a.timestamp, b.timestamp);
                let worst = fixes.iter().map(|f| f.stddev.max()).fold(0.0, f64::max);
                println!("  largest stddev component {worst} m");
            }
        }
        8 => {
            let t = parse_odometry_poses(&bytes, PoseFormat::Tum).map_err(|e| named(&e))?;
            println!("  TUM trajectory, {} poses", t.len());
            if let (Some(a), Some(b)) = (t.points().first(), t.points().last()) {
                println!("  time {} .. {} s", a.timestamp, b.timestamp);
            }
        }
        12 => println!("  KITTI poses, {} rows (timestamps come from a sidecar file)", String::from_utf8_lossy(&bytes).lines().filter(|l| !l.trim().is_empty()).count()),
        3 | 4 => {
            let (p, meta) = parse_plot_data(&bytes).map_err(|e| named(&e))?;
            println!("  point list, {} rows", p.len());
            if !meta.is_empty() {
                let max = meta.iter().cloned().fold(f64::MIN, f64::max);
                let mean = meta.iter().sum::<f64>() / meta.len() as f64;
                println!("  meta column: mean {mean:.6}, max {max:.6}");
            }
        }
        0 => println!("  empty"),
        n => return Err(Failure::input(format!("{}: unrecognized layout with {n} columns", path.display()))),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Georef(args) => georef(args),
        Command::Eval { a, b, format } => eval(a, b, *format),
        Command::Synth(args) => synth(args),
        Command::Inspect { files } => files.iter().try_for_each(|f| inspect(f)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
