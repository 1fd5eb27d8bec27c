use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gokart::config::{ConfigError, Scenario};
use gokart::io::{self, IoError};
use gokart::localization::replay_log;
use gokart::perception::perceive;
use gokart::sim::{run_closed_loop, RunReport};
use gokart::track::{build_raceline, estimate_lap_time, normals, offset_points, optimize_min_curvature, sum_squared_curvature};
use gokart::Track;

#[derive(Parser, Debug)]
#[command(name = "gokart", version, about = "Autonomous go-kart toolchain")]
struct Cli {
    /// Scenario/parameter file (key = value lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the sensor noise seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Parameter override, e.g. --set ftg.epsilon=3.0 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a min-curvature raceline for a centerline CSV
    OptimizeRaceline { track: PathBuf },
    /// Replay a sensor log through the EKF
    Localize { replay: PathBuf },
    /// Turn a camera image into a depth scan
    Perceive {
        image: PathBuf,
        homography: PathBuf,
        /// Also write mask.pgm and bev.pgm
        #[arg(long)]
        debug: bool,
    },
    /// Run a closed-loop scenario
    Simulate { scenario: Option<PathBuf> },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Problems with input files are usage errors; everything else is runtime.
fn input(e: IoError) -> Failure {
    Failure::Usage(e.to_string())
}

fn output(e: IoError) -> Failure {
    Failure::Runtime(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file not found: {}", path.display())))
    }
}

fn load_scenario(cli: &Cli, extra: Option<&Path>) -> Result<Scenario, Failure> {
    let mut s = Scenario::default();
    for path in cli.config.iter().map(PathBuf::as_path).chain(extra) {
        require(path)?;
        let text = std::fs::read_to_string(path).map_err(runtime)?;
        s.merge(&text, path.parent())?;
    }
    s.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        s.sensors.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    std::fs::write(path, format!("{text}\n")).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(text)
}

fn load_track(path: &Path, s: &Scenario) -> Result<Track, Failure> {
    require(path)?;
    let points = io::read_track_csv(path).map_err(input)?;
    Track::new(points, s.closed, s.vehicle_half_width).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct OptimizeReport {
    centerline_sum_k2: f64,
    optimized_sum_k2: f64,
    est_lap_time_s: f64,
}

fn optimize(cli: &Cli, track_path: &Path) -> Result<(), Failure> {
    let s = load_scenario(cli, None)?;
    let track = load_track(track_path, &s)?;
    let alpha = optimize_min_curvature(&track, &s.optimizer).map_err(runtime)?;
    let n = normals(&track).map_err(runtime)?;
    let optimized = offset_points(&track, &n, &alpha.alpha);
    let sum_k2 = |pts: &[gokart::LocalPoint]| sum_squared_curvature(pts, track.is_closed()).ok_or_else(|| runtime("degenerate spline"));
    let centerline_sum_k2 = sum_k2(&track.centerline())?;
    let optimized_sum_k2 = sum_k2(&optimized)?;
    let raceline = build_raceline(&track, &alpha, s.raceline_spacing, &s.limits).map_err(runtime)?;
    let v: Vec<f64> = raceline.waypoints.iter().map(|w| w.v).collect();
    let est_lap_time_s = estimate_lap_time(&v, &raceline.segment_lengths(), raceline.closed);
    io::write_raceline_csv(&cli.out_dir.join("raceline.csv"), &raceline).map_err(output)?;
    let report = OptimizeReport { centerline_sum_k2, optimized_sum_k2, est_lap_time_s };
    println!("{}", write_json(&cli.out_dir.join("optimize_report.json"), &report)?);
    Ok(())
}

fn localize(cli: &Cli, replay: &Path) -> Result<(), Failure> {
    let s = load_scenario(cli, None)?;
    require(replay)?;
    let rows = io::read_csv(replay, io::REPLAY_COLUMNS).map_err(input)?;
    let poses = replay_log(&rows, &s.ekf).map_err(runtime)?;
    io::write_csv(&cli.out_dir.join("poses.csv"), &poses, io::POSE_COLUMNS).map_err(output)?;
    println!("{} poses", poses.len());
    Ok(())
}

fn perceive_cmd(cli: &Cli, image: &Path, homography: &Path, debug: bool) -> Result<(), Failure> {
    let s = load_scenario(cli, None)?;
    require(image)?;
    require(homography)?;
    let img = io::read_ppm(image).map_err(input)?;
    let h = io::read_homography(homography).map_err(input)?;
    let out = perceive(&img, &h, &s.perception, &s.bev).map_err(runtime)?;
    io::write_scan_csv(&cli.out_dir.join("scan.csv"), &out.scan).map_err(output)?;
    if debug {
        io::write_pgm(&cli.out_dir.join("mask.pgm"), &out.mask).map_err(output)?;
        io::write_pgm(&cli.out_dir.join("bev.pgm"), &out.bev).map_err(output)?;
    }
    println!("{} rays", out.scan.len());
    Ok(())
}

fn write_logs(dir: &Path, report: &RunReport) -> Result<(), Failure> {
    let logs = &report.logs;
    io::write_csv(&dir.join("trajectory.csv"), &logs.trajectory, io::TRAJECTORY_COLUMNS).map_err(output)?;
    io::write_csv(&dir.join("poses.csv"), &logs.poses, io::POSE_COLUMNS).map_err(output)?;
    io::write_csv(&dir.join("commands.csv"), &logs.commands, io::COMMAND_COLUMNS).map_err(output)?;
    if !logs.scans.is_empty() {
        io::write_csv(&dir.join("scans.csv"), &logs.scans, io::SCAN_LOG_COLUMNS).map_err(output)?;
    }
    io::write_frame_trace(&dir.join("frames.csv"), &logs.frames).map_err(output)
}

fn simulate(cli: &Cli, scenario: Option<&Path>) -> Result<bool, Failure> {
    if scenario.is_none() && cli.config.is_none() {
        return Err(Failure::Usage("simulate needs a scenario file".into()));
    }
    let s = load_scenario(cli, scenario)?;
    let track_path = s.track.clone().ok_or_else(|| Failure::Usage("scenario does not name a track".into()))?;
    let track = load_track(&track_path, &s)?;
    let report = run_closed_loop(&s, &track).map_err(runtime)?;
    write_logs(&cli.out_dir, &report)?;
    println!("{}", write_json(&cli.out_dir.join("report.json"), &report)?);
    Ok(report.clean())
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Failure::Runtime(format!("{}: {e}", cli.out_dir.display())))?;
    match &cli.command {
        Command::OptimizeRaceline { track } => optimize(cli, track).map(|_| true),
        Command::Localize { replay } => localize(cli, replay).map(|_| true),
        Command::Perceive { image, homography, debug } => perceive_cmd(cli, image, homography, *debug).map(|_| true),
        Command::Simulate { scenario } => simulate(cli, scenario.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("run finished with boundary violations or safety stops");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
