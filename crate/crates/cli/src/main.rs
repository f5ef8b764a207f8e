use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roadplane_cli::config::{ConfigFile, Overrides, RunConfig, OUT_ENV};
use roadplane_cli::error::{PipelineError, Stage};
use roadplane_cli::pipeline::{self, load_frame};
use roadplane_cli::service;
use roadplane_cli::synth_out::write_synthetic;
use roadplane_core::calibration::ProfileDocument;
use roadplane_core::synth::SyntheticScene;

#[derive(Parser)]
#[command(name = "roadplane", version, about = "Road-plane calibration and metric BEV traffic reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the active points of a profile document and write it back with the homography.
    CalibrateFit {
        #[arg(long)]
        calibration: PathBuf,
        /// Output profile path; defaults to overwriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid overlay, BEV preview, sensitivity and reprojection reports.
    Validate {
        #[arg(long)]
        calibration: PathBuf,
        /// Frames directory (the profile's reference frame is used) or a single image.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, env = OUT_ENV)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        resolution_ppm: f64,
        #[arg(long, default_value_t = 5.0)]
        grid_m: f64,
        #[arg(long, default_value_t = 2.0)]
        perturb_px: f64,
    },
    /// Full pipeline: tracks, cuboid scene, renders and summary.
    Run(RunArgs),
    /// Generate a synthetic scene with exact ground truth.
    Synth {
        /// Scene description (JSON); a built-in scene is used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in scene: `single-car` or `mixed-traffic`.
        #[arg(long, default_value = "single-car")]
        scene: String,
        #[arg(long, env = OUT_ENV)]
        out: PathBuf,
        /// Skip writing PNG frames.
        #[arg(long)]
        no_frames: bool,
    },
    /// Local HTTP service for the calibration UI.
    Serve {
        #[arg(long)]
        calibration: PathBuf,
        /// Frames directory holding the reference frame, or the image itself.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    first: Option<u32>,
    #[arg(long)]
    last: Option<u32>,
    #[arg(long)]
    step: Option<u32>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    heading_threshold_deg: Option<f64>,
    #[arg(long)]
    resolution_ppm: Option<f64>,
    #[arg(long)]
    grid_m: Option<f64>,
    /// Skip malformed annotation rows instead of failing (exit code 3 when any are skipped).
    #[arg(long)]
    lenient: bool,
}

fn run_command(args: RunArgs) -> Result<i32, PipelineError> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let overrides = Overrides {
        frames: args.frames,
        annotations: args.annotations,
        calibration: args.calibration,
        out: args.out,
        first: args.first,
        last: args.last,
        step: args.step,
        fps: args.fps,
        heading_threshold_deg: args.heading_threshold_deg,
        resolution_ppm: args.resolution_ppm,
        grid_m: args.grid_m,
        lenient: args.lenient,
    };
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let cfg = RunConfig::resolve(file, overrides, env_out)?;
    let outcome = pipeline::run(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
    Ok(outcome.exit_code)
}

fn reference_frame(frames: Option<&Path>, doc: &ProfileDocument) -> Result<Option<image::RgbImage>, PipelineError> {
    match frames {
        None => Ok(None),
        Some(p) if p.is_dir() => load_frame(&p.join(&doc.reference_frame)).map(Some),
        Some(p) => load_frame(p).map(Some),
    }
}

fn dispatch(cli: Cli) -> Result<i32, PipelineError> {
    match cli.command {
        Command::CalibrateFit { calibration, out } => {
            let out = out.unwrap_or_else(|| calibration.clone());
            let report = pipeline::calibrate_fit(&calibration, &out)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(0)
        }
        Command::Validate {
            calibration,
            frames,
            out,
            resolution_ppm,
            grid_m,
            perturb_px,
        } => {
            let report = pipeline::validate(&calibration, frames.as_deref(), &out, resolution_ppm, grid_m, perturb_px)?;
            println!("{}", serde_json::to_string_pretty(&report.reprojection).expect("report serializes"));
            Ok(0)
        }
        Command::Run(args) => run_command(args),
        Command::Synth {
            config,
            scene,
            out,
            no_frames,
        } => {
            let scene = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::io(Stage::Config, &p, e))?;
                    SyntheticScene::from_json(&text)
                        .map_err(|e| PipelineError::new(Stage::Config, e.code(), format!("{}: {e}", p.display())))?
                }
                None => match scene.as_str() {
                    "single-car" => SyntheticScene::single_car(),
                    "mixed-traffic" => SyntheticScene::mixed_traffic(),
                    other => return Err(PipelineError::config(format!("unknown built-in scene {other:?}"))),
                },
            };
            let report = write_synthetic(&scene, &out, !no_frames)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(0)
        }
        Command::Serve {
            calibration,
            frames,
            port,
        } => {
            let text = std::fs::read_to_string(&calibration)
                .map_err(|e| PipelineError::io(Stage::Calibration, &calibration, e))?;
            let doc = ProfileDocument::from_json(&text).map_err(|e| {
                PipelineError::new(Stage::Calibration, e.code(), format!("{}: {e}", calibration.display()))
            })?;
            let frame = reference_frame(frames.as_deref(), &doc)?;
            let state = service::AppState::new(doc, frame);
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::new(Stage::Config, "runtime", e.to_string()))?;
            rt.block_on(service::serve(state, port))
                .map_err(|e| PipelineError::new(Stage::Config, "bind", e.to_string()))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // usage errors are configuration errors (1), not clap's default 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
