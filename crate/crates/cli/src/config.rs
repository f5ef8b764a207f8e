//! Run configuration: a JSON file, command-line overrides on top, and
//! `ROADPLANE_OUT` as the last resort for the output directory.

use std::path::{Path, PathBuf};

use roadplane_core::ingest::FrameNamePattern;
use roadplane_core::render::bev::{DEFAULT_GRID_SPACING_M, DEFAULT_RESOLUTION_PPM};
use roadplane_core::render::PreviewCamera;
use roadplane_core::trajectory::{DEFAULT_FPS, DEFAULT_HEADING_THRESHOLD_DEG};
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

pub const OUT_ENV: &str = "ROADPLANE_OUT";

/// The configuration file as written. Relative paths are relative to the
/// file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub frames: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub first: Option<u32>,
    pub last: Option<u32>,
    pub step: Option<u32>,
    pub frame_pattern: Option<String>,
    pub fps: Option<f64>,
    pub road_axis_deg: Option<f64>,
    pub heading_threshold_deg: Option<f64>,
    pub resolution_ppm: Option<f64>,
    pub grid_m: Option<f64>,
    pub triptych: Option<bool>,
    pub lenient: Option<bool>,
    pub preview_azimuth_deg: Option<f64>,
    pub preview_elevation_deg: Option<f64>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.frames, &mut cfg.annotations, &mut cfg.calibration, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub frames: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub first: Option<u32>,
    pub last: Option<u32>,
    pub step: Option<u32>,
    pub fps: Option<f64>,
    pub heading_threshold_deg: Option<f64>,
    pub resolution_ppm: Option<f64>,
    pub grid_m: Option<f64>,
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frames: Option<PathBuf>,
    pub annotations: PathBuf,
    pub calibration: PathBuf,
    pub out: PathBuf,
    /// Frame-map span; defaults to the annotated range.
    pub first: Option<u32>,
    pub last: Option<u32>,
    pub step: u32,
    pub frame_pattern: FrameNamePattern,
    pub fps: f64,
    pub road_axis_deg: f64,
    pub heading_threshold_deg: f64,
    pub resolution_ppm: f64,
    pub grid_m: f64,
    pub triptych: bool,
    pub lenient: bool,
    pub preview: PreviewCamera,
}

fn positive(name: &str, v: f64) -> Result<f64, PipelineError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(PipelineError::config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Merges file and flags. `env_out` is the value of `ROADPLANE_OUT`.
    pub fn resolve(file: ConfigFile, o: Overrides, env_out: Option<PathBuf>) -> Result<Self, PipelineError> {
        let required = |flag: Option<PathBuf>, file: Option<PathBuf>, name: &str| {
            flag.or(file)
                .ok_or_else(|| PipelineError::config(format!("no {name} given (flag --{name} or config)")))
        };
        let annotations = required(o.annotations, file.annotations, "annotations")?;
        let calibration = required(o.calibration, file.calibration, "calibration")?;
        let out = o.out.or(file.out).or(env_out).ok_or_else(|| {
            PipelineError::config(format!("no output directory (flag --out, config `out`, or {OUT_ENV})"))
        })?;
        let step = o.step.or(file.step).unwrap_or(1);
        if step < 1 {
            return Err(PipelineError::config("step must be >= 1"));
        }
        let first = o.first.or(file.first);
        let last = o.last.or(file.last);
        if let (Some(a), Some(b)) = (first, last) {
            if a > b {
                return Err(PipelineError::config(format!("first frame {a} is after last frame {b}")));
            }
        }
        let pattern = file.frame_pattern.as_deref().unwrap_or("img%06d.jpg");
        let frame_pattern = FrameNamePattern::parse(pattern).map_err(|e| PipelineError::config(e.to_string()))?;
        let threshold = o
            .heading_threshold_deg
            .or(file.heading_threshold_deg)
            .unwrap_or(DEFAULT_HEADING_THRESHOLD_DEG);
        if !(0.0..=180.0).contains(&threshold) {
            return Err(PipelineError::config(format!("heading threshold {threshold} outside [0, 180]")));
        }
        let defaults = PreviewCamera::default();
        Ok(Self {
            frames: o.frames.or(file.frames),
            annotations,
            calibration,
            out,
            first,
            last,
            step,
            frame_pattern,
            fps: positive("fps", o.fps.or(file.fps).unwrap_or(DEFAULT_FPS))?,
            road_axis_deg: file.road_axis_deg.unwrap_or(90.0),
            heading_threshold_deg: threshold,
            resolution_ppm: positive(
                "resolution",
                o.resolution_ppm.or(file.resolution_ppm).unwrap_or(DEFAULT_RESOLUTION_PPM),
            )?,
            grid_m: positive("grid spacing", o.grid_m.or(file.grid_m).unwrap_or(DEFAULT_GRID_SPACING_M))?,
            triptych: file.triptych.unwrap_or(true),
            lenient: o.lenient || file.lenient.unwrap_or(false),
            preview: PreviewCamera {
                azimuth_deg: file.preview_azimuth_deg.unwrap_or(defaults.azimuth_deg),
                elevation_deg: file.preview_elevation_deg.unwrap_or(defaults.elevation_deg),
                grid_spacing: o.grid_m.or(file.grid_m).unwrap_or(defaults.grid_spacing),
                ..defaults
            },
        })
    }

    /// Input paths must exist before anything runs.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        for (name, p) in [("annotations", &self.annotations), ("calibration", &self.calibration)] {
            if !p.is_file() {
                return Err(PipelineError::config(format!("{name} file {} does not exist", p.display())));
            }
        }
        if let Some(f) = &self.frames {
            if !f.is_dir() {
                return Err(PipelineError::config(format!("frames directory {} does not exist", f.display())));
            }
        }
        Ok(())
    }
}
