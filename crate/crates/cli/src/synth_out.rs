//! Writes a synthetic scene to disk in exactly the layout `run` consumes.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use roadplane_core::render::raster::encode_png;
use roadplane_core::synth::{fitted_profile, render_background, render_frame, render_observations, SyntheticScene};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::error::{PipelineError, Stage};

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub samples: usize,
    pub observations: usize,
    pub dropped_outside_view: usize,
}

fn synth_err(e: roadplane_core::synth::SynthError) -> PipelineError {
    PipelineError::new(Stage::Synth, e.code(), e.to_string())
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(Stage::Output, path, e))
}

/// Output: `frames/`, `annotations.txt`, `frame_map.csv`, `calibration.json`
/// (fitted from the exact extent corners), `truth.csv`, `scene.json` and a
/// `config.json` that `run --config` accepts as is.
pub fn write_synthetic(scene: &SyntheticScene, out: &Path, with_frames: bool) -> Result<SynthReport, PipelineError> {
    let run = render_observations(scene).map_err(synth_err)?;
    let profile = fitted_profile(scene).map_err(synth_err)?;
    let frames_dir = out.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| PipelineError::io(Stage::Output, &frames_dir, e))?;

    write(&out.join("annotations.txt"), run.annotation_text().as_bytes())?;
    write(&out.join("frame_map.csv"), run.frame_map.to_csv().as_bytes())?;
    write(&out.join("calibration.json"), format!("{}\n", profile.to_json()).as_bytes())?;
    write(&out.join("scene.json"), format!("{}\n", scene.to_json()).as_bytes())?;

    let mut truth = String::from(
        "identity,sample_index,source_frame,time_s,x_m,y_m,heading_rad,contact_x_m,contact_y_m,along_error_m,contact_error_m,range_m\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &run.truth {
        let _ = writeln!(
            truth,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.identity,
            t.sample_index,
            t.source_frame,
            t.time,
            t.ground.x,
            t.ground.y,
            t.heading,
            opt(t.contact.map(|c| c.x)),
            opt(t.contact.map(|c| c.y)),
            opt(t.along_error_m),
            opt(t.contact_error_m),
            t.range_m
        );
    }
    write(&out.join("truth.csv"), truth.as_bytes())?;

    if with_frames {
        let background = render_background(scene);
        run.frame_map
            .entries()
            .par_iter()
            .try_for_each(|e| {
                let img = render_frame(scene, &background, e.sample_index - 1);
                write(&frames_dir.join(run.frame_map.source_name(e)), &encode_png(&img))
            })?;
    }

    let config = ConfigFile {
        frames: with_frames.then(|| "frames".into()),
        annotations: Some("annotations.txt".into()),
        calibration: Some("calibration.json".into()),
        out: Some("run".into()),
        first: Some(scene.first_frame),
        last: Some(scene.last_frame()),
        step: Some(scene.step),
        frame_pattern: Some(scene.frame_pattern.clone()),
        fps: Some(scene.fps),
        ..Default::default()
    };
    write(&out.join("config.json"), format!("{}\n", config.to_json()).as_bytes())?;
    Ok(SynthReport {
        samples: run.frame_map.len(),
        observations: run.observations.len(),
        dropped_outside_view: run.dropped_outside_view,
    })
}
