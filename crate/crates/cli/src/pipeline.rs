//! frames → boxes → homography → BEV tracks → cuboids, plus the smaller
//! `validate` and `calibrate-fit` jobs.

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use roadplane_core::calibration::{
    build_profile, grid_geometry, load_profile_json, reprojection_report, sensitivity_field, CalibrationProfile,
    LoadedProfile, ProfileDocument, ReprojectionReport,
};
use roadplane_core::ingest::{
    build_frame_map, join_observations, parse_annotations, FrameMap, JoinReport, JoinedObservation, ParseMode,
};
use roadplane_core::render::raster::{draw_dot, encode_png, identity_color};
use roadplane_core::render::{
    compose_triptych, draw_annotated_frame, render_bev_tracks, render_cuboid_preview, render_grid_overlay,
    warp_to_bev, BevStyle, BevTracksRender, TriptychLayout, WarpOptions,
};
use roadplane_core::scene::{assemble_frames, scene_to_json, SceneFrame, SceneSummary};
use roadplane_core::trajectory::{
    build_tracks, estimate_kinematics, project_all, regularize_track, speed_summary, tracks_to_csv, TimeBase,
    Track,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{PipelineError, Stage};

/// Exit status for a run that finished but skipped malformed rows.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DropCounts {
    /// Malformed annotation rows skipped in lenient mode.
    pub skipped_rows: usize,
    /// Observations on frames outside the frame map.
    pub unmapped_observations: usize,
    /// Distinct annotated frames outside the frame map.
    pub unmapped_frames: usize,
    /// Observations whose ground contact maps to infinity.
    pub at_infinity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub first: u32,
    pub last: u32,
    pub step: u32,
    pub fps: f64,
    pub road_axis_deg: f64,
    pub heading_threshold_deg: f64,
    pub resolution_ppm: f64,
    pub grid_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Sampled frames, i.e. frame-map entries.
    pub frames: usize,
    pub tracks: usize,
    pub cuboids: usize,
    pub mean_points_per_track: f64,
    /// Mean over tracks of each track's mean speed.
    pub mean_speed_mps: Option<f64>,
    /// Mean over every point with a speed.
    pub pooled_mean_speed_mps: Option<f64>,
    /// Sampled frames with no observation at all; a large count next to
    /// unmapped observations usually means the step is wrong.
    pub empty_samples: usize,
    pub dropped: DropCounts,
    pub warnings: Vec<String>,
    pub settings: RunSettings,
}

/// Everything computed before any file is written.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub profile: CalibrationProfile,
    pub frame_map: FrameMap,
    pub joined: Vec<JoinedObservation>,
    pub join_report: JoinReport,
    pub tracks: Vec<Track>,
    pub scene: Vec<SceneFrame>,
    pub scene_summary: SceneSummary,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub exit_code: i32,
}

fn read_text(stage: Stage, path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(stage, path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(Stage::Output, path, e))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(|e| PipelineError::io(Stage::Output, path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn load_calibration(path: &Path) -> Result<LoadedProfile, PipelineError> {
    let text = read_text(Stage::Calibration, path)?;
    load_profile_json(&text)
        .map_err(|e| PipelineError::new(Stage::Calibration, e.code(), format!("{}: {e}", path.display())))
}

pub fn load_frame(path: &Path) -> Result<RgbImage, PipelineError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| PipelineError::new(Stage::Render, "missing_frame", format!("{}: {e}", path.display())))
}

/// Runs every stage up to the scene without touching the output directory.
pub fn analyze(cfg: &RunConfig) -> Result<Analysis, PipelineError> {
    if !cfg.calibration.is_file() {
        return Err(PipelineError::new(
            Stage::Calibration,
            "missing_file",
            format!("calibration file {} does not exist", cfg.calibration.display()),
        ));
    }
    cfg.check_inputs()?;
    let LoadedProfile { profile, mut warnings } = load_calibration(&cfg.calibration)?;

    let ingest_err = |code: &str, e: &dyn std::fmt::Display| {
        PipelineError::new(Stage::Ingest, code, format!("{}: {e}", cfg.annotations.display()))
    };
    let text = read_text(Stage::Ingest, &cfg.annotations)?;
    let mode = if cfg.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let parsed = parse_annotations(&text, mode).map_err(|e| ingest_err(e.code(), &e))?;
    let first = cfg
        .first
        .or_else(|| parsed.observations.iter().map(|o| o.source_frame).min());
    let last = cfg.last.or_else(|| parsed.observations.iter().map(|o| o.source_frame).max());
    let (Some(first), Some(last)) = (first, last) else {
        return Err(ingest_err("empty_annotations", &"no observations and no frame span given"));
    };
    let frame_map = build_frame_map(first, last, cfg.step)
        .map_err(|e| PipelineError::new(Stage::Ingest, e.code(), e.to_string()))?
        .with_pattern(cfg.frame_pattern.clone());
    let joined = join_observations(parsed.observations, &frame_map);
    if joined.report.unmapped_observations > 0 {
        log::info!(
            "{} observations on {} frames fall outside the frame map",
            joined.report.unmapped_observations,
            joined.report.unmapped_frames
        );
    }

    let (projected, projection) = project_all(&joined.observations, &profile);
    let time_base = TimeBase::new(cfg.fps, cfg.step)
        .map_err(|e| PipelineError::new(Stage::Trajectory, e.code(), e.to_string()))?;
    let mut tracks = build_tracks(&projected, &time_base, first)
        .map_err(|e| PipelineError::new(Stage::Trajectory, e.code(), e.to_string()))?;
    for t in &mut tracks {
        estimate_kinematics(t).map_err(|e| PipelineError::new(Stage::Trajectory, e.code(), e.to_string()))?;
        regularize_track(t, cfg.road_axis_deg.to_radians(), cfg.heading_threshold_deg.to_radians());
    }

    let scene = assemble_frames(&tracks, cfg.road_axis_deg.to_radians());
    let scene_summary = SceneSummary::new(frame_map.len(), &tracks, &scene);
    let speeds = speed_summary(&tracks);
    let occupied: std::collections::BTreeSet<u32> = joined.observations.iter().map(|j| j.sample_index).collect();
    let empty_samples = frame_map.len() - occupied.len();
    if joined.report.unmapped_observations > 0 && empty_samples > 0 {
        warnings.push(format!(
            "{empty_samples} sampled frames have no observations while {} observations fall between samples; \
             check first/last/step against the annotation sampling",
            joined.report.unmapped_observations
        ));
    }
    if projection.dropped_at_infinity > 0 {
        warnings.push(format!(
            "{} observations project beyond the horizon and were dropped",
            projection.dropped_at_infinity
        ));
    }
    let summary = RunSummary {
        frames: scene_summary.frames,
        tracks: scene_summary.tracks,
        cuboids: scene_summary.cuboids,
        mean_points_per_track: scene_summary.mean_points_per_track,
        mean_speed_mps: speeds.per_track_mean_mps,
        pooled_mean_speed_mps: speeds.pooled_mean_mps,
        empty_samples,
        dropped: DropCounts {
            skipped_rows: parsed.skipped_rows,
            unmapped_observations: joined.report.unmapped_observations,
            unmapped_frames: joined.report.unmapped_frames,
            at_infinity: projection.dropped_at_infinity,
        },
        warnings,
        settings: RunSettings {
            first,
            last,
            step: cfg.step,
            fps: cfg.fps,
            road_axis_deg: cfg.road_axis_deg,
            heading_threshold_deg: cfg.heading_threshold_deg,
            resolution_ppm: cfg.resolution_ppm,
            grid_m: cfg.grid_m,
        },
    };
    Ok(Analysis {
        profile,
        frame_map,
        joined: joined.observations,
        join_report: joined.report,
        tracks,
        scene,
        scene_summary,
        summary,
    })
}

fn render_err(e: roadplane_core::render::RenderError) -> PipelineError {
    PipelineError::new(Stage::Render, e.code(), e.to_string())
}

/// Reference image for validation outputs: the profile's reference frame if
/// it exists in the frames directory, else the first sampled frame.
fn reference_image(frames: &Path, profile: &CalibrationProfile, map: &FrameMap) -> Result<RgbImage, PipelineError> {
    let named = frames.join(&profile.reference_frame);
    if !profile.reference_frame.is_empty() && named.is_file() {
        return load_frame(&named);
    }
    let first = map
        .entries()
        .first()
        .ok_or_else(|| PipelineError::new(Stage::Render, "missing_frame", "frame map is empty"))?;
    load_frame(&frames.join(map.source_name(first)))
}

/// Full pipeline: analysis, then the output tree under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let a = analyze(cfg)?;
    let out = &cfg.out;
    create_dir(out)?;
    create_dir(&out.join("scene"))?;

    write_bytes(&out.join("frame_map.csv"), a.frame_map.to_csv().as_bytes())?;
    write_bytes(&out.join("tracks.csv"), tracks_to_csv(&a.tracks).as_bytes())?;
    write_bytes(&out.join("scene.json"), scene_to_json(&a.scene, &a.scene_summary).as_bytes())?;

    let style = BevStyle {
        resolution: cfg.resolution_ppm,
        grid_spacing: cfg.grid_m,
        ..BevStyle::default()
    };
    let bev = render_bev_tracks(&a.tracks, a.profile.extent, &style).map_err(render_err)?;
    write_bytes(&out.join("bev_tracks.png"), &encode_png(&bev.image))?;
    write_bytes(&out.join("bev_tracks.svg"), bev.svg.as_bytes())?;

    let by_sample: BTreeMap<u32, &SceneFrame> = a.scene.iter().map(|f| (f.sample_index, f)).collect();
    let previews: Vec<(u32, RgbImage)> = a
        .frame_map
        .entries()
        .par_iter()
        .map(|e| {
            let empty = SceneFrame {
                sample_index: e.sample_index,
                source_frame: e.source_frame,
                time: 0.0,
                cuboids: vec![],
            };
            let frame = by_sample.get(&e.sample_index).copied().unwrap_or(&empty);
            render_cuboid_preview(frame, &a.profile.extent, &cfg.preview)
                .map(|img| (e.sample_index, img))
                .map_err(render_err)
        })
        .collect::<Result<_, _>>()?;
    for (k, img) in &previews {
        write_bytes(&out.join("scene").join(format!("frame_{k:04}.png")), &encode_png(img))?;
    }

    match &cfg.frames {
        Some(frames) => {
            let reference = reference_image(frames, &a.profile, &a.frame_map)?;
            write_validation_images(&reference, &a.profile, cfg.resolution_ppm, cfg.grid_m, out)?;
            if cfg.triptych {
                write_triptychs(cfg, frames, &a, &bev, &previews)?;
            }
        }
        None => log::warn!("no frames directory; skipping BEV preview, grid overlay and triptychs"),
    }

    write_bytes(&out.join("summary.json"), to_json(&a.summary).as_bytes())?;
    let exit_code = if a.summary.dropped.skipped_rows > 0 { EXIT_PARTIAL } else { 0 };
    Ok(RunOutcome {
        summary: a.summary,
        exit_code,
    })
}

fn write_validation_images(
    reference: &RgbImage,
    profile: &CalibrationProfile,
    resolution: f64,
    grid_m: f64,
    out: &Path,
) -> Result<(), PipelineError> {
    let warped = warp_to_bev(reference, profile, resolution, &WarpOptions::default()).map_err(render_err)?;
    write_bytes(&out.join("bev_preview.png"), &encode_png(&warped.image))?;
    let grid = grid_geometry(profile, grid_m)
        .map_err(|e| PipelineError::new(Stage::Calibration, e.code(), e.to_string()))?;
    write_bytes(&out.join("grid_overlay.png"), &encode_png(&render_grid_overlay(reference, &grid, profile)))?;
    Ok(())
}

fn write_triptychs(
    cfg: &RunConfig,
    frames: &Path,
    a: &Analysis,
    bev: &BevTracksRender,
    previews: &[(u32, RgbImage)],
) -> Result<(), PipelineError> {
    let dir = cfg.out.join("triptych");
    create_dir(&dir)?;
    let layout = TriptychLayout::default();
    let mut boxes: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for j in &a.joined {
        boxes
            .entry(j.sample_index)
            .or_default()
            .push((j.observation.identity, j.observation.corners()));
    }
    let mut positions: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for t in &a.tracks {
        for p in &t.points {
            positions.entry(p.sample_index).or_default().push((t.identity, p.ground));
        }
    }
    let names: Vec<String> = a
        .frame_map
        .entries()
        .par_iter()
        .zip(previews.par_iter())
        .map(|(e, (_, preview))| {
            let source = load_frame(&frames.join(a.frame_map.source_name(e)))?;
            let left = draw_annotated_frame(&source, boxes.get(&e.sample_index).map_or(&[][..], |v| v));
            let mut top = bev.image.clone();
            for (id, g) in positions.get(&e.sample_index).map_or(&[][..], |v| v) {
                draw_dot(&mut top, bev.transform.to_pixel(*g), 5.0, identity_color(*id));
            }
            let composite = compose_triptych(Some(&left), Some(&top), Some(preview), &layout).map_err(render_err)?;
            let name = format!("frame_{:04}.png", e.sample_index);
            write_bytes(&dir.join(&name), &encode_png(&composite))?;
            Ok(name)
        })
        .collect::<Result<_, PipelineError>>()?;
    let rate = cfg.fps / cfg.step as f64;
    let mut index = format!(
        "# {} composites in sample order. Video assembly is external, e.g.\n\
         # ffmpeg -framerate {rate} -i frame_%04d.png -pix_fmt yuv420p triptych.mp4\n",
        names.len()
    );
    for n in names {
        index.push_str(&n);
        index.push('\n');
    }
    write_bytes(&dir.join("index.txt"), index.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub reprojection: ReprojectionReport,
    pub sensitivity: roadplane_core::calibration::SensitivityField,
    pub warnings: Vec<String>,
}

/// Grid overlay, BEV preview (when a reference image is available) and the
/// sensitivity and reprojection reports.
pub fn validate(
    calibration: &Path,
    reference: Option<&Path>,
    out: &Path,
    resolution: f64,
    grid_m: f64,
    perturb_px: f64,
) -> Result<ValidationReport, PipelineError> {
    let LoadedProfile { profile, warnings } = load_calibration(calibration)?;
    create_dir(out)?;
    if let Some(r) = reference {
        let path = if r.is_dir() { r.join(&profile.reference_frame) } else { r.to_path_buf() };
        let img = load_frame(&path)?;
        write_validation_images(&img, &profile, resolution, grid_m, out)?;
    }
    let sensitivity = sensitivity_field(&profile, perturb_px, grid_m)
        .map_err(|e| PipelineError::new(Stage::Calibration, e.code(), e.to_string()))?;
    let report = ValidationReport {
        reprojection: reprojection_report(&profile),
        sensitivity,
        warnings,
    };
    write_bytes(&out.join("sensitivity.json"), to_json(&report.sensitivity).as_bytes())?;
    write_bytes(&out.join("reprojection.json"), to_json(&report.reprojection).as_bytes())?;
    Ok(report)
}

/// Fits the active points of a profile document and writes it back with the
/// homography filled in.
pub fn calibrate_fit(input: &Path, output: &Path) -> Result<ReprojectionReport, PipelineError> {
    let text = read_text(Stage::Calibration, input)?;
    let cal_err = |e: roadplane_core::calibration::CalibrationError| {
        PipelineError::new(Stage::Calibration, e.code(), format!("{}: {e}", input.display()))
    };
    let doc = ProfileDocument::from_json(&text).map_err(cal_err)?;
    doc.validate().map_err(cal_err)?;
    let mut profile = build_profile(doc.correspondences(), doc.extent, doc.reference_frame.clone()).map_err(cal_err)?;
    profile.created = doc.created.clone();
    profile.modified = doc.modified.clone();
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_bytes(output, format!("{}\n", profile.to_json()).as_bytes())?;
    Ok(reprojection_report(&profile))
}
