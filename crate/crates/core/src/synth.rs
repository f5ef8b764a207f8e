//! Ground-truth oracle: a known pinhole camera over the road plane, the
//! closed-form plane homography it induces, and synthetic annotation runs.
//!
//! Nothing here goes through the estimator; projections are composed
//! directly from the camera pose.

use std::f64::consts::FRAC_PI_2;

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    build_profile, CalibrationError, CalibrationProfile, Correspondence, RoadExtent,
};
use crate::geometry::{Direction, GeometryError, GroundPoint, Homography, ImagePoint};
use crate::ingest::{
    build_frame_map, format_annotations, BoxXywh, FrameMap, FrameNamePattern, IngestError, Observation,
};
use crate::render::raster::{self, Color};
use crate::scene::dimension_prior;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("agent {identity} has a waypoint outside the road extent")]
    AgentOutsideExtent { identity: u32 },
    #[error("scene file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidCamera(_) => "invalid_camera",
            Self::InvalidScene(_) => "invalid_scene",
            Self::AgentOutsideExtent { .. } => "agent_outside_extent",
            Self::Malformed(_) => "malformed_scene",
            Self::Geometry(e) => e.code(),
            Self::Calibration(e) => e.code(),
            Self::Ingest(e) => e.code(),
        }
    }
}

fn default_yaw() -> f64 {
    FRAC_PI_2
}

/// Pinhole camera with zero roll. Camera axes: x right, y down, z along the
/// optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCamera {
    pub focal_px: f64,
    pub principal_point: [f64; 2],
    pub image_size: [u32; 2],
    /// Ground-frame position of the point directly below the camera.
    pub position: [f64; 2],
    pub height_m: f64,
    /// Angle of the optical axis below the horizontal.
    pub tilt_rad: f64,
    /// Ground-frame heading of the optical axis; π/2 looks along +y.
    #[serde(default = "default_yaw")]
    pub yaw_rad: f64,
}

impl SyntheticCamera {
    /// 1920×1080, about 35 m up and 25 m behind the near edge of the default
    /// extent, looking down the road.
    pub fn oblique() -> Self {
        Self {
            focal_px: 1400.0,
            principal_point: [960.0, 540.0],
            image_size: [1920, 1080],
            position: [12.0, -25.0],
            height_m: 35.0,
            tilt_rad: 36f64.to_radians(),
            yaw_rad: FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let finite = [
            self.focal_px,
            self.principal_point[0],
            self.principal_point[1],
            self.position[0],
            self.position[1],
            self.height_m,
            self.tilt_rad,
            self.yaw_rad,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SynthError::InvalidCamera("non-finite parameter".into()));
        }
        if self.focal_px <= 0.0 {
            return Err(SynthError::InvalidCamera(format!("focal length {} must be positive", self.focal_px)));
        }
        if self.height_m <= 0.0 {
            return Err(SynthError::InvalidCamera(format!("height {} must be positive", self.height_m)));
        }
        if !(self.tilt_rad > 0.0 && self.tilt_rad < FRAC_PI_2) {
            return Err(SynthError::InvalidCamera(format!("tilt {} must lie in (0, pi/2)", self.tilt_rad)));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(SynthError::InvalidCamera("empty image".into()));
        }
        Ok(())
    }

    /// World → camera rotation, rows right, down, forward.
    fn rotation(&self) -> Matrix3<f64> {
        let (st, ct) = self.tilt_rad.sin_cos();
        let (sy, cy) = self.yaw_rad.sin_cos();
        let forward = Vector3::new(ct * cy, ct * sy, -st);
        let right = Vector3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
    }

    fn intrinsics(&self) -> Matrix3<f64> {
        let [cx, cy] = self.principal_point;
        Matrix3::new(self.focal_px, 0.0, cx, 0.0, self.focal_px, cy, 0.0, 0.0, 1.0)
    }

    fn center(&self) -> Vector3<f64> {
        Vector3::new(self.position[0], self.position[1], self.height_m)
    }

    /// Camera-frame coordinates of a world point.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let c = self.rotation() * (Vector3::from(p) - self.center());
        [c.x, c.y, c.z]
    }

    /// Pixel position of a world point, `None` when it is not in front of
    /// the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<ImagePoint> {
        let [x, y, z] = self.to_camera(p);
        if z <= 1e-9 {
            return None;
        }
        let [cx, cy] = self.principal_point;
        Some(ImagePoint::new(self.focal_px * x / z + cx, self.focal_px * y / z + cy))
    }

    pub fn contains(&self, p: ImagePoint) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= self.image_size[0] as f64 && p.v <= self.image_size[1] as f64
    }

    /// Where the viewing ray through `p` meets the road plane, `None` at or
    /// above the horizon.
    pub fn ray_to_ground(&self, p: ImagePoint) -> Option<GroundPoint> {
        let ray = self.back_projection() * Vector3::new(p.u, p.v, 1.0);
        if ray.z >= -1e-12 {
            return None;
        }
        let s = -self.height_m / ray.z;
        Some(GroundPoint::new(self.position[0] + s * ray.x, self.position[1] + s * ray.y))
    }

    /// Pixel → world ray direction, `Rᵀ K⁻¹`.
    fn back_projection(&self) -> Matrix3<f64> {
        let [cx, cy] = self.principal_point;
        let f = self.focal_px;
        let k_inv = Matrix3::new(1.0 / f, 0.0, -cx / f, 0.0, 1.0 / f, -cy / f, 0.0, 0.0, 1.0);
        self.rotation().transpose() * k_inv
    }

    /// Ground → image homography `K [r1 r2 −R C]`.
    pub fn ground_to_image_matrix(&self) -> Matrix3<f64> {
        let r = self.rotation();
        let t = -(r * self.center());
        let mut m = Matrix3::zeros();
        m.set_column(0, &r.column(0));
        m.set_column(1, &r.column(1));
        m.set_column(2, &t);
        self.intrinsics() * m
    }
}

/// Closed-form image → ground map of the camera, from intersecting viewing
/// rays with the road plane: for ray `d = M p`, ground `= C_xy − h d_xy / d_z`.
/// Rows are scaled so `w > 0` below the horizon.
pub fn exact_homography(camera: &SyntheticCamera) -> Result<Homography, SynthError> {
    camera.validate()?;
    let m = camera.back_projection();
    let (cx, cy, h) = (camera.position[0], camera.position[1], camera.height_m);
    let (m1, m2, m3) = (m.row(0), m.row(1), m.row(2));
    let rows = [h * m1 - cx * m3, h * m2 - cy * m3, -m3];
    Ok(Homography::new(Matrix3::from_rows(&rows), Direction::ImageToGround)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    /// Seconds since the first sampled frame.
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// A vehicle following a piecewise-linear path. It exists only between its
/// first and last waypoint times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Agent {
    pub id: u32,
    pub class_code: i32,
    pub waypoints: Vec<Waypoint>,
}

impl Agent {
    /// Position and heading at time `t`.
    pub fn state_at(&self, t: f64) -> Option<(GroundPoint, f64)> {
        let w = &self.waypoints;
        let (first, last) = (w.first()?, w.last()?);
        if t < first.t - 1e-9 || t > last.t + 1e-9 {
            return None;
        }
        let k = w.windows(2).position(|s| t <= s[1].t + 1e-9).unwrap_or(0);
        let (a, b) = if w.len() == 1 { (first, first) } else { (&w[k], &w[k + 1]) };
        let span = b.t - a.t;
        let s = if span > 0.0 { ((t - a.t) / span).clamp(0.0, 1.0) } else { 0.0 };
        let pos = GroundPoint::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y));
        Some((pos, self.heading_near(k)))
    }

    /// Direction of segment `k`, or of the nearest moving segment; stationary
    /// agents face +y.
    fn heading_near(&self, k: usize) -> f64 {
        let segs: Vec<(f64, f64)> = self
            .waypoints
            .windows(2)
            .map(|s| (s[1].x - s[0].x, s[1].y - s[0].y))
            .collect();
        let moving = |d: &(f64, f64)| d.0.hypot(d.1) > 1e-12;
        let mut order: Vec<usize> = (0..segs.len()).collect();
        order.sort_by_key(|&i| i.abs_diff(k));
        order
            .into_iter()
            .find(|&i| moving(&segs[i]))
            .map(|i| segs[i].1.atan2(segs[i].0))
            .unwrap_or(FRAC_PI_2)
    }

    /// Straight path at constant speed from `start` with `heading`.
    pub fn constant_velocity(
        id: u32,
        class_code: i32,
        start: GroundPoint,
        speed_mps: f64,
        heading: f64,
        t0: f64,
        t1: f64,
    ) -> Self {
        let d = speed_mps * (t1 - t0);
        Self {
            id,
            class_code,
            waypoints: vec![
                Waypoint { t: t0, x: start.x, y: start.y },
                Waypoint {
                    t: t1,
                    x: start.x + d * heading.cos(),
                    y: start.y + d * heading.sin(),
                },
            ],
        }
    }
}

fn default_fps() -> f64 {
    30.0
}
fn default_first() -> u32 {
    1
}
fn default_step() -> u32 {
    5
}
fn default_pattern() -> String {
    "img%06d.png".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    pub camera: SyntheticCamera,
    #[serde(default)]
    pub extent: RoadExtent,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_first")]
    pub first_frame: u32,
    #[serde(default = "default_step")]
    pub step: u32,
    pub samples: u32,
    pub agents: Vec<Agent>,
    /// Standard deviation of Gaussian noise added to each box edge.
    #[serde(default)]
    pub noise_px: f64,
    #[serde(default)]
    pub seed: u64,
    /// Side of the ground checkerboard painted over the extent in rendered
    /// frames; plain road when absent.
    #[serde(default)]
    pub checkerboard_m: Option<f64>,
    #[serde(default = "default_pattern")]
    pub frame_pattern: String,
}

impl SyntheticScene {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let scene: Self = serde_json::from_str(text).map_err(|e| SynthError::Malformed(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.camera.validate()?;
        self.extent.validate()?;
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(SynthError::InvalidScene(format!("fps {} must be positive", self.fps)));
        }
        if self.step == 0 || self.samples == 0 {
            return Err(SynthError::InvalidScene("step and samples must be >= 1".into()));
        }
        if (self.samples - 1)
            .checked_mul(self.step)
            .and_then(|d| d.checked_add(self.first_frame))
            .is_none()
        {
            return Err(SynthError::InvalidScene("frame numbers overflow".into()));
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return Err(SynthError::InvalidScene(format!("noise {} must be >= 0", self.noise_px)));
        }
        if let Some(s) = self.checkerboard_m {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SynthError::InvalidScene(format!("checkerboard square {s} must be positive")));
            }
        }
        FrameNamePattern::parse(&self.frame_pattern)?;
        let mut ids = std::collections::HashSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return Err(SynthError::InvalidScene(format!("duplicate agent id {}", a.id)));
            }
            if a.waypoints.is_empty() || a.waypoints.windows(2).any(|w| !(w[1].t >= w[0].t)) {
                return Err(SynthError::InvalidScene(format!(
                    "agent {} needs waypoints in time order",
                    a.id
                )));
            }
            if a.waypoints.iter().any(|w| !self.extent.contains(GroundPoint::new(w.x, w.y))) {
                return Err(SynthError::AgentOutsideExtent { identity: a.id });
            }
        }
        Ok(())
    }

    pub fn last_frame(&self) -> u32 {
        self.first_frame + (self.samples - 1) * self.step
    }

    pub fn frame_map(&self) -> Result<FrameMap, SynthError> {
        let pattern = FrameNamePattern::parse(&self.frame_pattern)?;
        Ok(build_frame_map(self.first_frame, self.last_frame(), self.step)?.with_pattern(pattern))
    }

    pub fn time_of_sample(&self, k: u32) -> f64 {
        (k * self.step) as f64 / self.fps
    }

    /// One car at 8 m/s along +y in the near field, 40 samples at step 5.
    pub fn single_car() -> Self {
        let scene = Self {
            camera: SyntheticCamera::oblique(),
            extent: RoadExtent::default(),
            fps: 30.0,
            first_frame: 1,
            step: 5,
            samples: 40,
            agents: vec![],
            noise_px: 0.0,
            seed: 0,
            checkerboard_m: None,
            frame_pattern: default_pattern(),
        };
        let t1 = scene.time_of_sample(scene.samples - 1);
        Self {
            agents: vec![Agent::constant_velocity(1, 1, GroundPoint::new(8.0, 8.0), 8.0, FRAC_PI_2, 0.0, t1)],
            ..scene
        }
    }

    /// Several vehicles in both directions, entering and leaving at
    /// different times.
    pub fn mixed_traffic() -> Self {
        let base = Self::single_car();
        let end = base.time_of_sample(base.samples - 1);
        let up = FRAC_PI_2;
        let down = -FRAC_PI_2;
        let agents = vec![
            Agent::constant_velocity(1, 1, GroundPoint::new(8.0, 8.0), 8.0, up, 0.0, end),
            Agent::constant_velocity(2, 1, GroundPoint::new(4.5, 10.0), 6.0, up, 1.0, end),
            Agent::constant_velocity(3, 2, GroundPoint::new(15.5, 80.0), 7.0, down, 0.0, 5.0),
            Agent::constant_velocity(4, 3, GroundPoint::new(19.0, 85.0), 9.0, down, 2.0, end),
            Agent {
                id: 5,
                class_code: 1,
                waypoints: vec![Waypoint { t: 0.0, x: 22.0, y: 40.0 }, Waypoint { t: end, x: 22.0, y: 40.0 }],
            },
        ];
        Self { agents, ..base }
    }
}

/// Truth for one emitted box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleTruth {
    pub identity: u32,
    pub sample_index: u32,
    pub source_frame: u32,
    pub time: f64,
    /// Footprint center.
    pub ground: GroundPoint,
    pub heading: f64,
    /// Bottom center of the emitted box pushed back through the exact map.
    pub contact: Option<GroundPoint>,
    /// `(contact − ground)` along the heading, signed.
    pub along_error_m: Option<f64>,
    pub contact_error_m: Option<f64>,
    /// Distance of the footprint center from the point below the camera.
    pub range_m: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub observations: Vec<Observation>,
    pub frame_map: FrameMap,
    pub truth: Vec<SampleTruth>,
    /// Agent samples whose footprint was behind the camera or not fully
    /// inside the image.
    pub dropped_outside_view: usize,
    pub homography: Homography,
}

impl SyntheticRun {
    pub fn annotation_text(&self) -> String {
        format_annotations(&self.observations)
    }

    /// Truth rows for one identity in sample order.
    pub fn truth_of(&self, identity: u32) -> Vec<&SampleTruth> {
        self.truth.iter().filter(|t| t.identity == identity).collect()
    }
}

/// Ground footprint corners of an agent, counter-clockwise from front-left.
pub fn footprint(center: GroundPoint, heading: f64, length: f64, width: f64) -> [GroundPoint; 4] {
    let (s, c) = heading.sin_cos();
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].map(|(a, b)| {
        let (dl, dw) = (a * length / 2.0, b * width / 2.0);
        GroundPoint::new(center.x + dl * c - dw * s, center.y + dl * s + dw * c)
    })
}

fn footprint_in_image(camera: &SyntheticCamera, fp: &[GroundPoint; 4]) -> Option<[ImagePoint; 4]> {
    let mut out = [ImagePoint::new(0.0, 0.0); 4];
    for (o, g) in out.iter_mut().zip(fp) {
        *o = camera.project([g.x, g.y, 0.0])?;
    }
    Some(out)
}

pub fn render_observations(scene: &SyntheticScene) -> Result<SyntheticRun, SynthError> {
    scene.validate()?;
    let cam = &scene.camera;
    let homography = exact_homography(cam)?;
    let frame_map = scene.frame_map()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let noise = Normal::new(0.0, scene.noise_px.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut observations = Vec::new();
    let mut truth = Vec::new();
    let mut dropped = 0;

    for entry in frame_map.entries() {
        let t = scene.time_of_sample(entry.sample_index - 1);
        for agent in &scene.agents {
            let Some((center, heading)) = agent.state_at(t) else {
                continue;
            };
            let prior = dimension_prior(agent.class_code);
            let fp = footprint(center, heading, prior.length, prior.width);
            let Some(img) = footprint_in_image(cam, &fp).filter(|img| img.iter().all(|p| cam.contains(*p)))
            else {
                dropped += 1;
                continue;
            };
            let mut x1 = img.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
            let mut x2 = img.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
            let mut y1 = img.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
            let mut y2 = img.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
            if scene.noise_px > 0.0 {
                x1 += noise.sample(&mut rng);
                y1 += noise.sample(&mut rng);
                x2 += noise.sample(&mut rng);
                y2 += noise.sample(&mut rng);
                // keep boxes valid under heavy noise
                x2 = x2.max(x1 + 0.5);
                y2 = y2.max(y1 + 0.5);
            }
            let bbox = BoxXywh { x0: x1, y0: y1, w: x2 - x1, h: y2 - y1 };
            let corners = bbox.corners();
            let bottom = ImagePoint::new((corners.x1 + corners.x2) / 2.0, corners.y2);
            let contact = homography.to_ground(bottom).ok();
            let (s, c) = heading.sin_cos();
            truth.push(SampleTruth {
                identity: agent.id,
                sample_index: entry.sample_index,
                source_frame: entry.source_frame,
                time: t,
                ground: center,
                heading,
                contact,
                along_error_m: contact.map(|g| (g.x - center.x) * c + (g.y - center.y) * s),
                contact_error_m: contact.map(|g| g.distance(&center)),
                range_m: center.distance(&GroundPoint::new(cam.position[0], cam.position[1])),
            });
            observations.push(Observation {
                source_frame: entry.source_frame,
                identity: agent.id,
                bbox,
                category: agent.class_code,
                out_of_view: None,
                occlusion: None,
            });
        }
    }
    Ok(SyntheticRun {
        observations,
        frame_map,
        truth,
        dropped_outside_view: dropped,
        homography,
    })
}

/// Four extent corners as active points plus two check points inside the
/// extent, with exact pixel positions.
pub fn calibration_points(scene: &SyntheticScene) -> Result<Vec<Correspondence>, SynthError> {
    let e = &scene.extent;
    let labels = ["near-left", "near-right", "far-right", "far-left"];
    let mut pts: Vec<(String, GroundPoint, bool)> = e
        .corners()
        .iter()
        .zip(labels)
        .map(|(g, l)| (l.to_string(), *g, true))
        .collect();
    let (mx, w, l) = ((e.x_min + e.x_max) / 2.0, e.width(), e.length());
    pts.push(("check-near".into(), GroundPoint::new(mx, e.y_min + 0.25 * l), false));
    pts.push(("check-far".into(), GroundPoint::new(e.x_min + 0.25 * w, e.y_min + 0.75 * l), false));
    pts.into_iter()
        .map(|(label, g, active)| {
            let p = scene
                .camera
                .project([g.x, g.y, 0.0])
                .filter(|p| scene.camera.contains(*p))
                .ok_or_else(|| SynthError::InvalidScene(format!("calibration point {label} is not visible")))?;
            Ok(Correspondence::new(label, p, g, active))
        })
        .collect()
}

/// The profile an operator would produce by clicking the exact corners.
pub fn fitted_profile(scene: &SyntheticScene) -> Result<CalibrationProfile, SynthError> {
    let reference = FrameNamePattern::parse(&scene.frame_pattern)?.render(scene.first_frame);
    Ok(build_profile(calibration_points(scene)?, scene.extent, reference)?)
}

/// Profile carrying the analytic map directly.
pub fn exact_profile(scene: &SyntheticScene) -> Result<CalibrationProfile, SynthError> {
    let reference = FrameNamePattern::parse(&scene.frame_pattern)?.render(scene.first_frame);
    Ok(CalibrationProfile::from_parts(
        calibration_points(scene)?,
        exact_homography(&scene.camera)?,
        scene.extent,
        reference,
    )?)
}

pub const SKY: Color = Rgb([150, 190, 230]);
pub const VERGE: Color = Rgb([96, 128, 72]);
pub const ROAD: Color = Rgb([110, 110, 110]);
pub const CHECK_DARK: Color = Rgb([20, 20, 20]);
pub const CHECK_LIGHT: Color = Rgb([235, 235, 235]);

/// Subsamples per pixel side when rendering the background.
pub const SUPERSAMPLE: u32 = 4;

fn ground_color(scene: &SyntheticScene, px: ImagePoint) -> Color {
    match scene.camera.ray_to_ground(px) {
        None => SKY,
        Some(g) if !scene.extent.contains(g) => VERGE,
        Some(g) => match scene.checkerboard_m {
            Some(s) => {
                let (i, j) = (
                    ((g.x - scene.extent.x_min) / s).floor() as i64,
                    ((g.y - scene.extent.y_min) / s).floor() as i64,
                );
                if (i + j).rem_euclid(2) == 0 {
                    CHECK_DARK
                } else {
                    CHECK_LIGHT
                }
            }
            None => ROAD,
        },
    }
}

/// Static background: viewing rays through a `SUPERSAMPLE`² grid in each
/// pixel are intersected with the road plane and the hits box-filtered, so
/// edges land at sub-pixel positions instead of snapping to pixel centers.
pub fn render_background(scene: &SyntheticScene) -> RgbImage {
    let [w, h] = scene.camera.image_size;
    let mut img = RgbImage::new(w, h);
    let row_len = w as usize * 3;
    let n = SUPERSAMPLE;
    let weight = 1.0 / (n * n) as f64;
    img.par_chunks_mut(row_len).enumerate().for_each(|(r, row)| {
        for c in 0..w as usize {
            let mut acc = [0.0f64; 3];
            for a in 0..n {
                for b in 0..n {
                    let px = ImagePoint::new(
                        c as f64 + (b as f64 + 0.5) / n as f64,
                        r as f64 + (a as f64 + 0.5) / n as f64,
                    );
                    let color = ground_color(scene, px);
                    for (a, c) in acc.iter_mut().zip(color.0) {
                        *a += c as f64 * weight;
                    }
                }
            }
            for (o, a) in row[c * 3..c * 3 + 3].iter_mut().zip(acc) {
                *o = a.round() as u8;
            }
        }
    });
    img
}

/// Frame for sample `k` (0-based): background plus each visible agent's
/// footprint filled in its identity color.
pub fn render_frame(scene: &SyntheticScene, background: &RgbImage, k: u32) -> RgbImage {
    let mut img = background.clone();
    let t = scene.time_of_sample(k);
    for agent in &scene.agents {
        let Some((center, heading)) = agent.state_at(t) else {
            continue;
        };
        let prior = dimension_prior(agent.class_code);
        let fp = footprint(center, heading, prior.length, prior.width);
        if let Some(pts) = footprint_in_image(&scene.camera, &fp) {
            let poly: Vec<(f64, f64)> = pts.iter().map(|p| (p.u, p.v)).collect();
            raster::fill_polygon(&mut img, &poly, raster::identity_color(agent.id));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::estimate_homography;

    fn ground_samples(e: &RoadExtent) -> Vec<GroundPoint> {
        let mut v = Vec::new();
        for i in 0..=6 {
            for j in 0..=9 {
                v.push(GroundPoint::new(
                    e.x_min + e.width() * i as f64 / 6.0,
                    e.y_min + e.length() * j as f64 / 9.0,
                ));
            }
        }
        v
    }

    #[test]
    fn near_nadir_round_trip() {
        let cam = SyntheticCamera {
            position: [12.0, 45.0],
            height_m: 50.0,
            tilt_rad: 89f64.to_radians(),
            focal_px: 800.0,
            ..SyntheticCamera::oblique()
        };
        let h = exact_homography(&cam).unwrap();
        for g in ground_samples(&RoadExtent::default()) {
            let p = cam.project([g.x, g.y, 0.0]).unwrap();
            let back = h.to_ground(p).unwrap();
            assert!(back.distance(&g) < 1e-9, "{g:?} -> {back:?}");
        }
        // near-similarity: the projective row is tiny relative to the scale
        let m = h.normalized().to_row_array();
        assert!(m[6].abs() < 1e-3 * m[0].abs().max(m[1].abs()));
    }

    #[test]
    fn oblique_round_trip_both_ways() {
        let cam = SyntheticCamera::oblique();
        let h = exact_homography(&cam).unwrap();
        let g2i = Homography::new(cam.ground_to_image_matrix(), Direction::GroundToImage).unwrap();
        for g in ground_samples(&RoadExtent::default()) {
            let p = cam.project([g.x, g.y, 0.0]).unwrap();
            assert!(h.to_ground(p).unwrap().distance(&g) < 1e-9);
            assert!(g2i.to_image(g).unwrap().distance(&p) < 1e-7);
            assert!(cam.ray_to_ground(p).unwrap().distance(&g) < 1e-9);
        }
    }

    #[test]
    fn focal_length_is_pure_image_scaling() {
        let a = SyntheticCamera::oblique();
        let b = SyntheticCamera { focal_px: 2.0 * a.focal_px, ..a };
        let ha = exact_homography(&a).unwrap();
        let hb = exact_homography(&b).unwrap();
        let [cx, cy] = a.principal_point;
        for g in ground_samples(&RoadExtent::default()) {
            let pa = a.project([g.x, g.y, 0.0]).unwrap();
            let pb = b.project([g.x, g.y, 0.0]).unwrap();
            assert!((pb.u - cx - 2.0 * (pa.u - cx)).abs() < 1e-9);
            assert!((pb.v - cy - 2.0 * (pa.v - cy)).abs() < 1e-9);
            assert!(ha.to_ground(pa).unwrap().distance(&hb.to_ground(pb).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn far_rows_compress_toward_horizon() {
        let cam = SyntheticCamera::oblique();
        let v: Vec<f64> = (0..=18)
            .map(|j| cam.project([12.0, 5.0 * j as f64, 0.0]).unwrap().v)
            .collect();
        let gaps: Vec<f64> = v.windows(2).map(|w| w[0] - w[1]).collect();
        assert!(gaps.iter().all(|g| *g > 0.0));
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn invalid_cameras_rejected() {
        let c = SyntheticCamera::oblique();
        for bad in [
            SyntheticCamera { height_m: 0.0, ..c },
            SyntheticCamera { tilt_rad: 0.0, ..c },
            SyntheticCamera { tilt_rad: FRAC_PI_2, ..c },
            SyntheticCamera { focal_px: -1.0, ..c },
        ] {
            assert!(matches!(exact_homography(&bad), Err(SynthError::InvalidCamera(_))));
        }
    }

    #[test]
    fn oracle_closure_through_estimator() {
        let scene = SyntheticScene::single_car();
        let truth = exact_homography(&scene.camera).unwrap();
        let pairs: Vec<(ImagePoint, GroundPoint)> = calibration_points(&scene)
            .unwrap()
            .iter()
            .map(|c| (c.image, c.ground))
            .collect();
        let est = estimate_homography(&pairs).unwrap();
        for g in ground_samples(&scene.extent) {
            let p = scene.camera.project([g.x, g.y, 0.0]).unwrap();
            let a = est.to_ground(p).unwrap();
            let b = truth.to_ground(p).unwrap();
            assert!(a.distance(&b) < 1e-9);
        }
    }

    #[test]
    fn stationary_car_has_identical_boxes() {
        let mut scene = SyntheticScene::single_car();
        let end = scene.time_of_sample(scene.samples - 1);
        scene.agents = vec![Agent {
            id: 9,
            class_code: 1,
            waypoints: vec![Waypoint { t: 0.0, x: 12.0, y: 45.0 }, Waypoint { t: end, x: 12.0, y: 45.0 }],
        }];
        let run = render_observations(&scene).unwrap();
        assert_eq!(run.observations.len(), 40);
        assert!(run.observations.iter().all(|o| o.bbox == run.observations[0].bbox));
    }

    #[test]
    fn agent_behind_camera_is_dropped() {
        let mut scene = SyntheticScene::single_car();
        scene.samples = 1;
        scene.extent = RoadExtent::new(0.0, 24.0, -60.0, 90.0).unwrap();
        scene.agents = vec![Agent {
            id: 3,
            class_code: 1,
            waypoints: vec![Waypoint { t: 0.0, x: 12.0, y: -50.0 }],
        }];
        let run = render_observations(&scene).unwrap();
        assert_eq!(run.dropped_outside_view, 1);
        assert!(run.observations.is_empty());
    }

    #[test]
    fn waypoint_outside_extent_rejected() {
        let mut scene = SyntheticScene::single_car();
        scene.agents[0].waypoints[1].y = 200.0;
        assert!(matches!(
            render_observations(&scene),
            Err(SynthError::AgentOutsideExtent { identity: 1 })
        ));
    }

    #[test]
    fn bottom_center_bias_recorded_and_monotone() {
        let run = render_observations(&SyntheticScene::single_car()).unwrap();
        let rows = run.truth_of(1);
        assert_eq!(rows.len(), 40);
        let mut by_range: Vec<(f64, f64)> = rows.iter().map(|t| (t.range_m, t.along_error_m.unwrap())).collect();
        by_range.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in by_range.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-9, "{w:?}");
        }
        // the contact lands on the near footprint edge, half a car length back
        assert!((by_range[0].1 + 2.25).abs() < 0.05, "{:?}", by_range[0]);
    }

    #[test]
    fn noise_is_seeded() {
        let mut scene = SyntheticScene::single_car();
        scene.noise_px = 1.0;
        scene.seed = 7;
        let a = render_observations(&scene).unwrap().annotation_text();
        let b = render_observations(&scene).unwrap().annotation_text();
        assert_eq!(a, b);
        scene.seed = 8;
        assert_ne!(a, render_observations(&scene).unwrap().annotation_text());
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = SyntheticScene::mixed_traffic();
        let back = SyntheticScene::from_json(&scene.to_json()).unwrap();
        assert_eq!(scene, back);
        assert!(SyntheticScene::from_json(r#"{"camera": 1}"#).is_err());
    }

    #[test]
    fn background_colors_follow_the_ray() {
        let mut scene = SyntheticScene::single_car();
        scene.camera.image_size = [192, 108];
        scene.camera.principal_point = [96.0, 54.0];
        scene.camera.focal_px = 140.0;
        scene.checkerboard_m = Some(3.0);
        let img = render_background(&scene);
        let g = GroundPoint::new(1.5, 1.5);
        let p = scene.camera.project([g.x, g.y, 0.0]).unwrap();
        assert_eq!(*img.get_pixel(p.u as u32, p.v as u32), CHECK_DARK);
        let p = scene.camera.project([4.5, 1.5, 0.0]).unwrap();
        assert_eq!(*img.get_pixel(p.u as u32, p.v as u32), CHECK_LIGHT);
    }
}
