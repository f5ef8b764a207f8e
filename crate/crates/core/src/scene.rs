//! Oriented metric cuboids built from track points and class priors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trajectory::{speed_summary, Track, TrackPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Truck,
    Bus,
    Generic,
}

impl VehicleClass {
    pub fn name(&self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Truck => "truck",
            VehicleClass::Bus => "bus",
            VehicleClass::Generic => "generic",
        }
    }

    /// Annotation class code → class. Unknown codes fall back to `Generic`.
    pub fn from_code(code: i32) -> Self {
        match code {
            1 => VehicleClass::Car,
            2 => VehicleClass::Truck,
            3 => VehicleClass::Bus,
            _ => VehicleClass::Generic,
        }
    }
}

/// Length, width and height in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionPrior {
    pub class: VehicleClass,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

pub fn dimension_prior(code: i32) -> DimensionPrior {
    let class = VehicleClass::from_code(code);
    let (length, width, height) = match class {
        VehicleClass::Car => (4.5, 1.8, 1.5),
        VehicleClass::Truck => (8.0, 2.5, 3.0),
        VehicleClass::Bus => (12.0, 2.6, 3.2),
        VehicleClass::Generic => (4.5, 1.8, 1.5),
    };
    DimensionPrior {
        class,
        length,
        width,
        height,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cuboid {
    pub identity: u32,
    pub class: VehicleClass,
    /// `[x, y, h / 2]`.
    pub center: [f64; 3],
    /// `[length, width, height]`.
    pub dims: [f64; 3],
    pub yaw: f64,
}

/// Places a cuboid on the track point. Yaw is the regularized heading when
/// there is one, otherwise `road_axis`.
pub fn make_cuboid(identity: u32, point: &TrackPoint, category: i32, road_axis: f64) -> Cuboid {
    let prior = dimension_prior(category);
    Cuboid {
        identity,
        class: prior.class,
        center: [point.ground.x, point.ground.y, prior.height / 2.0],
        dims: [prior.length, prior.width, prior.height],
        yaw: point.heading.unwrap_or(road_axis),
    }
}

impl Cuboid {
    /// Bottom face counter-clockwise (seen from above) starting front-left,
    /// then the top face in the same order.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let [l, w, h] = self.dims;
        let (s, c) = self.yaw.sin_cos();
        let footprint = [(l / 2.0, w / 2.0), (-l / 2.0, w / 2.0), (-l / 2.0, -w / 2.0), (l / 2.0, -w / 2.0)];
        let mut out = [[0.0; 3]; 8];
        for (k, &(a, b)) in footprint.iter().enumerate() {
            let x = self.center[0] + a * c - b * s;
            let y = self.center[1] + a * s + b * c;
            out[k] = [x, y, 0.0];
            out[k + 4] = [x, y, h];
        }
        out
    }

    /// The 12 edges as index pairs into [`Cuboid::corners`].
    pub const EDGES: [(usize, usize); 12] = [
        (0, 1),
        (1, 2),
        (2, 3),
        (3, 0),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 4),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];
}

pub fn cuboid_corners(c: &Cuboid) -> [[f64; 3]; 8] {
    c.corners()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneFrame {
    pub sample_index: u32,
    pub source_frame: u32,
    pub time: f64,
    pub cuboids: Vec<Cuboid>,
}

/// One frame per sample index present in any track, in sample order; cuboids
/// within a frame are ordered by identity.
pub fn assemble_frames(tracks: &[Track], road_axis: f64) -> Vec<SceneFrame> {
    let mut frames: BTreeMap<u32, SceneFrame> = BTreeMap::new();
    for t in tracks {
        for p in &t.points {
            let frame = frames.entry(p.sample_index).or_insert_with(|| SceneFrame {
                sample_index: p.sample_index,
                source_frame: p.source_frame,
                time: p.time,
                cuboids: Vec::new(),
            });
            frame.cuboids.push(make_cuboid(t.identity, p, t.category, road_axis));
        }
    }
    let mut out: Vec<SceneFrame> = frames.into_values().collect();
    for f in &mut out {
        f.cuboids.sort_by_key(|c| c.identity);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSummary {
    pub frames: usize,
    pub tracks: usize,
    pub cuboids: usize,
    pub mean_points_per_track: f64,
    pub mean_speed_mps: Option<f64>,
}

impl SceneSummary {
    /// `rendered_frames` is the sampled frame count, which may exceed the
    /// number of frames carrying cuboids.
    pub fn new(rendered_frames: usize, tracks: &[Track], frames: &[SceneFrame]) -> Self {
        let cuboids: usize = frames.iter().map(|f| f.cuboids.len()).sum();
        let mean_points_per_track = if tracks.is_empty() {
            0.0
        } else {
            tracks.iter().map(Track::len).sum::<usize>() as f64 / tracks.len() as f64
        };
        Self {
            frames: rendered_frames,
            tracks: tracks.len(),
            cuboids,
            mean_points_per_track,
            mean_speed_mps: speed_summary(tracks).per_track_mean_mps,
        }
    }
}

#[derive(Serialize)]
struct CuboidRecord {
    id: u32,
    class: &'static str,
    center: [f64; 3],
    dims: [f64; 3],
    yaw_rad: f64,
}

#[derive(Serialize)]
struct FrameRecord {
    sample_index: u32,
    source_frame: u32,
    time_s: f64,
    cuboids: Vec<CuboidRecord>,
}

#[derive(Serialize)]
struct SceneDocument<'a> {
    frames: Vec<FrameRecord>,
    summary: &'a SceneSummary,
}

/// Scene export: `frames` plus a `summary` block.
pub fn scene_to_json(frames: &[SceneFrame], summary: &SceneSummary) -> String {
    let doc = SceneDocument {
        frames: frames
            .iter()
            .map(|f| FrameRecord {
                sample_index: f.sample_index,
                source_frame: f.source_frame,
                time_s: f.time,
                cuboids: f
                    .cuboids
                    .iter()
                    .map(|c| CuboidRecord {
                        id: c.identity,
                        class: c.class.name(),
                        center: c.center,
                        dims: c.dims,
                        yaw_rad: c.yaw,
                    })
                    .collect(),
            })
            .collect(),
        summary,
    };
    serde_json::to_string_pretty(&doc).expect("scene serializes")
}
