//! Ground-contact projection, per-identity tracks and their kinematics.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::CalibrationProfile;
use crate::geometry::{GeometryError, GroundPoint, ImagePoint};
use crate::ingest::{Corners, JoinedObservation, Observation};

pub const DEFAULT_FPS: f64 = 30.0;
pub const DEFAULT_HEADING_THRESHOLD_DEG: f64 = 30.0;
/// +y of the ground frame, i.e. along the road.
pub const DEFAULT_ROAD_AXIS: f64 = FRAC_PI_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("identity {identity} has two observations on sample {sample_index}")]
    DuplicateFramePerIdentity { identity: u32, sample_index: u32 },
    #[error("identity {identity}: coincident timestamps at t = {time}")]
    ZeroTimeSpan { identity: u32, time: f64 },
    #[error("invalid time base: {0}")]
    InvalidTimeBase(String),
}

impl TrajectoryError {
    pub fn code(&self) -> &'static str {
        match self {
            TrajectoryError::DuplicateFramePerIdentity { .. } => "DuplicateFramePerIdentity",
            TrajectoryError::ZeroTimeSpan { .. } => "ZeroTimeSpan",
            TrajectoryError::InvalidTimeBase(_) => "InvalidTimeBase",
        }
    }
}

/// Source frame rate and sampling interval. Consecutive samples are
/// `step / fps` seconds apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeBase {
    pub fps: f64,
    pub step: u32,
}

impl TimeBase {
    pub fn new(fps: f64, step: u32) -> Result<Self, TrajectoryError> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(TrajectoryError::InvalidTimeBase(format!("fps must be positive, got {fps}")));
        }
        if step < 1 {
            return Err(TrajectoryError::InvalidTimeBase("step must be >= 1".into()));
        }
        Ok(Self { fps, step })
    }

    pub fn sample_interval(&self) -> f64 {
        self.step as f64 / self.fps
    }

    pub fn time_of(&self, source_frame: u32, first_source_frame: u32) -> f64 {
        (source_frame as f64 - first_source_frame as f64) / self.fps
    }
}

/// Bottom center of the box: `((x1 + x2) / 2, y2)`.
pub fn ground_contact(c: &Corners) -> ImagePoint {
    ImagePoint::new((c.x1 + c.x2) / 2.0, c.y2)
}

pub fn project_observation(obs: &Observation, profile: &CalibrationProfile) -> Result<GroundPoint, GeometryError> {
    profile.image_to_ground(ground_contact(&obs.corners()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectedObservation {
    pub sample_index: u32,
    pub source_frame: u32,
    pub identity: u32,
    pub category: i32,
    pub ground: GroundPoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub projected: usize,
    /// Observations whose contact point maps to the line at infinity.
    pub dropped_at_infinity: usize,
}

/// Projects every joined observation, dropping (and counting) those whose
/// contact point cannot be mapped.
pub fn project_all(
    joined: &[JoinedObservation],
    profile: &CalibrationProfile,
) -> (Vec<ProjectedObservation>, ProjectionReport) {
    let mut report = ProjectionReport::default();
    let mut out = Vec::with_capacity(joined.len());
    for j in joined {
        match project_observation(&j.observation, profile) {
            Ok(ground) => out.push(ProjectedObservation {
                sample_index: j.sample_index,
                source_frame: j.observation.source_frame,
                identity: j.observation.identity,
                category: j.observation.category,
                ground,
            }),
            Err(e) => {
                log::debug!(
                    "dropping id {} on frame {}: {e}",
                    j.observation.identity,
                    j.observation.source_frame
                );
                report.dropped_at_infinity += 1;
            }
        }
    }
    report.projected = out.len();
    (out, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackPoint {
    pub sample_index: u32,
    pub source_frame: u32,
    pub time: f64,
    pub ground: GroundPoint,
    pub velocity: Option<(f64, f64)>,
    pub speed: Option<f64>,
    pub heading_raw: Option<f64>,
    pub heading: Option<f64>,
}

impl TrackPoint {
    pub fn new(sample_index: u32, source_frame: u32, time: f64, ground: GroundPoint) -> Self {
        Self {
            sample_index,
            source_frame,
            time,
            ground,
            velocity: None,
            speed: None,
            heading_raw: None,
            heading: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    pub identity: u32,
    /// Class code of the first observation.
    pub category: i32,
    pub points: Vec<TrackPoint>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_speed(&self) -> Option<f64> {
        let speeds: Vec<f64> = self.points.iter().filter_map(|p| p.speed).collect();
        (!speeds.is_empty()).then(|| speeds.iter().sum::<f64>() / speeds.len() as f64)
    }
}

/// Groups projected observations by identity, sorted by sample index.
/// Times are measured from `first_source_frame`. Tracks come out ordered by
/// identity.
pub fn build_tracks(
    projected: &[ProjectedObservation],
    time_base: &TimeBase,
    first_source_frame: u32,
) -> Result<Vec<Track>, TrajectoryError> {
    let mut groups: BTreeMap<u32, Vec<&ProjectedObservation>> = BTreeMap::new();
    for p in projected {
        groups.entry(p.identity).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(identity, mut obs)| {
            obs.sort_by_key(|o| o.sample_index);
            if let Some(w) = obs.windows(2).find(|w| w[0].sample_index == w[1].sample_index) {
                return Err(TrajectoryError::DuplicateFramePerIdentity {
                    identity,
                    sample_index: w[0].sample_index,
                });
            }
            let points = obs
                .iter()
                .map(|o| {
                    TrackPoint::new(
                        o.sample_index,
                        o.source_frame,
                        time_base.time_of(o.source_frame, first_source_frame),
                        o.ground,
                    )
                })
                .collect();
            Ok(Track {
                identity,
                category: obs[0].category,
                points,
            })
        })
        .collect()
}

/// Fills velocity, speed and raw heading. Interior points use the central
/// difference, endpoints the one-sided difference; single-point tracks are
/// left without kinematics.
pub fn estimate_kinematics(track: &mut Track) -> Result<(), TrajectoryError> {
    let n = track.points.len();
    if n < 2 {
        return Ok(());
    }
    let identity = track.identity;
    if let Some(w) = track.points.windows(2).find(|w| !(w[1].time > w[0].time)) {
        return Err(TrajectoryError::ZeroTimeSpan {
            identity,
            time: w[1].time,
        });
    }
    let snapshot: Vec<(f64, GroundPoint)> = track.points.iter().map(|p| (p.time, p.ground)).collect();
    for (i, point) in track.points.iter_mut().enumerate() {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == n - 1 => (n - 2, n - 1),
            i => (i - 1, i + 1),
        };
        let (ta, ga) = snapshot[a];
        let (tb, gb) = snapshot[b];
        let dt = tb - ta;
        let v = ((gb.x - ga.x) / dt, (gb.y - ga.y) / dt);
        point.velocity = Some(v);
        point.speed = Some(v.0.hypot(v.1));
        point.heading_raw = Some(v.1.atan2(v.0));
    }
    Ok(())
}

/// Wraps an angle into `[-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI && a > 0.0 {
        PI
    } else {
        r
    }
}

/// Snaps `heading_raw` to the road axis (either direction) when it lies
/// strictly within `threshold` of it.
pub fn regularize_heading(heading_raw: f64, road_axis: f64, threshold: f64) -> f64 {
    let forward = wrap_angle(heading_raw - road_axis).abs();
    let backward = wrap_angle(heading_raw - (road_axis + PI)).abs();
    if forward <= backward {
        if forward < threshold {
            return road_axis;
        }
    } else if backward < threshold {
        return road_axis + PI;
    }
    heading_raw
}

/// Applies [`regularize_heading`] to every point that has a raw heading.
pub fn regularize_track(track: &mut Track, road_axis: f64, threshold: f64) {
    for p in &mut track.points {
        p.heading = p.heading_raw.map(|h| regularize_heading(h, road_axis, threshold));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedSummary {
    /// Mean over tracks (≥ 2 points) of each track's mean point speed.
    pub per_track_mean_mps: Option<f64>,
    /// Mean over all points carrying a speed.
    pub pooled_mean_mps: Option<f64>,
    pub tracks_with_kinematics: usize,
}

pub fn speed_summary(tracks: &[Track]) -> SpeedSummary {
    let per_track: Vec<f64> = tracks
        .iter()
        .filter(|t| t.len() >= 2)
        .filter_map(Track::mean_speed)
        .collect();
    let pooled: Vec<f64> = tracks
        .iter()
        .flat_map(|t| t.points.iter().filter_map(|p| p.speed))
        .collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    SpeedSummary {
        per_track_mean_mps: mean(&per_track),
        pooled_mean_mps: mean(&pooled),
        tracks_with_kinematics: per_track.len(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with header
/// `identity,sample_index,source_frame,time_s,x_m,y_m,vx_mps,vy_mps,speed_mps,heading_rad`.
/// `heading_rad` is the regularized heading when present, else the raw one.
pub fn tracks_to_csv(tracks: &[Track]) -> String {
    let mut s = String::from("identity,sample_index,source_frame,time_s,x_m,y_m,vx_mps,vy_mps,speed_mps,heading_rad\n");
    for t in tracks {
        for p in &t.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                t.identity,
                p.sample_index,
                p.source_frame,
                p.time,
                p.ground.x,
                p.ground.y,
                opt(p.velocity.map(|v| v.0)),
                opt(p.velocity.map(|v| v.1)),
                opt(p.speed),
                opt(p.heading.or(p.heading_raw)),
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::RoadExtent;
    use crate::geometry::{Direction, Homography};
    use crate::ingest::parse_row;

    fn track(points: &[(f64, f64, f64)]) -> Track {
        Track {
            identity: 1,
            category: 1,
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(t, x, y))| TrackPoint::new(i as u32 + 1, i as u32 + 1, t, GroundPoint::new(x, y)))
                .collect(),
        }
    }

    #[test]
    fn contact_point() {
        let c = Corners { x1: 100.0, y1: 50.0, x2: 140.0, y2: 70.0 };
        assert_eq!(ground_contact(&c), ImagePoint::new(120.0, 70.0));
        let thin = Corners { x1: 10.0, y1: 10.0, x2: 10.5, y2: 30.0 };
        assert_eq!(ground_contact(&thin), ImagePoint::new(10.25, 30.0));
        let o = parse_row("1,3,100,50,40,20,1", 1).unwrap();
        assert_eq!(ground_contact(&o.corners()), ImagePoint::new(120.0, 70.0));
    }

    fn profile(rows: [f64; 9]) -> CalibrationProfile {
        CalibrationProfile::from_parts(
            Vec::new(),
            Homography::from_row_slice(&rows, Direction::ImageToGround).unwrap(),
            RoadExtent::new(0.0, 1000.0, 0.0, 1000.0).unwrap(),
            "ref".into(),
        )
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        let o = parse_row("1,3,100,50,40,20,1", 1).unwrap();
        let id = profile([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let g = project_observation(&o, &id).unwrap();
        assert!(g.distance(&GroundPoint::new(120.0, 70.0)) < 1e-12);
        let scale = profile([0.1, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 1.0]);
        let g = project_observation(&o, &scale).unwrap();
        assert!(g.distance(&GroundPoint::new(12.0, 7.0)) < 1e-12);
    }

    #[test]
    fn projection_drops_points_at_infinity() {
        let horizon = profile([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -70.0]);
        let o = parse_row("1,3,100,50,40,20,1", 1).unwrap();
        let j = JoinedObservation { sample_index: 1, observation: o };
        let (out, report) = project_all(&[j], &horizon);
        assert!(out.is_empty());
        assert_eq!(report.dropped_at_infinity, 1);
    }

    fn projected(id: u32, sample: u32) -> ProjectedObservation {
        ProjectedObservation {
            sample_index: sample,
            source_frame: 1 + 5 * (sample - 1),
            identity: id,
            category: 1,
            ground: GroundPoint::new(0.0, sample as f64),
        }
    }

    #[test]
    fn grouping() {
        let tb = TimeBase::new(30.0, 5).unwrap();
        let tracks = build_tracks(&[projected(3, 2), projected(7, 1), projected(3, 1)], &tb, 1).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!((tracks[0].identity, tracks[0].len()), (3, 2));
        assert_eq!((tracks[1].identity, tracks[1].len()), (7, 1));
        assert_eq!(tracks[0].points[0].sample_index, 1);
        assert!((tracks[0].points[1].time - 5.0 / 30.0).abs() < 1e-15);
        assert!(build_tracks(&[], &tb, 1).unwrap().is_empty());
        let dup = build_tracks(&[projected(3, 2), projected(3, 2)], &tb, 1);
        assert_eq!(
            dup,
            Err(TrajectoryError::DuplicateFramePerIdentity { identity: 3, sample_index: 2 })
        );
    }

    #[test]
    fn constant_velocity() {
        let mut t = track(&[(0.0, 0.0, 0.0), (1.0, 2.0, 0.0), (2.0, 4.0, 0.0)]);
        estimate_kinematics(&mut t).unwrap();
        for p in &t.points {
            assert_eq!(p.velocity, Some((2.0, 0.0)));
            assert_eq!(p.speed, Some(2.0));
            assert_eq!(p.heading_raw, Some(0.0));
        }
    }

    #[test]
    fn two_point_track() {
        let mut t = track(&[(0.0, 0.0, 0.0), (1.0, 0.0, 3.0)]);
        estimate_kinematics(&mut t).unwrap();
        for p in &t.points {
            assert_eq!(p.velocity, Some((0.0, 3.0)));
            assert_eq!(p.speed, Some(3.0));
            assert!((p.heading_raw.unwrap() - FRAC_PI_2).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_path() {
        // x(t) = t²: forward at 0 -> 1, central at 1 -> 2, backward at 2 -> 3
        let mut t = track(&[(0.0, 0.0, 0.0), (1.0, 1.0, 0.0), (2.0, 4.0, 0.0)]);
        estimate_kinematics(&mut t).unwrap();
        let vx: Vec<f64> = t.points.iter().map(|p| p.velocity.unwrap().0).collect();
        assert_eq!(vx, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_point_has_no_kinematics() {
        let mut t = track(&[(0.0, 1.0, 1.0)]);
        estimate_kinematics(&mut t).unwrap();
        assert_eq!(t.points[0].velocity, None);
        assert_eq!(t.mean_speed(), None);
    }

    #[test]
    fn coincident_times_rejected() {
        let mut t = track(&[(0.0, 0.0, 0.0), (0.0, 1.0, 0.0)]);
        assert!(matches!(estimate_kinematics(&mut t), Err(TrajectoryError::ZeroTimeSpan { .. })));
    }

    #[test]
    fn heading_regularization_examples() {
        let d = f64::to_radians;
        let th = d(30.0);
        assert!((regularize_heading(d(80.0), d(90.0), th) - d(90.0)).abs() < 1e-12);
        assert_eq!(regularize_heading(d(40.0), d(90.0), th), d(40.0));
        assert!((regularize_heading(d(265.0), d(90.0), th) - d(270.0)).abs() < 1e-12);
        // atan2 range input on the opposite side
        assert!((regularize_heading(d(-95.0), d(90.0), th) - d(270.0)).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-7.0 * PI) - -PI).abs() < 1e-12 || (wrap_angle(-7.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn speed_summary_ignores_single_point_tracks() {
        let mut a = track(&[(0.0, 0.0, 0.0), (1.0, 0.0, 2.0)]);
        let mut b = track(&[(0.0, 0.0, 0.0), (1.0, 0.0, 4.0), (2.0, 0.0, 8.0)]);
        let c = track(&[(0.0, 5.0, 5.0)]);
        estimate_kinematics(&mut a).unwrap();
        estimate_kinematics(&mut b).unwrap();
        let s = speed_summary(&[a, b, c]);
        // a: 2, 2; b: 4, 4, 4
        assert_eq!(s.tracks_with_kinematics, 2);
        assert!((s.per_track_mean_mps.unwrap() - 3.0).abs() < 1e-12);
        assert!((s.pooled_mean_mps.unwrap() - 3.2).abs() < 1e-12);
    }

    #[test]
    fn csv_leaves_missing_kinematics_empty() {
        let t = track(&[(0.0, 1.0, 2.0)]);
        let csv = tracks_to_csv(&[t]);
        assert_eq!(
            csv,
            "identity,sample_index,source_frame,time_s,x_m,y_m,vx_mps,vy_mps,speed_mps,heading_rad\n1,1,1,0,1,2,,,,\n"
        );
    }
}
