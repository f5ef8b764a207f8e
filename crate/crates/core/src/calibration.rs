//! Correspondence sets, calibration profiles and their validation geometry.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    estimate_homography, Direction, GeometryError, GroundPoint, Homography, ImagePoint,
};

pub const PROFILE_VERSION: u32 = 1;

/// Cached homographies differing from the re-fit by more than this are replaced.
pub const CACHE_MISMATCH_TOLERANCE: f64 = 1e-6;

/// Maximum ground-space step between consecutive grid samples.
pub const GRID_SAMPLE_STEP_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("duplicate correspondence label {0:?}")]
    DuplicateLabel(String),
    #[error("invalid extent: {0}")]
    InvalidExtent(String),
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("perturbation must be positive and finite, got {0}")]
    InvalidPerturbation(f64),
    #[error("unsupported profile version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed profile: {0}")]
    Malformed(String),
}

impl CalibrationError {
    pub fn code(&self) -> &'static str {
        match self {
            CalibrationError::Geometry(g) => g.code(),
            CalibrationError::DuplicateLabel(_) => "DuplicateLabel",
            CalibrationError::InvalidExtent(_) => "InvalidExtent",
            CalibrationError::InvalidSpacing(_) => "InvalidSpacing",
            CalibrationError::InvalidPerturbation(_) => "InvalidPerturbation",
            CalibrationError::UnsupportedVersion(_) => "UnsupportedVersion",
            CalibrationError::Malformed(_) => "MalformedProfile",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub image: ImagePoint,
    pub ground: GroundPoint,
    /// Only active correspondences enter the fit; the rest are visual checks.
    pub active: bool,
    pub label: String,
}

impl Correspondence {
    pub fn new(label: impl Into<String>, image: ImagePoint, ground: GroundPoint, active: bool) -> Self {
        Self {
            image,
            ground,
            active,
            label: label.into(),
        }
    }
}

/// Axis-aligned metric window on the road plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for RoadExtent {
    /// 24 m across the road, 90 m along it.
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 24.0,
            y_min: 0.0,
            y_max: 90.0,
        }
    }
}

impl RoadExtent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, CalibrationError> {
        let e = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let all_finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(CalibrationError::InvalidExtent("non-finite bound".into()));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(CalibrationError::InvalidExtent(format!(
                "x [{}, {}], y [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn length(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: GroundPoint) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Corners in the order near-left, near-right, far-right, far-left.
    pub fn corners(&self) -> [GroundPoint; 4] {
        [
            GroundPoint::new(self.x_min, self.y_min),
            GroundPoint::new(self.x_max, self.y_min),
            GroundPoint::new(self.x_max, self.y_max),
            GroundPoint::new(self.x_min, self.y_max),
        ]
    }
}

/// Multiples of `spacing` inside the closed interval `[lo, hi]`.
pub(crate) fn multiples_in(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let eps = 1e-9;
    let first = (lo / spacing - eps).ceil() as i64;
    let last = (hi / spacing + eps).floor() as i64;
    (first..=last).map(|k| k as f64 * spacing).collect()
}

/// A fitted calibration: the correspondences it came from, the image → ground
/// map, and the metric window it is meant to cover.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProfile {
    correspondences: Vec<Correspondence>,
    homography: Homography,
    inverse: Homography,
    /// Sign of the ground → image divisor for points in front of the camera.
    front_sign: f64,
    pub extent: RoadExtent,
    pub reference_frame: String,
    pub created: Option<String>,
    pub modified: Option<String>,
}

/// Fits a profile from the active correspondences.
pub fn build_profile(
    correspondences: Vec<Correspondence>,
    extent: RoadExtent,
    reference_frame: impl Into<String>,
) -> Result<CalibrationProfile, CalibrationError> {
    extent.validate()?;
    let mut seen = HashSet::new();
    for c in &correspondences {
        if !seen.insert(c.label.as_str()) {
            return Err(CalibrationError::DuplicateLabel(c.label.clone()));
        }
    }
    let pairs: Vec<(ImagePoint, GroundPoint)> = correspondences
        .iter()
        .filter(|c| c.active)
        .map(|c| (c.image, c.ground))
        .collect();
    let homography = estimate_homography(&pairs)?;
    CalibrationProfile::from_parts(correspondences, homography, extent, reference_frame.into())
}

impl CalibrationProfile {
    /// Wraps an already-known image → ground map. Used for analytic and
    /// hand-constructed profiles; [`build_profile`] is the fitting path.
    pub fn from_parts(
        correspondences: Vec<Correspondence>,
        homography: Homography,
        extent: RoadExtent,
        reference_frame: String,
    ) -> Result<Self, CalibrationError> {
        extent.validate()?;
        if homography.direction() != Direction::ImageToGround {
            return Err(CalibrationError::Malformed(
                "profile homography must map image to ground".into(),
            ));
        }
        let inverse = homography.inverse()?;
        // Reference for the visible side of the horizon: the active points if
        // present, else the extent center.
        let anchors: Vec<GroundPoint> = {
            let active: Vec<_> = correspondences.iter().filter(|c| c.active).map(|c| c.ground).collect();
            if active.is_empty() {
                vec![GroundPoint::new(
                    (extent.x_min + extent.x_max) / 2.0,
                    (extent.y_min + extent.y_max) / 2.0,
                )]
            } else {
                active
            }
        };
        let w_sum: f64 = anchors
            .iter()
            .filter_map(|g| inverse.apply_with_w::<_, ImagePoint>(*g).ok().map(|(_, w)| w))
            .sum();
        let front_sign = if w_sum < 0.0 { -1.0 } else { 1.0 };
        Ok(Self {
            correspondences,
            homography,
            inverse,
            front_sign,
            extent,
            reference_frame,
            created: None,
            modified: None,
        })
    }

    pub fn correspondences(&self) -> &[Correspondence] {
        &self.correspondences
    }

    pub fn active(&self) -> impl Iterator<Item = &Correspondence> {
        self.correspondences.iter().filter(|c| c.active)
    }

    /// Image → ground.
    pub fn homography(&self) -> &Homography {
        &self.homography
    }

    /// Ground → image.
    pub fn inverse(&self) -> &Homography {
        &self.inverse
    }

    pub fn image_to_ground(&self, p: ImagePoint) -> Result<GroundPoint, GeometryError> {
        self.homography.apply(p)
    }

    /// Ground → image, additionally rejecting ground points that lie beyond
    /// the horizon (they would otherwise land mirrored in the image).
    pub fn ground_to_image(&self, g: GroundPoint) -> Result<ImagePoint, GeometryError> {
        let (p, w) = self.inverse.apply_with_w(g)?;
        if w * self.front_sign <= 0.0 {
            return Err(GeometryError::PointAtInfinity { w });
        }
        Ok(p)
    }

    pub fn to_document(&self) -> ProfileDocument {
        ProfileDocument {
            version: PROFILE_VERSION,
            reference_frame: self.reference_frame.clone(),
            extent: self.extent,
            points: self.correspondences.iter().map(PointRecord::from).collect(),
            homography: Some(self.homography.to_row_array()),
            created: self.created.clone(),
            modified: self.modified.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("profile serializes")
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub label: String,
    pub image: [f64; 2],
    pub ground: [f64; 2],
    pub active: bool,
}

impl From<&Correspondence> for PointRecord {
    fn from(c: &Correspondence) -> Self {
        Self {
            label: c.label.clone(),
            image: [c.image.u, c.image.v],
            ground: [c.ground.x, c.ground.y],
            active: c.active,
        }
    }
}

impl From<&PointRecord> for Correspondence {
    fn from(p: &PointRecord) -> Self {
        Correspondence::new(
            p.label.clone(),
            ImagePoint::new(p.image[0], p.image[1]),
            GroundPoint::new(p.ground[0], p.ground[1]),
            p.active,
        )
    }
}

/// On-disk calibration profile (`version` 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub version: u32,
    pub reference_frame: String,
    pub extent: RoadExtent,
    pub points: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homography: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified: Option<String>,
}

/// A loaded profile plus anything noteworthy found while loading it.
#[derive(Debug, Clone)]
pub struct LoadedProfile {
    pub profile: CalibrationProfile,
    pub warnings: Vec<String>,
}

impl ProfileDocument {
    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let doc: ProfileDocument =
            serde_json::from_str(text).map_err(|e| CalibrationError::Malformed(e.to_string()))?;
        if doc.version != PROFILE_VERSION {
            return Err(CalibrationError::UnsupportedVersion(doc.version));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn correspondences(&self) -> Vec<Correspondence> {
        self.points.iter().map(Correspondence::from).collect()
    }

    /// Checks everything except fittability.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.version != PROFILE_VERSION {
            return Err(CalibrationError::UnsupportedVersion(self.version));
        }
        self.extent.validate()?;
        let mut seen = HashSet::new();
        for p in &self.points {
            if !seen.insert(p.label.as_str()) {
                return Err(CalibrationError::DuplicateLabel(p.label.clone()));
            }
            if p.image.iter().chain(p.ground.iter()).any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite.into());
            }
        }
        Ok(())
    }

    /// Re-fits the homography from the active points. A cached matrix that
    /// disagrees with the fit by more than [`CACHE_MISMATCH_TOLERANCE`]
    /// produces a warning and is discarded.
    pub fn into_profile(self) -> Result<LoadedProfile, CalibrationError> {
        self.validate()?;
        let mut profile = build_profile(self.correspondences(), self.extent, self.reference_frame.clone())?;
        profile.created = self.created.clone();
        profile.modified = self.modified.clone();
        let mut warnings = Vec::new();
        if let Some(cached) = self.homography {
            match Homography::from_row_slice(&cached, Direction::ImageToGround) {
                Ok(h) => {
                    let diff = h.max_entry_difference(profile.homography());
                    if diff > CACHE_MISMATCH_TOLERANCE {
                        warnings.push(format!(
                            "cached homography differs from re-fit by {diff:.3e}; using re-fit"
                        ));
                    }
                }
                Err(e) => warnings.push(format!("cached homography unusable ({e}); using re-fit")),
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(LoadedProfile { profile, warnings })
    }
}

pub fn load_profile_json(text: &str) -> Result<LoadedProfile, CalibrationError> {
    ProfileDocument::from_json(text)?.into_profile()
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointError {
    pub label: String,
    pub active: bool,
    /// ‖H·image − ground‖ in meters; `None` when the image point maps to infinity.
    pub ground_error_m: Option<f64>,
    /// ‖H⁻¹·ground − image‖ in pixels; `None` when unreachable.
    pub image_error_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReprojectionReport {
    pub points: Vec<PointError>,
    pub rms_active_m: f64,
    pub rms_active_px: f64,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn reprojection_report(profile: &CalibrationProfile) -> ReprojectionReport {
    let points: Vec<PointError> = profile
        .correspondences()
        .iter()
        .map(|c| PointError {
            label: c.label.clone(),
            active: c.active,
            ground_error_m: profile.image_to_ground(c.image).ok().map(|g| g.distance(&c.ground)),
            image_error_px: profile.ground_to_image(c.ground).ok().map(|i| i.distance(&c.image)),
        })
        .collect();
    let active = || points.iter().filter(|p| p.active);
    ReprojectionReport {
        rms_active_m: rms(active().filter_map(|p| p.ground_error_m)),
        rms_active_px: rms(active().filter_map(|p| p.image_error_px)),
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAxis {
    /// Line of constant x (runs along the road).
    X,
    /// Line of constant y (runs across the road).
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridLine {
    pub axis: GridAxis,
    pub value: f64,
    pub ground: Vec<GroundPoint>,
    /// Reprojection of each ground sample; `None` where it is unreachable.
    pub image: Vec<Option<ImagePoint>>,
}

impl GridLine {
    /// Reachable image samples only, in order.
    pub fn image_polyline(&self) -> Vec<ImagePoint> {
        self.image.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridGeometry {
    pub spacing: f64,
    pub lines: Vec<GridLine>,
    pub dropped_samples: usize,
}

fn sample_segment(a: GroundPoint, b: GroundPoint) -> Vec<GroundPoint> {
    let len = a.distance(&b);
    let n = ((len / GRID_SAMPLE_STEP_M).ceil() as usize).max(1);
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            GroundPoint::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
        })
        .collect()
}

/// Metric grid over the profile extent and its reprojection into the image.
pub fn grid_geometry(profile: &CalibrationProfile, spacing: f64) -> Result<GridGeometry, CalibrationError> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(CalibrationError::InvalidSpacing(spacing));
    }
    let e = profile.extent;
    let mut lines = Vec::new();
    for x in multiples_in(e.x_min, e.x_max, spacing) {
        lines.push((GridAxis::X, x, GroundPoint::new(x, e.y_min), GroundPoint::new(x, e.y_max)));
    }
    for y in multiples_in(e.y_min, e.y_max, spacing) {
        lines.push((GridAxis::Y, y, GroundPoint::new(e.x_min, y), GroundPoint::new(e.x_max, y)));
    }
    let mut dropped = 0;
    let lines = lines
        .into_iter()
        .map(|(axis, value, a, b)| {
            let ground = sample_segment(a, b);
            let image: Vec<Option<ImagePoint>> =
                ground.iter().map(|g| profile.ground_to_image(*g).ok()).collect();
            dropped += image.iter().filter(|p| p.is_none()).count();
            GridLine {
                axis,
                value,
                ground,
                image,
            }
        })
        .collect();
    if dropped > 0 {
        log::warn!("{dropped} grid samples could not be reprojected");
    }
    Ok(GridGeometry {
        spacing,
        lines,
        dropped_samples: dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivitySite {
    pub ground: GroundPoint,
    /// Largest ground displacement among the four perturbations; `None` when
    /// the site or a perturbed image point cannot be mapped.
    pub displacement_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityField {
    pub perturb_px: f64,
    pub sample_spacing_m: f64,
    pub sites: Vec<SensitivitySite>,
}

impl SensitivityField {
    pub fn at(&self, x: f64, y: f64) -> Option<&SensitivitySite> {
        self.sites
            .iter()
            .find(|s| (s.ground.x - x).abs() < 1e-9 && (s.ground.y - y).abs() < 1e-9)
    }

    pub fn unreachable(&self) -> usize {
        self.sites.iter().filter(|s| s.displacement_m.is_none()).count()
    }
}

/// How far a ground position moves when its image point is nudged by
/// `perturb_px` along each image axis.
pub fn sensitivity_field(
    profile: &CalibrationProfile,
    perturb_px: f64,
    sample_spacing: f64,
) -> Result<SensitivityField, CalibrationError> {
    if !(perturb_px > 0.0 && perturb_px.is_finite()) {
        return Err(CalibrationError::InvalidPerturbation(perturb_px));
    }
    if !(sample_spacing > 0.0 && sample_spacing.is_finite()) {
        return Err(CalibrationError::InvalidSpacing(sample_spacing));
    }
    let e = profile.extent;
    let xs = multiples_in(e.x_min, e.x_max, sample_spacing);
    let ys = multiples_in(e.y_min, e.y_max, sample_spacing);
    let offsets = [(perturb_px, 0.0), (-perturb_px, 0.0), (0.0, perturb_px), (0.0, -perturb_px)];
    let mut sites = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let ground = GroundPoint::new(x, y);
            let displacement_m = profile.ground_to_image(ground).ok().and_then(|img| {
                offsets.iter().try_fold(0.0f64, |acc, &(du, dv)| {
                    let moved = ImagePoint::new(img.u + du, img.v + dv);
                    profile
                        .image_to_ground(moved)
                        .ok()
                        .map(|g| acc.max(g.distance(&ground)))
                })
            });
            sites.push(SensitivitySite { ground, displacement_m });
        }
    }
    Ok(SensitivityField {
        perturb_px,
        sample_spacing_m: sample_spacing,
        sites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_profile(extent: RoadExtent) -> CalibrationProfile {
        CalibrationProfile::from_parts(
            Vec::new(),
            Homography::identity(Direction::ImageToGround),
            extent,
            "ref".into(),
        )
        .unwrap()
    }

    /// Oblique quadrilateral mapped onto the default 24×90 rectangle.
    fn quad_points() -> Vec<Correspondence> {
        let img = [(420.0, 700.0), (900.0, 690.0), (700.0, 210.0), (560.0, 215.0)];
        RoadExtent::default()
            .corners()
            .iter()
            .zip(img.iter())
            .enumerate()
            .map(|(i, (g, &(u, v)))| Correspondence::new(format!("p{i}"), ImagePoint::new(u, v), *g, true))
            .collect()
    }

    #[test]
    fn four_active_points_fit_exactly() {
        let p = build_profile(quad_points(), RoadExtent::default(), "img000001.jpg").unwrap();
        let report = reprojection_report(&p);
        assert_eq!(report.points.len(), 4);
        for e in &report.points {
            assert!(e.ground_error_m.unwrap() < 1e-9, "{e:?}");
            assert!(e.image_error_px.unwrap() < 1e-9, "{e:?}");
        }
        assert!(report.rms_active_m < 1e-9);
    }

    #[test]
    fn inactive_points_do_not_enter_the_fit() {
        let base = build_profile(quad_points(), RoadExtent::default(), "f").unwrap();
        let mut pts = quad_points();
        pts.push(Correspondence::new("c1", ImagePoint::new(10.0, 10.0), GroundPoint::new(3.0, 3.0), false));
        pts.push(Correspondence::new("c2", ImagePoint::new(500.0, 400.0), GroundPoint::new(-8.0, 1.0), false));
        let with_checks = build_profile(pts, RoadExtent::default(), "f").unwrap();
        assert_eq!(base.homography().to_row_array(), with_checks.homography().to_row_array());
    }

    #[test]
    fn too_few_active_points() {
        let mut pts = quad_points();
        pts[3].active = false;
        let err = build_profile(pts, RoadExtent::default(), "f").unwrap_err();
        assert!(matches!(err, CalibrationError::Geometry(GeometryError::TooFewPoints(3))));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mut pts = quad_points();
        pts[1].label = "p0".into();
        let err = build_profile(pts, RoadExtent::default(), "f").unwrap_err();
        assert!(matches!(err, CalibrationError::DuplicateLabel(l) if l == "p0"));
    }

    #[test]
    fn check_point_offset_is_reported() {
        let base = build_profile(quad_points(), RoadExtent::default(), "f").unwrap();
        let truth = GroundPoint::new(8.0, 30.0);
        let img = base.ground_to_image(truth).unwrap();
        let mut pts = quad_points();
        pts.push(Correspondence::new("check", img, GroundPoint::new(8.5, 30.0), false));
        let p = build_profile(pts, RoadExtent::default(), "f").unwrap();
        let r = reprojection_report(&p);
        let check = r.points.iter().find(|e| e.label == "check").unwrap();
        assert!((check.ground_error_m.unwrap() - 0.5).abs() < 1e-9);
        assert!(r.rms_active_m < 1e-9);
    }

    #[test]
    fn grid_line_counts() {
        let p = identity_profile(RoadExtent::default());
        let grid = grid_geometry(&p, 5.0).unwrap();
        let xs = grid.lines.iter().filter(|l| l.axis == GridAxis::X).count();
        let ys = grid.lines.iter().filter(|l| l.axis == GridAxis::Y).count();
        assert_eq!((xs, ys), (5, 19));
        assert_eq!(grid.dropped_samples, 0);
        for line in &grid.lines {
            for w in line.ground.windows(2) {
                assert!(w[0].distance(&w[1]) <= GRID_SAMPLE_STEP_M + 1e-12);
            }
            for (g, i) in line.ground.iter().zip(line.image.iter()) {
                let i = i.unwrap();
                assert!((g.x - i.u).abs() < 1e-9 && (g.y - i.v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_spacing_and_perturbation() {
        let p = identity_profile(RoadExtent::default());
        assert!(matches!(grid_geometry(&p, 0.0), Err(CalibrationError::InvalidSpacing(_))));
        assert!(matches!(grid_geometry(&p, f64::NAN), Err(CalibrationError::InvalidSpacing(_))));
        assert!(matches!(
            sensitivity_field(&p, 0.0, 5.0),
            Err(CalibrationError::InvalidPerturbation(_))
        ));
    }

    #[test]
    fn identity_sensitivity_is_uniform() {
        let p = identity_profile(RoadExtent::default());
        let f = sensitivity_field(&p, 2.0, 5.0).unwrap();
        assert_eq!(f.sites.len(), 5 * 19);
        for s in &f.sites {
            assert!((s.displacement_m.unwrap() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn document_round_trip() {
        let p = build_profile(quad_points(), RoadExtent::default(), "img000001.jpg").unwrap();
        let json = p.to_json();
        let loaded = load_profile_json(&json).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.profile.homography(), p.homography());
        assert_eq!(loaded.profile.correspondences(), p.correspondences());
    }

    #[test]
    fn stale_cached_homography_warns() {
        let p = build_profile(quad_points(), RoadExtent::default(), "f").unwrap();
        let mut doc = p.to_document();
        let mut h = doc.homography.unwrap();
        h[2] += 1e-3;
        doc.homography = Some(h);
        let loaded = doc.into_profile().unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.profile.homography(), p.homography());
    }

    #[test]
    fn document_rejects_bad_input() {
        assert!(matches!(
            ProfileDocument::from_json("{\"version\": 2}"),
            Err(CalibrationError::Malformed(_))
        ));
        let p = build_profile(quad_points(), RoadExtent::default(), "f").unwrap();
        let json = p.to_json().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            ProfileDocument::from_json(&json),
            Err(CalibrationError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn multiples_are_closed_interval() {
        assert_eq!(multiples_in(0.0, 24.0, 5.0), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(multiples_in(0.0, 90.0, 5.0).len(), 19);
        assert_eq!(multiples_in(-3.0, 3.0, 2.0), vec![-2.0, 0.0, 2.0]);
    }
}
