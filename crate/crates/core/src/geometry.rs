//! Planar projective geometry: points, homographies, normalized DLT estimation.
//!
//! A [`Homography`] is always stored Frobenius-normalized with a fixed sign
//! convention, so two homographies describing the same map compare equal
//! entry-by-entry (up to rounding).

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold on the homogeneous divisor below which a mapped point is
/// treated as lying on the line at infinity.
pub const DEFAULT_EPSILON_W: f64 = 1e-9;

/// Ratio `σ8 / σ1` of the design matrix below which the DLT null space is
/// considered ambiguous.
pub const DEGENERACY_RATIO: f64 = 1e-8;

/// Smallest admissible `σ3 / σ1` of a stored homography matrix.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Entries with magnitude below this are treated as zero by the sign convention.
const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("at least 4 correspondences are required, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("point maps to infinity (|w| = {w:e})")]
    PointAtInfinity { w: f64 },
    #[error("homography matrix is singular")]
    SingularMatrix,
}

impl GeometryError {
    /// Stable machine-readable code, used in service error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            GeometryError::TooFewPoints(_) => "TooFewPoints",
            GeometryError::DegenerateConfiguration(_) => "DegenerateConfiguration",
            GeometryError::NonFinite => "NonFinite",
            GeometryError::PointAtInfinity { .. } => "PointAtInfinity",
            GeometryError::SingularMatrix => "SingularMatrix",
        }
    }
}

/// Pixel coordinates: `u` rightward, `v` downward. Pixel `(c, r)` covers
/// `[c, c+1) × [r, r+1)`, so its center sits at `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &ImagePoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Metric road-plane coordinates: `x` across the road, `y` along it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Anything a homography can act on. Both point types are plain 2-vectors.
pub trait PlanePoint: Copy {
    fn xy(&self) -> (f64, f64);
    fn from_xy(a: f64, b: f64) -> Self;
}

impl PlanePoint for ImagePoint {
    fn xy(&self) -> (f64, f64) {
        (self.u, self.v)
    }
    fn from_xy(a: f64, b: f64) -> Self {
        Self::new(a, b)
    }
}

impl PlanePoint for GroundPoint {
    fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }
    fn from_xy(a: f64, b: f64) -> Self {
        Self::new(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ImageToGround,
    GroundToImage,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::ImageToGround => Direction::GroundToImage,
            Direction::GroundToImage => Direction::ImageToGround,
        }
    }
}

/// A non-singular 3×3 projective map between the image and the road plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
    direction: Direction,
    epsilon_w: f64,
}

impl Homography {
    /// Builds a homography from an arbitrary-scale matrix, normalizing it and
    /// checking the rank condition.
    pub fn new(m: Matrix3<f64>, direction: Direction) -> Result<Self, GeometryError> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let m = normalize_matrix(&m).ok_or(GeometryError::SingularMatrix)?;
        let sv = m.singular_values();
        let (max, min) = (sv.max(), sv.min());
        if !(max > 0.0) || min / max < RANK_TOLERANCE {
            return Err(GeometryError::SingularMatrix);
        }
        Ok(Self {
            m,
            direction,
            epsilon_w: DEFAULT_EPSILON_W,
        })
    }

    /// Row-major constructor.
    pub fn from_row_slice(rows: &[f64; 9], direction: Direction) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_row_slice(rows), direction)
    }

    pub fn identity(direction: Direction) -> Self {
        Self::new(Matrix3::identity(), direction).expect("identity is non-singular")
    }

    pub fn with_epsilon_w(mut self, epsilon_w: f64) -> Self {
        self.epsilon_w = epsilon_w;
        self
    }

    pub fn epsilon_w(&self) -> f64 {
        self.epsilon_w
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Row-major entries.
    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Re-applies normalization. A no-op on any value produced by this type.
    pub fn normalized(&self) -> Self {
        Self {
            m: normalize_matrix(&self.m).unwrap_or(self.m),
            ..*self
        }
    }

    /// Maps `p` and returns the homogeneous divisor alongside the result.
    /// The divisor's sign tells which side of the horizon the input lies on.
    pub fn apply_with_w<P: PlanePoint, Q: PlanePoint>(&self, p: P) -> Result<(Q, f64), GeometryError> {
        let (a, b) = p.xy();
        if !(a.is_finite() && b.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let r = self.m * Vector3::new(a, b, 1.0);
        if r.z.abs() < self.epsilon_w {
            return Err(GeometryError::PointAtInfinity { w: r.z });
        }
        Ok((Q::from_xy(r.x / r.z, r.y / r.z), r.z))
    }

    pub fn apply<P: PlanePoint, Q: PlanePoint>(&self, p: P) -> Result<Q, GeometryError> {
        self.apply_with_w(p).map(|(q, _)| q)
    }

    /// Image → ground. Panics in debug builds if the direction tag disagrees.
    pub fn to_ground(&self, p: ImagePoint) -> Result<GroundPoint, GeometryError> {
        debug_assert_eq!(self.direction, Direction::ImageToGround);
        self.apply(p)
    }

    /// Ground → image. Panics in debug builds if the direction tag disagrees.
    pub fn to_image(&self, p: GroundPoint) -> Result<ImagePoint, GeometryError> {
        debug_assert_eq!(self.direction, Direction::GroundToImage);
        self.apply(p)
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.m.try_inverse().ok_or(GeometryError::SingularMatrix)?;
        Ok(Self::new(inv, self.direction.flipped())?.with_epsilon_w(self.epsilon_w))
    }

    /// Largest absolute entry difference after both maps are normalized.
    pub fn max_entry_difference(&self, other: &Homography) -> f64 {
        (self.m - other.m).amax()
    }
}

/// Frobenius norm 1, `m[2][2] >= 0` when it is not negligible, otherwise the
/// first non-negligible entry positive. Idempotent bit-for-bit.
fn normalize_matrix(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let norm = m.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let sign = sign_of_convention(m);
    let already = (norm - 1.0).abs() <= 4.0 * f64::EPSILON && sign > 0.0;
    if already {
        return Some(*m);
    }
    Some(m * (sign / norm))
}

fn sign_of_convention(m: &Matrix3<f64>) -> f64 {
    let scale = m.amax();
    let tol = SIGN_TOLERANCE * scale;
    let pivot = if m[(2, 2)].abs() > tol {
        m[(2, 2)]
    } else {
        // row-major scan
        (0..9)
            .map(|i| m[(i / 3, i % 3)])
            .find(|x| x.abs() > tol)
            .unwrap_or(1.0)
    };
    if pivot < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Similarity that moves the centroid to the origin and sets the mean distance
/// from it to √2.
fn conditioning_transform(points: &[(f64, f64)]) -> Option<Matrix3<f64>> {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .iter()
        .map(|&(x, y)| (x - cx).hypot(y - cy))
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, (x, y): (f64, f64)) -> (f64, f64) {
    let r = t * Vector3::new(x, y, 1.0);
    (r.x / r.z, r.y / r.z)
}

/// Twice the signed triangle area relative to the spread of its vertices.
fn relative_area((a, b, c): ((f64, f64), (f64, f64), (f64, f64))) -> f64 {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let l1 = (b.0 - a.0).hypot(b.1 - a.1);
    let l2 = (c.0 - a.0).hypot(c.1 - a.1);
    let l3 = (c.0 - b.0).hypot(c.1 - b.1);
    let longest = l1.max(l2).max(l3);
    if longest == 0.0 {
        return 0.0;
    }
    cross.abs() / (longest * longest)
}

const COLLINEAR_TOLERANCE: f64 = 1e-10;

fn check_minimal_collinearity(points: &[(f64, f64)], side: &str) -> Result<(), GeometryError> {
    for skip in 0..4 {
        let tri: Vec<(f64, f64)> = (0..4).filter(|&i| i != skip).map(|i| points[i]).collect();
        if relative_area((tri[0], tri[1], tri[2])) < COLLINEAR_TOLERANCE {
            return Err(GeometryError::DegenerateConfiguration(format!(
                "three {side} points are collinear"
            )));
        }
    }
    Ok(())
}

/// Estimates the image → ground homography from point pairs with the
/// normalized direct linear transform.
///
/// With exactly four pairs the solution is exact; with more it minimizes the
/// algebraic error of the conditioned homogeneous system.
pub fn estimate_homography(pairs: &[(ImagePoint, GroundPoint)]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::TooFewPoints(pairs.len()));
    }
    if pairs.iter().any(|(i, g)| !i.is_finite() || !g.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let src: Vec<(f64, f64)> = pairs.iter().map(|(i, _)| (i.u, i.v)).collect();
    let dst: Vec<(f64, f64)> = pairs.iter().map(|(_, g)| (g.x, g.y)).collect();

    let t_src = conditioning_transform(&src)
        .ok_or_else(|| GeometryError::DegenerateConfiguration("image points coincide".into()))?;
    let t_dst = conditioning_transform(&dst)
        .ok_or_else(|| GeometryError::DegenerateConfiguration("ground points coincide".into()))?;
    let src_n: Vec<(f64, f64)> = src.iter().map(|&p| transform(&t_src, p)).collect();
    let dst_n: Vec<(f64, f64)> = dst.iter().map(|&p| transform(&t_dst, p)).collect();

    if pairs.len() == 4 {
        check_minimal_collinearity(&src_n, "image")?;
        check_minimal_collinearity(&dst_n, "ground")?;
    }

    // Pad to at least 9 rows so the full right singular basis is available.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (&(x, y), &(xp, yp))) in src_n.iter().zip(dst_n.iter()).enumerate() {
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = xp * x;
        a[(r, 7)] = xp * y;
        a[(r, 8)] = xp;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = yp * x;
        a[(r + 1, 7)] = yp * y;
        a[(r + 1, 8)] = yp;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| GeometryError::DegenerateConfiguration("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = |k: usize| svd.singular_values[order[k]];
    let largest = sigma(0);
    if !(largest > 0.0) || sigma(7) / largest < DEGENERACY_RATIO {
        return Err(GeometryError::DegenerateConfiguration(
            "design matrix has a null space of dimension > 1".into(),
        ));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::SingularMatrix)?;
    let m = t_dst_inv * hn * t_src;
    Homography::new(m, Direction::ImageToGround).map_err(|e| match e {
        GeometryError::SingularMatrix => {
            GeometryError::DegenerateConfiguration("fitted map is rank deficient".into())
        }
        other => other,
    })
}

/// Applies `h` to `p`. Thin free-function form of [`Homography::apply`].
pub fn apply_homography<P: PlanePoint, Q: PlanePoint>(h: &Homography, p: P) -> Result<Q, GeometryError> {
    h.apply(p)
}

pub fn invert_homography(h: &Homography) -> Result<Homography, GeometryError> {
    h.inverse()
}
