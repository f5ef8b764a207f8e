//! Orthographic wireframe preview of a scene frame over the road grid.

use image::{Rgb, RgbImage};

use super::raster::{self, Color};
use super::RenderError;
use crate::calibration::{multiples_in, RoadExtent};
use crate::scene::{Cuboid, SceneFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreviewCamera {
    /// Direction from the scene towards the camera, measured in the ground
    /// plane from +x.
    pub azimuth_deg: f64,
    /// Angle above the road plane; 90 looks straight down.
    pub elevation_deg: f64,
    pub width: u32,
    pub height: u32,
    pub grid_spacing: f64,
}

impl Default for PreviewCamera {
    fn default() -> Self {
        Self {
            azimuth_deg: 210.0,
            elevation_deg: 35.0,
            width: 800,
            height: 600,
            grid_spacing: 5.0,
        }
    }
}

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Orthographic view basis plus the fit of the extent into the raster.
#[derive(Debug, Clone, Copy)]
pub struct ViewProjection {
    right: V3,
    up: V3,
    forward: V3,
    center: V3,
    scale: f64,
    offset: (f64, f64),
}

const HEADROOM_M: f64 = 4.0;
const MARGIN_PX: f64 = 16.0;

impl ViewProjection {
    pub fn new(extent: &RoadExtent, camera: &PreviewCamera) -> Self {
        let (az, el) = (camera.azimuth_deg.to_radians(), camera.elevation_deg.to_radians());
        let towards_camera = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        let forward = normalize([-towards_camera[0], -towards_camera[1], -towards_camera[2]]);
        let up_hint = if el.cos().abs() < 1e-9 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] };
        let right = normalize(cross(forward, up_hint));
        let up = cross(right, forward);
        let center = [
            (extent.x_min + extent.x_max) / 2.0,
            (extent.y_min + extent.y_max) / 2.0,
            0.0,
        ];
        let mut view = Self {
            right,
            up,
            forward,
            center,
            scale: 1.0,
            offset: (0.0, 0.0),
        };
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for g in extent.corners() {
            for z in [0.0, HEADROOM_M] {
                let (a, b) = view.screen([g.x, g.y, z]);
                lo = (lo.0.min(a), lo.1.min(b));
                hi = (hi.0.max(a), hi.1.max(b));
            }
        }
        let avail = (
            (camera.width as f64 - 2.0 * MARGIN_PX).max(1.0),
            (camera.height as f64 - 2.0 * MARGIN_PX).max(1.0),
        );
        let scale = (avail.0 / (hi.0 - lo.0).max(1e-9)).min(avail.1 / (hi.1 - lo.1).max(1e-9));
        view.scale = scale;
        view.offset = (
            camera.width as f64 / 2.0 - scale * (lo.0 + hi.0) / 2.0,
            camera.height as f64 / 2.0 + scale * (lo.1 + hi.1) / 2.0,
        );
        view
    }

    fn screen(&self, p: V3) -> (f64, f64) {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        (dot(d, self.right), dot(d, self.up))
    }

    /// Raster coordinates of a world point (meters).
    pub fn project(&self, p: V3) -> (f64, f64) {
        let (a, b) = self.screen(p);
        (self.offset.0 + self.scale * a, self.offset.1 - self.scale * b)
    }

    /// Distance along the viewing direction; larger is farther from the camera.
    pub fn depth(&self, p: V3) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        dot(d, self.forward)
    }
}

/// Identities in the order they are painted: farthest first.
pub fn paint_order(frame: &SceneFrame, view: &ViewProjection) -> Vec<u32> {
    sorted_by_depth(&frame.cuboids, view).iter().map(|c| c.identity).collect()
}

fn sorted_by_depth<'a>(cuboids: &'a [Cuboid], view: &ViewProjection) -> Vec<&'a Cuboid> {
    let mut v: Vec<&Cuboid> = cuboids.iter().collect();
    v.sort_by(|a, b| {
        view.depth(b.center)
            .total_cmp(&view.depth(a.center))
            .then(a.identity.cmp(&b.identity))
    });
    v
}

const FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
];

pub const PREVIEW_BACKGROUND: Color = Rgb([245, 245, 240]);
const ROAD: Color = Rgb([200, 200, 196]);
const GRID: Color = Rgb([165, 165, 160]);
const EDGE: Color = Rgb([25, 25, 25]);

pub fn render_cuboid_preview(
    frame: &SceneFrame,
    extent: &RoadExtent,
    camera: &PreviewCamera,
) -> Result<RgbImage, RenderError> {
    if !(camera.grid_spacing > 0.0 && camera.grid_spacing.is_finite()) {
        return Err(RenderError::InvalidGridSpacing(camera.grid_spacing));
    }
    let view = ViewProjection::new(extent, camera);
    let mut img = RgbImage::from_pixel(camera.width, camera.height, PREVIEW_BACKGROUND);

    let road: Vec<(f64, f64)> = extent.corners().iter().map(|g| view.project([g.x, g.y, 0.0])).collect();
    raster::fill_polygon(&mut img, &road, ROAD);
    for x in multiples_in(extent.x_min, extent.x_max, camera.grid_spacing) {
        let a = view.project([x, extent.y_min, 0.0]);
        let b = view.project([x, extent.y_max, 0.0]);
        raster::draw_line(&mut img, a, b, GRID, 1);
    }
    for y in multiples_in(extent.y_min, extent.y_max, camera.grid_spacing) {
        let a = view.project([extent.x_min, y, 0.0]);
        let b = view.project([extent.x_max, y, 0.0]);
        raster::draw_line(&mut img, a, b, GRID, 1);
    }

    for c in sorted_by_depth(&frame.cuboids, &view) {
        let corners = c.corners();
        let color = raster::identity_color(c.identity);
        let mut faces: Vec<(f64, usize)> = FACES
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let mid = f.iter().fold([0.0; 3], |acc, &i| {
                    [acc[0] + corners[i][0] / 4.0, acc[1] + corners[i][1] / 4.0, acc[2] + corners[i][2] / 4.0]
                });
                (view.depth(mid), k)
            })
            .collect();
        faces.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, k) in faces {
            let poly: Vec<(f64, f64)> = FACES[k].iter().map(|&i| view.project(corners[i])).collect();
            let tone = if k == 1 { 1.0 } else if k == 0 { 0.5 } else { 0.75 };
            raster::fill_polygon(&mut img, &poly, raster::shade(color, tone));
            raster::draw_polygon_outline(&mut img, &poly, EDGE, 1);
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::VehicleClass;

    fn cube(id: u32, x: f64, y: f64) -> Cuboid {
        Cuboid {
            identity: id,
            class: VehicleClass::Generic,
            center: [x, y, 0.5],
            dims: [1.0, 1.0, 1.0],
            yaw: 0.0,
        }
    }

    fn frame(cuboids: Vec<Cuboid>) -> SceneFrame {
        SceneFrame {
            sample_index: 1,
            source_frame: 1,
            time: 0.0,
            cuboids,
        }
    }

    #[test]
    fn top_down_unit_cube_is_square() {
        let extent = RoadExtent::new(-5.0, 5.0, -5.0, 5.0).unwrap();
        let cam = PreviewCamera {
            elevation_deg: 90.0,
            azimuth_deg: 270.0,
            width: 400,
            height: 400,
            ..Default::default()
        };
        let img = render_cuboid_preview(&frame(vec![cube(3, 0.0, 0.0)]), &extent, &cam).unwrap();
        let color = raster::identity_color(3);
        let (mut x0, mut x1, mut y0, mut y1) = (u32::MAX, 0, u32::MAX, 0);
        for (x, y, p) in img.enumerate_pixels() {
            if *p == color || *p == EDGE {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        assert!(w > 10 && w.abs_diff(h) <= 1, "{w}x{h}");
        let view = ViewProjection::new(&extent, &cam);
        let expected = view.project([0.5, 0.0, 0.0]).0 - view.project([-0.5, 0.0, 0.0]).0;
        assert!((w as f64 - expected.abs()).abs() <= 2.0);
    }

    #[test]
    fn nearer_cuboid_painted_last() {
        let extent = RoadExtent::default();
        let cam = PreviewCamera::default();
        let view = ViewProjection::new(&extent, &cam);
        // camera sits towards -x/-y at azimuth 210°, so smaller y is nearer
        let f = frame(vec![cube(1, 12.0, 20.0), cube(2, 12.0, 70.0)]);
        assert_eq!(paint_order(&f, &view), vec![2, 1]);
    }

    #[test]
    fn empty_frame_is_grid_only() {
        let img = render_cuboid_preview(&frame(vec![]), &RoadExtent::default(), &PreviewCamera::default()).unwrap();
        assert!(img.pixels().all(|p| !raster::PALETTE.contains(p)));
        assert!(img.pixels().any(|p| *p == GRID));
    }
}
