//! Annotated-frame overlays and the three-panel composite.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use super::raster::{self, Color};
use super::RenderError;
use crate::calibration::{CalibrationProfile, GridGeometry};
use crate::ingest::Corners;

pub const ACTIVE_POINT: Color = Rgb([230, 20, 20]);
pub const CHECK_POINT: Color = Rgb([0, 220, 230]);
const GRID_OVERLAY: Color = Rgb([255, 215, 0]);

/// Draws each box in its identity color with the identity printed above it.
pub fn draw_annotated_frame(frame: &RgbImage, boxes: &[(u32, Corners)]) -> RgbImage {
    let mut img = frame.clone();
    for (id, c) in boxes {
        let color = raster::identity_color(*id);
        raster::draw_rect(&mut img, c.x1, c.y1, c.x2, c.y2, color, 2);
        raster::draw_text(&mut img, &id.to_string(), c.x1.floor() as i64, c.y1.floor() as i64 - 10, 1, color);
    }
    img
}

/// Reprojected metric grid and the correspondences drawn on the reference
/// frame: active points red, check points cyan.
pub fn render_grid_overlay(reference: &RgbImage, grid: &GridGeometry, profile: &CalibrationProfile) -> RgbImage {
    let mut img = reference.clone();
    for line in &grid.lines {
        // break the polyline at unreachable samples
        for run in line.image.split(|p| p.is_none()) {
            let pts: Vec<(f64, f64)> = run.iter().flatten().map(|p| (p.u, p.v)).collect();
            raster::draw_polyline(&mut img, &pts, GRID_OVERLAY, 1);
        }
    }
    for c in profile.correspondences() {
        let color = if c.active { ACTIVE_POINT } else { CHECK_POINT };
        raster::draw_dot(&mut img, (c.image.u, c.image.v), 5.0, color);
        raster::draw_text(
            &mut img,
            &c.label,
            c.image.u.round() as i64 + 7,
            c.image.v.round() as i64 - 3,
            1,
            color,
        );
    }
    img
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriptychLayout {
    pub width: u32,
    pub height: u32,
    /// Share of the width given to the left panel.
    pub left_fraction: f64,
    pub border: u32,
    pub title_height: u32,
    pub titles: [String; 3],
    pub background: Color,
    pub border_color: Color,
    pub title_color: Color,
}

impl Default for TriptychLayout {
    fn default() -> Self {
        Self {
            width: 1600,
            height: 900,
            left_fraction: 0.6,
            border: 4,
            title_height: 20,
            titles: ["ORIGINAL FRAME".into(), "METRIC BEV".into(), "3D CUBOIDS".into()],
            background: Rgb([18, 18, 18]),
            border_color: Rgb([90, 90, 90]),
            title_color: Rgb([235, 235, 235]),
        }
    }
}

/// A panel's content rectangle `(x, y, w, h)` inside the composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl TriptychLayout {
    /// Content rectangles for left, upper-right and lower-right panels.
    pub fn panels(&self) -> [PanelRect; 3] {
        let b = self.border;
        let left_w = ((self.width as f64 * self.left_fraction).round() as u32).min(self.width);
        let right_w = self.width - left_w;
        let half = self.height / 2;
        let content = |x: u32, y: u32, w: u32, h: u32| PanelRect {
            x: x + b,
            y: y + b + self.title_height,
            w: w.saturating_sub(2 * b),
            h: h.saturating_sub(2 * b + self.title_height),
        };
        [
            content(0, 0, left_w, self.height),
            content(left_w, 0, right_w, half),
            content(left_w, half, right_w, self.height - half),
        ]
    }
}

fn letterbox(canvas: &mut RgbImage, panel: &RgbImage, rect: PanelRect) {
    if rect.w == 0 || rect.h == 0 || panel.width() == 0 || panel.height() == 0 {
        return;
    }
    let scale = (rect.w as f64 / panel.width() as f64).min(rect.h as f64 / panel.height() as f64);
    let w = ((panel.width() as f64 * scale).round() as u32).clamp(1, rect.w);
    let h = ((panel.height() as f64 * scale).round() as u32).clamp(1, rect.h);
    let resized = if (w, h) == panel.dimensions() {
        panel.clone()
    } else {
        imageops::resize(panel, w, h, FilterType::Triangle)
    };
    let x = rect.x + (rect.w - w) / 2;
    let y = rect.y + (rect.h - h) / 2;
    imageops::replace(canvas, &resized, x as i64, y as i64);
}

/// Left: original frame with boxes. Upper right: BEV tracks. Lower right:
/// cuboid scene. Panels keep their aspect ratio and are letterboxed.
pub fn compose_triptych(
    original: Option<&RgbImage>,
    bev: Option<&RgbImage>,
    cuboids: Option<&RgbImage>,
    layout: &TriptychLayout,
) -> Result<RgbImage, RenderError> {
    let original = original.ok_or(RenderError::MissingPanel("original"))?;
    let bev = bev.ok_or(RenderError::MissingPanel("bev"))?;
    let cuboids = cuboids.ok_or(RenderError::MissingPanel("cuboids"))?;
    let mut canvas = RgbImage::from_pixel(layout.width, layout.height, layout.background);
    let rects = layout.panels();
    for (k, (panel, rect)) in [original, bev, cuboids].into_iter().zip(rects).enumerate() {
        let outer_x = rect.x.saturating_sub(layout.border);
        let outer_y = rect.y.saturating_sub(layout.border + layout.title_height);
        let outer_w = rect.w + 2 * layout.border;
        let outer_h = rect.h + 2 * layout.border + layout.title_height;
        for t in 0..layout.border.min(outer_w / 2).max(1) {
            raster::draw_rect(
                &mut canvas,
                (outer_x + t) as f64,
                (outer_y + t) as f64,
                (outer_x + outer_w - 1 - t) as f64,
                (outer_y + outer_h - 1 - t) as f64,
                layout.border_color,
                1,
            );
        }
        raster::draw_text(
            &mut canvas,
            &layout.titles[k],
            rect.x as i64 + 4,
            (outer_y + layout.border) as i64 + (layout.title_height as i64 - 14) / 2,
            2,
            layout.title_color,
        );
        letterbox(&mut canvas, panel, rect);
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_panels_land_in_place() {
        let layout = TriptychLayout::default();
        let (r, g, b) = (Rgb([200, 0, 0]), Rgb([0, 200, 0]), Rgb([0, 0, 200]));
        let rects = layout.panels();
        let left = RgbImage::from_pixel(rects[0].w, rects[0].h, r);
        let top = RgbImage::from_pixel(rects[1].w, rects[1].h, g);
        let bottom = RgbImage::from_pixel(rects[2].w, rects[2].h, b);
        let out = compose_triptych(Some(&left), Some(&top), Some(&bottom), &layout).unwrap();
        assert_eq!(out.dimensions(), (1600, 900));
        for (rect, c) in rects.iter().zip([r, g, b]) {
            assert_eq!(*out.get_pixel(rect.x + rect.w / 2, rect.y + rect.h / 2), c);
        }
        // left panel occupies the left side, right panels stacked
        assert!(rects[0].x < rects[1].x && rects[1].x == rects[2].x && rects[1].y < rects[2].y);
    }

    #[test]
    fn mismatched_panels_are_letterboxed() {
        let layout = TriptychLayout::default();
        let rects = layout.panels();
        let tall = RgbImage::from_pixel(10, 100, Rgb([0, 200, 0]));
        let solid = RgbImage::from_pixel(50, 50, Rgb([9, 9, 9]));
        let out = compose_triptych(Some(&solid), Some(&tall), Some(&solid), &layout).unwrap();
        let r = rects[1];
        // tall panel scaled to full height, centered, with background on both sides
        assert_eq!(*out.get_pixel(r.x + r.w / 2, r.y + 1), Rgb([0, 200, 0]));
        assert_eq!(*out.get_pixel(r.x + 2, r.y + r.h / 2), layout.background);
        assert_eq!(*out.get_pixel(r.x + r.w - 3, r.y + r.h / 2), layout.background);
    }

    #[test]
    fn missing_panel_is_an_error() {
        let img = RgbImage::new(4, 4);
        let err = compose_triptych(Some(&img), None, Some(&img), &TriptychLayout::default()).unwrap_err();
        assert!(matches!(err, RenderError::MissingPanel("bev")));
    }

    #[test]
    fn boxes_are_drawn_in_identity_color() {
        let frame = RgbImage::new(100, 100);
        let c = Corners { x1: 10.0, y1: 20.0, x2: 40.0, y2: 60.0 };
        let out = draw_annotated_frame(&frame, &[(4, c)]);
        assert_eq!(*out.get_pixel(10, 40), raster::identity_color(4));
        assert_eq!(*out.get_pixel(25, 40), Rgb([0, 0, 0]));
    }
}
