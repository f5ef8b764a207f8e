//! Metric bird's-eye-view rasters: inverse-mapping warp and track plots.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use super::raster::{self, Color};
use super::RenderError;
use crate::calibration::{multiples_in, CalibrationProfile, RoadExtent};
use crate::geometry::GroundPoint;
use crate::trajectory::Track;

pub const DEFAULT_RESOLUTION_PPM: f64 = 10.0;
pub const DEFAULT_GRID_SPACING_M: f64 = 5.0;
pub const DEFAULT_PIXEL_BUDGET: u64 = 50_000_000;
pub const SENTINEL: Color = Rgb([255, 0, 255]);

/// Ground ↔ raster mapping. Ground `(x_min, y_max)` sits at the top-left of
/// the plot area; raster rows grow downward while ground y grows upward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevTransform {
    pub extent: RoadExtent,
    /// Pixels per meter.
    pub resolution: f64,
    /// Offset of the plot area inside the raster.
    pub origin_px: (f64, f64),
}

impl BevTransform {
    pub fn new(extent: RoadExtent, resolution: f64) -> Self {
        Self {
            extent,
            resolution,
            origin_px: (0.0, 0.0),
        }
    }

    pub fn plot_size(&self) -> (u32, u32) {
        (
            (self.extent.width() * self.resolution).round() as u32,
            (self.extent.length() * self.resolution).round() as u32,
        )
    }

    /// Continuous raster coordinates of a ground point.
    pub fn to_pixel(&self, g: GroundPoint) -> (f64, f64) {
        (
            self.origin_px.0 + (g.x - self.extent.x_min) * self.resolution,
            self.origin_px.1 + (self.extent.y_max - g.y) * self.resolution,
        )
    }

    pub fn to_ground(&self, px: (f64, f64)) -> GroundPoint {
        GroundPoint::new(
            self.extent.x_min + (px.0 - self.origin_px.0) / self.resolution,
            self.extent.y_max - (px.1 - self.origin_px.1) / self.resolution,
        )
    }
}

fn check_resolution(resolution: f64) -> Result<(), RenderError> {
    if resolution > 0.0 && resolution.is_finite() {
        Ok(())
    } else {
        Err(RenderError::InvalidResolution(resolution))
    }
}

fn check_budget(w: u32, h: u32, budget: u64) -> Result<(), RenderError> {
    let pixels = w as u64 * h as u64;
    if pixels > budget {
        return Err(RenderError::ResolutionTooHigh { pixels, budget });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub image: RgbImage,
    pub transform: BevTransform,
}

impl BevRaster {
    pub fn resolution(&self) -> f64 {
        self.transform.resolution
    }

    pub fn extent(&self) -> RoadExtent {
        self.transform.extent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpOptions {
    pub pixel_budget: u64,
    pub sentinel: Color,
}

impl Default for WarpOptions {
    fn default() -> Self {
        Self {
            pixel_budget: DEFAULT_PIXEL_BUDGET,
            sentinel: SENTINEL,
        }
    }
}

/// Bilinear sample at continuous image coordinates; `None` outside the image.
pub fn sample_bilinear(src: &RgbImage, u: f64, v: f64) -> Option<Color> {
    let (w, h) = (src.width() as f64, src.height() as f64);
    if !(u >= 0.0 && u <= w && v >= 0.0 && v <= h) || src.width() == 0 || src.height() == 0 {
        return None;
    }
    let x = (u - 0.5).clamp(0.0, w - 1.0);
    let y = (v - 0.5).clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(src.width() - 1);
    let y1 = (y0 + 1).min(src.height() - 1);
    let (p00, p10, p01, p11) = (
        src.get_pixel(x0, y0),
        src.get_pixel(x1, y0),
        src.get_pixel(x0, y1),
        src.get_pixel(x1, y1),
    );
    let mut out = [0u8; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let top = p00[k] as f64 * (1.0 - fx) + p10[k] as f64 * fx;
        let bottom = p01[k] as f64 * (1.0 - fx) + p11[k] as f64 * fx;
        *o = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Some(Rgb(out))
}

/// Warps the source image onto the metric road plane: each BEV pixel center
/// is mapped through the ground → image homography and sampled bilinearly.
pub fn warp_to_bev(
    source: &RgbImage,
    profile: &CalibrationProfile,
    resolution: f64,
    opts: &WarpOptions,
) -> Result<BevRaster, RenderError> {
    check_resolution(resolution)?;
    let transform = BevTransform::new(profile.extent, resolution);
    let (w, h) = transform.plot_size();
    check_budget(w, h, opts.pixel_budget)?;
    let mut image = RgbImage::new(w, h);
    let row_len = w as usize * 3;
    if row_len > 0 {
        image
            .as_mut()
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(j, row)| {
                for i in 0..w as usize {
                    let g = transform.to_ground((i as f64 + 0.5, j as f64 + 0.5));
                    let c = profile
                        .ground_to_image(g)
                        .ok()
                        .and_then(|p| sample_bilinear(source, p.u, p.v))
                        .unwrap_or(opts.sentinel);
                    row[i * 3..i * 3 + 3].copy_from_slice(&c.0);
                }
            });
    }
    Ok(BevRaster { image, transform })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevStyle {
    pub resolution: f64,
    pub grid_spacing: f64,
    pub line_width: u32,
    pub margin_left: u32,
    pub margin_bottom: u32,
    pub margin_top: u32,
    pub margin_right: u32,
    pub background: Color,
    pub grid_color: Color,
    pub axis_color: Color,
    pub pixel_budget: u64,
}

impl Default for BevStyle {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION_PPM,
            grid_spacing: DEFAULT_GRID_SPACING_M,
            line_width: 2,
            margin_left: 40,
            margin_bottom: 24,
            margin_top: 12,
            margin_right: 12,
            background: Rgb([250, 250, 250]),
            grid_color: Rgb([205, 205, 205]),
            axis_color: Rgb([40, 40, 40]),
            pixel_budget: DEFAULT_PIXEL_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevTracksRender {
    pub image: RgbImage,
    pub svg: String,
    pub transform: BevTransform,
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// Track polylines over a metric grid, as a raster and an equivalent SVG.
pub fn render_bev_tracks(
    tracks: &[Track],
    extent: RoadExtent,
    style: &BevStyle,
) -> Result<BevTracksRender, RenderError> {
    check_resolution(style.resolution)?;
    if !(style.grid_spacing > 0.0 && style.grid_spacing.is_finite()) {
        return Err(RenderError::InvalidGridSpacing(style.grid_spacing));
    }
    let mut transform = BevTransform::new(extent, style.resolution);
    transform.origin_px = (style.margin_left as f64, style.margin_top as f64);
    let (pw, ph) = transform.plot_size();
    let (w, h) = (
        pw + style.margin_left + style.margin_right,
        ph + style.margin_top + style.margin_bottom,
    );
    check_budget(w, h, style.pixel_budget)?;

    let mut img = RgbImage::from_pixel(w, h, style.background);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="{}"/>"#, raster::hex(style.background));

    let xs = multiples_in(extent.x_min, extent.x_max, style.grid_spacing);
    let ys = multiples_in(extent.y_min, extent.y_max, style.grid_spacing);
    let _ = writeln!(svg, r#"<g stroke="{}" stroke-width="1">"#, raster::hex(style.grid_color));
    for &x in &xs {
        let a = transform.to_pixel(GroundPoint::new(x, extent.y_min));
        let b = transform.to_pixel(GroundPoint::new(x, extent.y_max));
        raster::draw_line(&mut img, a, b, style.grid_color, 1);
        let _ = writeln!(svg, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, a.0, a.1, b.0, b.1);
    }
    for &y in &ys {
        let a = transform.to_pixel(GroundPoint::new(extent.x_min, y));
        let b = transform.to_pixel(GroundPoint::new(extent.x_max, y));
        raster::draw_line(&mut img, a, b, style.grid_color, 1);
        let _ = writeln!(svg, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, a.0, a.1, b.0, b.1);
    }
    let _ = writeln!(svg, "</g>");

    // frame and ticks
    let corners: Vec<(f64, f64)> = extent.corners().iter().map(|g| transform.to_pixel(*g)).collect();
    raster::draw_polygon_outline(&mut img, &corners, style.axis_color, 1);
    let _ = writeln!(
        svg,
        r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="{}"/>"#,
        corners[3].0,
        corners[3].1,
        corners[1].0 - corners[3].0,
        corners[1].1 - corners[3].1,
        raster::hex(style.axis_color)
    );
    let _ = writeln!(svg, r#"<g font-family="monospace" font-size="9" fill="{}">"#, raster::hex(style.axis_color));
    for &x in &xs {
        let (px, py) = transform.to_pixel(GroundPoint::new(x, extent.y_min));
        raster::draw_line(&mut img, (px, py), (px, py + 4.0), style.axis_color, 1);
        let label = tick_label(x);
        let tw = super::font::text_width(&label, 1) as f64;
        raster::draw_text(&mut img, &label, (px - tw / 2.0).round() as i64, (py + 7.0) as i64, 1, style.axis_color);
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{label}</text>"#, px, py + 15.0);
    }
    for &y in &ys {
        let (px, py) = transform.to_pixel(GroundPoint::new(extent.x_min, y));
        raster::draw_line(&mut img, (px - 4.0, py), (px, py), style.axis_color, 1);
        let label = tick_label(y);
        let tw = super::font::text_width(&label, 1) as f64;
        raster::draw_text(&mut img, &label, (px - 6.0 - tw) as i64, (py - 3.0) as i64, 1, style.axis_color);
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{label}</text>"#, px - 6.0, py + 3.0);
    }
    let _ = writeln!(svg, "</g>");

    for t in tracks {
        let color = raster::identity_color(t.identity);
        let pts: Vec<(f64, f64)> = t.points.iter().map(|p| transform.to_pixel(p.ground)).collect();
        raster::draw_polyline(&mut img, &pts, color, style.line_width);
        if let Some(last) = pts.last() {
            raster::draw_dot(&mut img, *last, style.line_width as f64 + 1.0, color);
        }
        let path: Vec<String> = pts.iter().map(|p| format!("{:.3},{:.3}", p.0, p.1)).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-id="{}" points="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            t.identity,
            path.join(" "),
            raster::hex(color),
            style.line_width
        );
    }
    svg.push_str("</svg>\n");
    Ok(BevTracksRender {
        image: img,
        svg,
        transform,
    })
}
