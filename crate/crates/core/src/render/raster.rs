//! Minimal deterministic drawing primitives on RGB rasters.

use image::{Rgb, RgbImage};

use super::font;

pub type Color = Rgb<u8>;

/// Fixed 12-color palette for per-identity coloring.
pub const PALETTE: [Color; 12] = [
    Rgb([230, 25, 75]),
    Rgb([60, 180, 75]),
    Rgb([255, 225, 25]),
    Rgb([0, 130, 200]),
    Rgb([245, 130, 48]),
    Rgb([145, 30, 180]),
    Rgb([70, 240, 240]),
    Rgb([240, 50, 230]),
    Rgb([210, 245, 60]),
    Rgb([250, 190, 212]),
    Rgb([0, 128, 128]),
    Rgb([170, 110, 40]),
];

/// Stable identity → palette color (splitmix64 finalizer).
pub fn identity_color(identity: u32) -> Color {
    let mut z = (identity as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    PALETTE[(z % PALETTE.len() as u64) as usize]
}

pub fn hex(c: Color) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn shade(c: Color, factor: f64) -> Color {
    let f = |v: u8| (v as f64 * factor).round().clamp(0.0, 255.0) as u8;
    Rgb([f(c[0]), f(c[1]), f(c[2])])
}

pub fn put(img: &mut RgbImage, x: i64, y: i64, c: Color) {
    if x >= 0 && y >= 0 && (x as u64) < img.width() as u64 && (y as u64) < img.height() as u64 {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn stamp(img: &mut RgbImage, x: i64, y: i64, c: Color, thickness: u32) {
    let t = thickness.max(1) as i64;
    let lo = -(t - 1) / 2;
    for dy in lo..lo + t {
        for dx in lo..lo + t {
            put(img, x + dx, y + dy, c);
        }
    }
}

/// Bresenham segment between continuous coordinates (pixel `(c, r)` covers
/// `[c, c+1) × [r, r+1)`).
pub fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Color, thickness: u32) {
    if !(a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite()) {
        return;
    }
    // Keep runaway segments bounded.
    let lim = 1e6;
    if a.0.abs() > lim || a.1.abs() > lim || b.0.abs() > lim || b.1.abs() > lim {
        return;
    }
    let (mut x0, mut y0) = (a.0.floor() as i64, a.1.floor() as i64);
    let (x1, y1) = (b.0.floor() as i64, b.1.floor() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        stamp(img, x0, y0, c, thickness);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn draw_polyline(img: &mut RgbImage, pts: &[(f64, f64)], c: Color, thickness: u32) {
    for w in pts.windows(2) {
        draw_line(img, w[0], w[1], c, thickness);
    }
    if pts.len() == 1 {
        stamp(img, pts[0].0.floor() as i64, pts[0].1.floor() as i64, c, thickness);
    }
}

pub fn draw_polygon_outline(img: &mut RgbImage, pts: &[(f64, f64)], c: Color, thickness: u32) {
    if pts.is_empty() {
        return;
    }
    draw_polyline(img, pts, c, thickness);
    draw_line(img, pts[pts.len() - 1], pts[0], c, thickness);
}

/// Even-odd scanline fill sampling pixel centers.
pub fn fill_polygon(img: &mut RgbImage, pts: &[(f64, f64)], c: Color) {
    if pts.len() < 3 || pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return;
    }
    let (h, w) = (img.height() as i64, img.width() as i64);
    let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
    let ymax = (pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(h);
    let mut xs = Vec::new();
    for row in ymin..ymax {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            if (a.1 <= yc) != (b.1 <= yc) {
                xs.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks(2) {
            if let [l, r] = pair {
                let start = ((l - 0.5).ceil() as i64).max(0);
                let end = ((r - 0.5).floor() as i64).min(w - 1);
                for col in start..=end {
                    img.put_pixel(col as u32, row as u32, c);
                }
            }
        }
    }
}

pub fn fill_rect(img: &mut RgbImage, x: i64, y: i64, w: u32, h: u32, c: Color) {
    for yy in y..y + h as i64 {
        for xx in x..x + w as i64 {
            put(img, xx, yy, c);
        }
    }
}

pub fn draw_rect(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, c: Color, thickness: u32) {
    draw_polygon_outline(img, &[(x0, y0), (x1, y0), (x1, y1), (x0, y1)], c, thickness);
}

pub fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: u32, c: Color) {
    font::for_each_pixel(text, x, y, scale, |px, py| put(img, px, py, c));
}

/// Filled disc of radius `r` pixels.
pub fn draw_dot(img: &mut RgbImage, center: (f64, f64), r: f64, c: Color) {
    let (cx, cy) = center;
    if !(cx.is_finite() && cy.is_finite()) {
        return;
    }
    let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
    let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                put(img, x, y, c);
            }
        }
    }
}

/// Encodes as PNG. The encoder output depends only on the pixels.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}
