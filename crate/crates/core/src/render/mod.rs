//! Rasters for the BEV view, the cuboid preview and the composite frame.

pub mod bev;
pub mod cuboid_view;
pub mod font;
pub mod raster;
pub mod triptych;

use thiserror::Error;

pub use bev::{render_bev_tracks, warp_to_bev, BevRaster, BevStyle, BevTracksRender, BevTransform, WarpOptions};
pub use cuboid_view::{render_cuboid_preview, PreviewCamera};
pub use raster::{encode_png, identity_color};
pub use triptych::{compose_triptych, draw_annotated_frame, render_grid_overlay, TriptychLayout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("resolution must be a positive finite pixels-per-meter value, got {0}")]
    InvalidResolution(f64),
    #[error("output would need {pixels} pixels, over the budget of {budget}")]
    ResolutionTooHigh { pixels: u64, budget: u64 },
    #[error("grid spacing must be positive and finite, got {0}")]
    InvalidGridSpacing(f64),
    #[error("panel `{0}` is missing")]
    MissingPanel(&'static str),
}

impl RenderError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidResolution(_) => "invalid_resolution",
            Self::ResolutionTooHigh { .. } => "resolution_too_high",
            Self::InvalidGridSpacing(_) => "invalid_grid_spacing",
            Self::MissingPanel(_) => "missing_panel",
        }
    }
}
