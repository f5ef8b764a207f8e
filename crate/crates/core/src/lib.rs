//! Road-plane calibration from four or more image/ground correspondences,
//! metric trajectories from annotated boxes, cuboid scenes and the rasters
//! that go with them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod geometry;
pub mod ingest;
pub mod render;
pub mod scene;
pub mod trajectory;
pub mod synth;
