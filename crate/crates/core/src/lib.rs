//! Text-to-sketch synthesis over constrained vector primitives.
//!
//! A sketch is a canvas of straight lines, circles and semicircles. Each
//! primitive carries a handful of on-curve control points and an opacity.
//! The canvas is seeded from a saliency map (one primitive of each kind in
//! every salient patch), then evolved by Adam against an image-text
//! embedding objective while whole primitives are randomly dropped each
//! iteration and faint primitives are pruned.
//!
//! Module map:
//!
//! - [`geometry`]: primitive shapes, patch grid, SVG path strings, affine recovery
//! - [`attention`]: saliency aggregation and landmark sampling
//! - [`canvas`]: patch selection and canvas initialization
//! - [`render`]: differentiable rasterizer, reference rasterizer, SVG export
//! - [`scoring`]: embeddings, augmentations, semantic/visual losses
//! - [`optimizer`]: dropout masks, Adam, schedule, gating, the synthesis loop
//! - [`metrics`]: CS, CLIP-T and PSNR
//! - [`pipeline`]: prompt to output directory, and trajectory replay

pub mod attention;
pub mod canvas;
mod error;
pub mod exec;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod scoring;

pub use error::{Error, Result};
pub use exec::Exec;
pub use raster::Raster;
