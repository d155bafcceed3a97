//! Rasterization of the active primitive set, the differentiable backend
//! contract, and SVG export.
//!
//! Strokes are black on white and composite source-over in creation order,
//! so a pixel's value is the product of `1 - alpha_i * coverage_i` over the
//! primitives touching it.

mod gradcheck;
mod scanline;
mod soft;
mod svg;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ParamRef};
pub use scanline::ScanlineReference;
pub use soft::SoftRasterizer;
pub use svg::{
    export_layers, export_svg, read_svg_primitives, svg_document, ColorMode, LAYER_FILES,
};

use crate::canvas::Canvas;
use crate::geometry::{Point2, Primitive};
use crate::optimizer::DropoutMask;
use crate::{Error, Raster, Result};

/// Stroke width used when none is configured, in canvas units.
pub const DEFAULT_STROKE_WIDTH: f64 = 1.5;

/// The primitives to draw and the fixed drawing parameters.
#[derive(Debug, Clone)]
pub struct Scene<'a> {
    pub width: usize,
    pub height: usize,
    pub stroke_width: f64,
    pub primitives: Vec<&'a Primitive>,
}

impl<'a> Scene<'a> {
    /// Unpruned primitives of `canvas`, further filtered by `mask` when given.
    pub fn from_canvas(canvas: &'a Canvas, mask: Option<&DropoutMask>, stroke_width: f64) -> Self {
        let primitives = canvas
            .primitives()
            .iter()
            .enumerate()
            .filter(|(i, p)| !p.is_pruned() && mask.is_none_or(|m| m.is_active(*i)))
            .map(|(_, p)| p)
            .collect();
        Scene {
            width: canvas.width() as usize,
            height: canvas.height() as usize,
            stroke_width,
            primitives,
        }
    }
}

/// Gradient of a scalar with respect to every scene parameter, indexed like
/// `Scene::primitives`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrad {
    pub points: Vec<Vec<Point2>>,
    pub opacity: Vec<f64>,
}

impl SceneGrad {
    pub fn zeros(scene: &Scene<'_>) -> Self {
        SceneGrad {
            points: scene
                .primitives
                .iter()
                .map(|p| vec![Point2::default(); p.points().len()])
                .collect(),
            opacity: vec![0.0; scene.primitives.len()],
        }
    }
}

/// Reverse pass recorded by a differentiable forward render.
pub trait Backward: Send {
    /// `d_raster` holds d(scalar)/d(pixel channel), laid out like
    /// [`Raster::data`].
    fn backward(&self, d_raster: &[f64]) -> Result<SceneGrad>;
}

/// A rasterizer that can differentiate through its output.
pub trait RasterizerBackend: Sync {
    fn name(&self) -> &str;

    fn render(&self, scene: &Scene<'_>) -> Result<Raster>;

    fn render_differentiable(&self, scene: &Scene<'_>) -> Result<(Raster, Box<dyn Backward>)>;
}

/// Renders the unpruned primitives of `canvas` that are active in `mask`.
pub fn rasterize(
    canvas: &Canvas,
    mask: Option<&DropoutMask>,
    stroke_width: f64,
    backend: &dyn RasterizerBackend,
) -> Result<Raster> {
    let scene = Scene::from_canvas(canvas, mask, stroke_width);
    backend.render(&scene).map_err(|e| wrap(e, &scene))
}

pub(crate) fn wrap(err: Error, scene: &Scene<'_>) -> Error {
    match err {
        e @ Error::Rasterizer { .. } => e,
        other => Error::Rasterizer {
            primitives: scene.primitives.len(),
            width: scene.width,
            height: scene.height,
            reason: other.to_string(),
        },
    }
}

/// Per-pixel compositing state: product of `1 - a` over partial coverage
/// and the number of fully opaque hits.
#[derive(Debug, Clone)]
pub(crate) struct Composite {
    pub prod: Vec<f64>,
    pub opaque: Vec<u32>,
}

impl Composite {
    pub fn new(n: usize) -> Self {
        Composite {
            prod: vec![1.0; n],
            opaque: vec![0; n],
        }
    }

    pub fn add(&mut self, pixel: usize, alpha: f64) {
        if alpha >= 1.0 {
            self.opaque[pixel] += 1;
        } else {
            self.prod[pixel] *= 1.0 - alpha;
        }
    }

    pub fn value(&self, pixel: usize) -> f64 {
        if self.opaque[pixel] > 0 {
            0.0
        } else {
            self.prod[pixel]
        }
    }

    /// Product of `1 - a_j` over every other layer at `pixel`.
    pub fn excluding(&self, pixel: usize, alpha: f64) -> f64 {
        let opaque = self.opaque[pixel];
        if alpha >= 1.0 {
            if opaque == 1 {
                self.prod[pixel]
            } else {
                0.0
            }
        } else if opaque > 0 {
            0.0
        } else {
            self.prod[pixel] / (1.0 - alpha)
        }
    }

    pub fn to_raster(&self, width: usize, height: usize) -> Raster {
        let gray: Vec<f64> = (0..width * height).map(|i| self.value(i)).collect();
        Raster::from_gray(width, height, &gray).expect("composite matches dimensions")
    }
}
