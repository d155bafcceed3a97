//! Differentiable anti-aliased stroke rasterizer.
//!
//! Each primitive is flattened to a polyline (a fixed linear map of its
//! control points). Pixel coverage is a C2 ramp of the distance from the
//! pixel centre to that polyline: full inside `width/2 - aa`, zero beyond
//! `width/2 + aa`. Gradients flow through the closest segment to each
//! pixel and through the flattening weights back to the control points.

use super::{Backward, Composite, RasterizerBackend, Scene, SceneGrad};
use crate::geometry::{FlattenBasis, Point2, PrimitiveKind};
use crate::{Error, Exec, Raster, Result};

#[derive(Debug, Clone, Copy)]
pub struct SoftRasterizer {
    /// Half-width of the anti-aliasing ramp, in pixels.
    pub aa: f64,
    pub exec: Exec,
}

impl Default for SoftRasterizer {
    fn default() -> Self {
        SoftRasterizer {
            aa: 0.5,
            exec: Exec::default(),
        }
    }
}

impl SoftRasterizer {
    pub fn with_exec(exec: Exec) -> Self {
        SoftRasterizer {
            exec,
            ..SoftRasterizer::default()
        }
    }
}

/// One pixel touched by a primitive.
#[derive(Debug, Clone, Copy)]
struct Hit {
    pixel: u32,
    segment: u32,
    coverage: f64,
    /// d(coverage)/d(distance)
    slope: f64,
    t: f64,
    /// Unit vector from the closest point towards the pixel centre.
    nx: f64,
    ny: f64,
}

#[derive(Debug)]
struct Layer {
    kind: PrimitiveKind,
    opacity: f64,
    vertices: usize,
    hits: Vec<Hit>,
}

/// Quintic smoothstep and its derivative.
fn ramp(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = s * s * s * (s * (6.0 * s - 15.0) + 10.0);
        let dv = 30.0 * s * s * (s - 1.0) * (s - 1.0);
        (v, dv)
    }
}

fn closest_on_polyline(poly: &[Point2], c: Point2) -> (usize, f64, f64, Point2) {
    let mut best = (0, 0.0, f64::INFINITY, Point2::default());
    let segments = poly.len().saturating_sub(1).max(1);
    for m in 0..segments {
        let a = poly[m];
        let b = poly[(m + 1).min(poly.len() - 1)];
        let ab = b.sub(a);
        let len2 = ab.x * ab.x + ab.y * ab.y;
        let t = if len2 > 0.0 {
            (((c.x - a.x) * ab.x + (c.y - a.y) * ab.y) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = a.add(ab.scale(t));
        let d2 = (c.x - q.x) * (c.x - q.x) + (c.y - q.y) * (c.y - q.y);
        if d2 < best.2 {
            best = (m, t, d2, q);
        }
    }
    best
}

impl SoftRasterizer {
    fn layer(&self, prim: &crate::geometry::Primitive, scene: &Scene<'_>) -> Layer {
        let basis = FlattenBasis::get(prim.kind());
        let poly = basis.apply(prim.points());
        let half = scene.stroke_width / 2.0;
        let reach = half + self.aa;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &poly {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let lo = |v: f64| (v - reach - 0.5).floor().max(0.0) as usize;
        let hi = |v: f64, n: usize| ((v + reach + 0.5).ceil().max(0.0) as usize).min(n);
        let (px0, px1) = (lo(x0), hi(x1, scene.width));
        let (py0, py1) = (lo(y0), hi(y1, scene.height));

        let mut hits = Vec::new();
        for py in py0..py1 {
            for px in px0..px1 {
                let c = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
                let (segment, t, d2, q) = closest_on_polyline(&poly, c);
                let d = d2.sqrt();
                if d >= reach {
                    continue;
                }
                let (coverage, dv) = ramp((reach - d) / (2.0 * self.aa));
                if coverage <= 0.0 {
                    continue;
                }
                let (nx, ny) = if d > 0.0 {
                    ((c.x - q.x) / d, (c.y - q.y) / d)
                } else {
                    (0.0, 0.0)
                };
                hits.push(Hit {
                    pixel: (py * scene.width + px) as u32,
                    segment: segment as u32,
                    coverage,
                    slope: -dv / (2.0 * self.aa),
                    t,
                    nx,
                    ny,
                });
            }
        }
        Layer {
            kind: prim.kind(),
            opacity: prim.opacity(),
            vertices: basis.len(),
            hits,
        }
    }

    fn forward(&self, scene: &Scene<'_>) -> Result<(Vec<Layer>, Composite)> {
        if !(scene.stroke_width > 0.0 && scene.stroke_width.is_finite()) {
            return Err(Error::domain("stroke width must be positive"));
        }
        if let Some(p) = scene
            .primitives
            .iter()
            .find(|p| p.points().iter().any(|q| !q.is_finite()))
        {
            return Err(Error::domain(format!("primitive {} has non-finite points", p.id())));
        }
        let layers = self.exec.map(&scene.primitives, |p| self.layer(p, scene));
        let mut comp = Composite::new(scene.width * scene.height);
        for layer in &layers {
            for h in &layer.hits {
                comp.add(h.pixel as usize, layer.opacity * h.coverage);
            }
        }
        Ok((layers, comp))
    }
}

impl RasterizerBackend for SoftRasterizer {
    fn name(&self) -> &str {
        "soft"
    }

    fn render(&self, scene: &Scene<'_>) -> Result<Raster> {
        let (_, comp) = self.forward(scene).map_err(|e| super::wrap(e, scene))?;
        Ok(comp.to_raster(scene.width, scene.height))
    }

    fn render_differentiable(&self, scene: &Scene<'_>) -> Result<(Raster, Box<dyn Backward>)> {
        let (layers, comp) = self.forward(scene).map_err(|e| super::wrap(e, scene))?;
        let raster = comp.to_raster(scene.width, scene.height);
        let tape = Tape {
            exec: self.exec,
            pixels: scene.width * scene.height,
            layers,
            comp,
        };
        Ok((raster, Box::new(tape)))
    }
}

struct Tape {
    exec: Exec,
    pixels: usize,
    layers: Vec<Layer>,
    comp: Composite,
}

impl Tape {
    fn layer_grad(&self, layer: &Layer, g: &[f64]) -> (Vec<Point2>, f64) {
        let basis = FlattenBasis::get(layer.kind);
        let mut vertex = vec![Point2::default(); layer.vertices];
        let mut d_opacity = 0.0;
        for h in &layer.hits {
            let p = h.pixel as usize;
            if g[p] == 0.0 {
                continue;
            }
            let alpha = layer.opacity * h.coverage;
            let d_alpha = -g[p] * self.comp.excluding(p, alpha);
            d_opacity += d_alpha * h.coverage;
            let d_dist = d_alpha * layer.opacity * h.slope;
            if d_dist == 0.0 {
                continue;
            }
            // d(distance)/d(closest point) = -n, split over the segment ends.
            let m = h.segment as usize;
            let n = (m + 1).min(layer.vertices - 1);
            vertex[m].x -= d_dist * (1.0 - h.t) * h.nx;
            vertex[m].y -= d_dist * (1.0 - h.t) * h.ny;
            vertex[n].x -= d_dist * h.t * h.nx;
            vertex[n].y -= d_dist * h.t * h.ny;
        }
        let mut points = vec![Point2::default(); layer.kind.control_point_count()];
        basis.pull_back(&vertex, &mut points);
        (points, d_opacity)
    }
}

impl Backward for Tape {
    fn backward(&self, d_raster: &[f64]) -> Result<SceneGrad> {
        if d_raster.len() != self.pixels * 3 {
            return Err(Error::domain("raster gradient size mismatch"));
        }
        let g: Vec<f64> = d_raster.chunks_exact(3).map(|c| c[0] + c[1] + c[2]).collect();
        let grads = self.exec.map(&self.layers, |l| self.layer_grad(l, &g));
        let (points, opacity) = grads.into_iter().unzip();
        Ok(SceneGrad { points, opacity })
    }
}
