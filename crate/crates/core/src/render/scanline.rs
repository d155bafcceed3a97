//! Non-differentiable reference rasterizer used as a test oracle.
//!
//! Each stroke is the union of capsules (round-capped segments of radius
//! `width/2`) around the flattened centreline. Coverage is computed per
//! sub-scanline: the capsule intersections with the horizontal line are
//! merged into spans and their exact overlap with each pixel is summed.

use super::{Composite, Scene};
use crate::geometry::{flatten, Point2};
use crate::Raster;

#[derive(Debug, Clone, Copy)]
pub struct ScanlineReference {
    /// Sub-scanlines per pixel row.
    pub subrows: usize,
}

impl Default for ScanlineReference {
    fn default() -> Self {
        ScanlineReference { subrows: 16 }
    }
}

fn disc_span(c: Point2, r: f64, y: f64) -> Option<(f64, f64)> {
    let dy = y - c.y;
    if dy.abs() > r {
        return None;
    }
    let h = (r * r - dy * dy).sqrt();
    Some((c.x - h, c.x + h))
}

fn band_span(a: Point2, b: Point2, r: f64, y: f64) -> Option<(f64, f64)> {
    let ab = b.sub(a);
    let len = ab.x.hypot(ab.y);
    if len == 0.0 {
        return None;
    }
    let n = Point2::new(-ab.y / len * r, ab.x / len * r);
    let quad = [a.add(n), b.add(n), b.sub(n), a.sub(n)];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..4 {
        let (p, q) = (quad[i], quad[(i + 1) % 4]);
        if (p.y - y) * (q.y - y) > 0.0 {
            continue;
        }
        if p.y == q.y {
            lo = lo.min(p.x.min(q.x));
            hi = hi.max(p.x.max(q.x));
        } else {
            let x = p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn capsule_span(a: Point2, b: Point2, r: f64, y: f64) -> Option<(f64, f64)> {
    [disc_span(a, r, y), disc_span(b, r, y), band_span(a, b, r, y)]
        .into_iter()
        .flatten()
        .reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
}

fn merge(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.0 <= last.1 => last.1 = last.1.max(s.1),
            _ => out.push(s),
        }
    }
    out
}

impl ScanlineReference {
    /// Coverage in `[0, 1]` of every pixel by one stroke.
    pub fn coverage(&self, poly: &[Point2], radius: f64, width: usize, height: usize) -> Vec<f64> {
        let mut cov = vec![0.0; width * height];
        let n = self.subrows.max(1);
        let segs: Vec<(Point2, Point2)> = if poly.len() == 1 {
            vec![(poly[0], poly[0])]
        } else {
            poly.windows(2).map(|w| (w[0], w[1])).collect()
        };
        for py in 0..height {
            for s in 0..n {
                let y = py as f64 + (s as f64 + 0.5) / n as f64;
                let spans = segs
                    .iter()
                    .filter_map(|&(a, b)| capsule_span(a, b, radius, y))
                    .collect();
                for (x0, x1) in merge(spans) {
                    let first = x0.floor().max(0.0) as usize;
                    let last = (x1.ceil().max(0.0) as usize).min(width);
                    for px in first..last {
                        let overlap = (x1.min(px as f64 + 1.0) - x0.max(px as f64)).max(0.0);
                        cov[py * width + px] += overlap / n as f64;
                    }
                }
            }
        }
        for c in &mut cov {
            *c = c.min(1.0);
        }
        cov
    }

    pub fn render(&self, scene: &Scene<'_>) -> Raster {
        let mut comp = Composite::new(scene.width * scene.height);
        for prim in &scene.primitives {
            let poly = flatten(prim.kind(), prim.points());
            let cov = self.coverage(&poly, scene.stroke_width / 2.0, scene.width, scene.height);
            for (i, c) in cov.into_iter().enumerate() {
                if c > 0.0 {
                    comp.add(i, prim.opacity() * c);
                }
            }
        }
        comp.to_raster(scene.width, scene.height)
    }
}
