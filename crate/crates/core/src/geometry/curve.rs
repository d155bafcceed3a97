//! Cubic Bézier form of the curved primitives.
//!
//! Handles are linear in the on-curve points, so the whole curve (and any
//! polyline flattened from it) is a fixed linear combination of the control
//! points. The rasterizer relies on that to push gradients back through the
//! flattening with a constant coefficient table per kind.

use std::sync::OnceLock;

use super::{Point2, PrimitiveKind};

/// Handle length of the standard four-segment cubic circle, per unit radius.
pub const ARC_KAPPA: f64 = 0.552_284_749_830_793_6;

/// Polyline samples per cubic segment.
const SAMPLES_PER_SEGMENT: usize = 12;

type Coeffs = [f64; 4];

fn unit(i: usize) -> Coeffs {
    let mut c = [0.0; 4];
    c[i] = 1.0;
    c
}

fn axpy(acc: &mut Coeffs, s: f64, x: &Coeffs) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += s * b;
    }
}

/// Bézier control polygons of a kind, each entry a coefficient vector over
/// the on-curve points.
fn segment_coeffs(kind: PrimitiveKind) -> Vec<[Coeffs; 4]> {
    let half = ARC_KAPPA / 2.0;
    match kind {
        PrimitiveKind::Line => {
            let (a, b) = (unit(0), unit(1));
            let mut h1 = [0.0; 4];
            axpy(&mut h1, 2.0 / 3.0, &a);
            axpy(&mut h1, 1.0 / 3.0, &b);
            let mut h2 = [0.0; 4];
            axpy(&mut h2, 1.0 / 3.0, &a);
            axpy(&mut h2, 2.0 / 3.0, &b);
            vec![[a, h1, h2, b]]
        }
        PrimitiveKind::Circle => (0..4)
            .map(|i| {
                let (prev, cur, next, next2) = ((i + 3) % 4, i, (i + 1) % 4, (i + 2) % 4);
                let mut out = unit(cur);
                axpy(&mut out, half, &unit(next));
                axpy(&mut out, -half, &unit(prev));
                let mut inn = unit(next);
                axpy(&mut inn, -half, &unit(next2));
                axpy(&mut inn, half, &unit(cur));
                [unit(cur), out, inn, unit(next)]
            })
            .collect(),
        PrimitiveKind::SemiCircle => {
            let (a, x, b) = (unit(0), unit(1), unit(2));
            // a + kappa * (apex - midpoint(a, b))
            let mut out_a = a;
            axpy(&mut out_a, ARC_KAPPA, &x);
            axpy(&mut out_a, -half, &a);
            axpy(&mut out_a, -half, &b);
            let mut in_x = x;
            axpy(&mut in_x, -half, &b);
            axpy(&mut in_x, half, &a);
            let mut out_x = x;
            axpy(&mut out_x, half, &b);
            axpy(&mut out_x, -half, &a);
            let mut in_b = b;
            axpy(&mut in_b, ARC_KAPPA, &x);
            axpy(&mut in_b, -half, &a);
            axpy(&mut in_b, -half, &b);
            vec![[a, out_a, in_x, x], [x, out_x, in_b, b]]
        }
    }
}

fn combine(coeffs: &Coeffs, points: &[Point2]) -> Point2 {
    points
        .iter()
        .zip(coeffs)
        .fold(Point2::default(), |acc, (p, &w)| acc.add(p.scale(w)))
}

/// Cubic Bézier segments `[p0, h0, h1, p1]` through the on-curve points.
/// Circles form a closed chain, semicircles an open one.
pub fn cubic_segments(kind: PrimitiveKind, points: &[Point2]) -> Vec<[Point2; 4]> {
    segment_coeffs(kind)
        .iter()
        .map(|seg| {
            [
                combine(&seg[0], points),
                combine(&seg[1], points),
                combine(&seg[2], points),
                combine(&seg[3], points),
            ]
        })
        .collect()
}

/// Linear map from on-curve control points to polyline vertices.
#[derive(Debug, Clone)]
pub struct FlattenBasis {
    kind: PrimitiveKind,
    weights: Vec<Coeffs>,
}

impl FlattenBasis {
    fn build(kind: PrimitiveKind) -> Self {
        let weights = match kind {
            PrimitiveKind::Line => vec![unit(0), unit(1)],
            _ => {
                let segs = segment_coeffs(kind);
                let mut weights = Vec::with_capacity(segs.len() * SAMPLES_PER_SEGMENT + 1);
                for seg in &segs {
                    for s in 0..SAMPLES_PER_SEGMENT {
                        let t = s as f64 / SAMPLES_PER_SEGMENT as f64;
                        let u = 1.0 - t;
                        let bern = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
                        let mut w = [0.0; 4];
                        for (b, c) in bern.iter().zip(seg) {
                            axpy(&mut w, *b, c);
                        }
                        weights.push(w);
                    }
                }
                weights.push(segs[segs.len() - 1][3]);
                weights
            }
        };
        FlattenBasis { kind, weights }
    }

    pub fn get(kind: PrimitiveKind) -> &'static FlattenBasis {
        static BASES: OnceLock<[FlattenBasis; 3]> = OnceLock::new();
        let bases = BASES.get_or_init(|| PrimitiveKind::ALL.map(FlattenBasis::build));
        match kind {
            PrimitiveKind::Line => &bases[0],
            PrimitiveKind::Circle => &bases[1],
            PrimitiveKind::SemiCircle => &bases[2],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of on-curve point `j` in polyline vertex `m`.
    pub fn weight(&self, m: usize, j: usize) -> f64 {
        self.weights[m][j]
    }

    pub fn apply(&self, points: &[Point2]) -> Vec<Point2> {
        debug_assert_eq!(points.len(), self.kind.control_point_count());
        self.weights.iter().map(|w| combine(w, points)).collect()
    }

    /// Pulls polyline-vertex gradients back onto the on-curve points.
    pub fn pull_back(&self, vertex_grads: &[Point2], out: &mut [Point2]) {
        for (w, g) in self.weights.iter().zip(vertex_grads) {
            for (o, &c) in out.iter_mut().zip(w) {
                if c != 0.0 {
                    o.x += c * g.x;
                    o.y += c * g.y;
                }
            }
        }
    }
}

/// Polyline approximation of a primitive's stroke centreline.
pub fn flatten(kind: PrimitiveKind, points: &[Point2]) -> Vec<Point2> {
    FlattenBasis::get(kind).apply(points)
}
