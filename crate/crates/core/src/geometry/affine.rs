//! Recovery of the affine map a primitive has undergone since creation.

use nalgebra::{Matrix2, Matrix3, Vector2};

use super::{Point2, Primitive};

/// Homogeneous affine transform taking a primitive's initial control points
/// to its current ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    pub matrix: Matrix3<f64>,
    /// RMS distance between transformed initial points and current points.
    pub residual: f64,
    /// Initial points were collinear (or coincident); a similarity transform
    /// was fitted instead of a general affine map.
    pub degenerate: bool,
}

impl AffineFit {
    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.matrix;
        Point2::new(
            m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)],
            m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)],
        )
    }
}

fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let s = points.iter().fold(Point2::default(), |a, p| a.add(*p));
    s.scale(1.0 / n)
}

fn homogeneous(a: Matrix2<f64>, t: Vector2<f64>) -> Matrix3<f64> {
    Matrix3::new(
        a[(0, 0)],
        a[(0, 1)],
        t.x,
        a[(1, 0)],
        a[(1, 1)],
        t.y,
        0.0,
        0.0,
        1.0,
    )
}

/// Least-squares affine fit from initial to current control points.
///
/// Coordinates are centred on the initial centroid and the solution is the
/// minimum-norm deviation from the identity. That is the plain least-squares
/// answer whenever the system is determined (three or four affinely
/// independent points); for a two-point line it picks the smallest change
/// consistent with the motion, so pure translations stay pure translations.
pub fn fit_affine(prim: &Primitive) -> AffineFit {
    let from = prim.initial_points();
    let to = prim.points();
    let n = from.len();
    let c0 = centroid(from);

    let shift = centroid(to).sub(c0);
    // Gram matrix G of the centred initial points and cross moments B of the
    // centred displacements against them; the linear part is I + B G^+.
    let mut gram = Matrix2::zeros();
    let mut cross = Matrix2::zeros();
    for (p, q) in from.iter().zip(to) {
        let u = p.sub(c0);
        let d = q.sub(*p).sub(shift);
        let u = Vector2::new(u.x, u.y);
        gram += u * u.transpose();
        cross += Vector2::new(d.x, d.y) * u.transpose();
    }
    let (tr, det) = (gram.trace(), gram.determinant());
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let (s_max, s_min) = (((tr + disc) / 2.0).sqrt(), ((tr - disc) / 2.0).max(0.0).sqrt());
    let degenerate = s_max == 0.0 || (n >= 3 && s_min <= 1e-9 * s_max);

    let matrix = if degenerate {
        similarity(from, to)
    } else {
        // A line's G has rank one, and then G^+ = G / tr(G)^2.
        let gram_pinv = if n >= 3 {
            gram.try_inverse().expect("non-degenerate points give an invertible Gram matrix")
        } else {
            gram / (tr * tr)
        };
        let d = cross * gram_pinv;
        let a = Matrix2::identity() + d;
        let s = Vector2::new(c0.x + shift.x, c0.y + shift.y);
        homogeneous(a, s - a * Vector2::new(c0.x, c0.y))
    };

    let mut fit = AffineFit {
        matrix,
        residual: 0.0,
        degenerate,
    };
    let sq: f64 = from
        .iter()
        .zip(to)
        .map(|(p, q)| {
            let d = fit.apply(*p).sub(*q);
            d.x * d.x + d.y * d.y
        })
        .sum();
    fit.residual = (sq / n as f64).sqrt();
    fit
}

/// Scaled rotation plus translation minimizing squared error (Umeyama).
fn similarity(from: &[Point2], to: &[Point2]) -> Matrix3<f64> {
    let n = from.len() as f64;
    let (mp, mq) = (centroid(from), centroid(to));
    let mut cov = Matrix2::zeros();
    let mut var_p = 0.0;
    for (p, q) in from.iter().zip(to) {
        let dp = Vector2::new(p.x - mp.x, p.y - mp.y);
        let dq = Vector2::new(q.x - mq.x, q.y - mq.y);
        cov += dq * dp.transpose();
        var_p += dp.norm_squared();
    }
    cov /= n;
    var_p /= n;
    if var_p == 0.0 {
        return homogeneous(Matrix2::identity(), Vector2::new(mq.x - mp.x, mq.y - mp.y));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix2::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s[(1, 1)] = -1.0;
    }
    let rot = u * s * v_t;
    let scale = (Matrix2::from_diagonal(&svd.singular_values) * s).trace() / var_p;
    let a = rot * scale;
    let t = Vector2::new(mq.x, mq.y) - a * Vector2::new(mp.x, mp.y);
    homogeneous(a, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{circle_points, PrimitiveKind};

    fn moved(kind: PrimitiveKind, init: Vec<Point2>, f: impl Fn(Point2) -> Point2) -> Primitive {
        let mut p = Primitive::new(1, kind, init.clone(), 0.3).unwrap();
        let cur: Vec<_> = init.into_iter().map(f).collect();
        p.set_points(&cur).unwrap();
        p
    }

    #[test]
    fn identity_for_every_kind() {
        let line = vec![Point2::new(3.0, 4.0), Point2::new(20.0, 9.0)];
        let semi = vec![Point2::new(0.0, 5.0), Point2::new(5.0, 0.0), Point2::new(10.0, 5.0)];
        let circ = circle_points(Point2::new(12.0, 12.0), 5.0);
        for (kind, pts) in [
            (PrimitiveKind::Line, line),
            (PrimitiveKind::SemiCircle, semi),
            (PrimitiveKind::Circle, circ),
        ] {
            let fit = fit_affine(&Primitive::new(0, kind, pts, 0.3).unwrap());
            assert!((fit.matrix - Matrix3::identity()).abs().max() < 1e-12, "{kind}");
            assert!(fit.residual < 1e-12);
            assert!(!fit.degenerate);
        }
    }

    #[test]
    fn translation_recovered_for_line_and_circle() {
        let shift = |p: Point2| Point2::new(p.x + 5.0, p.y - 3.0);
        for prim in [
            moved(
                PrimitiveKind::Line,
                vec![Point2::new(3.0, 4.0), Point2::new(20.0, 9.0)],
                shift,
            ),
            moved(PrimitiveKind::Circle, circle_points(Point2::new(9.0, 9.0), 4.0), shift),
        ] {
            let fit = fit_affine(&prim);
            let expect = Matrix3::new(1.0, 0.0, 5.0, 0.0, 1.0, -3.0, 0.0, 0.0, 1.0);
            assert!((fit.matrix - expect).abs().max() < 1e-10, "{}", fit.matrix);
            assert!(fit.residual < 1e-10);
        }
    }

    #[test]
    fn collinear_semicircle_falls_back_to_similarity() {
        let init = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)];
        // Rotate by 90 degrees and scale by 2 about the origin.
        let prim = moved(PrimitiveKind::SemiCircle, init, |p| Point2::new(-2.0 * p.y, 2.0 * p.x));
        let fit = fit_affine(&prim);
        assert!(fit.degenerate);
        assert!(fit.residual < 1e-12);
        let expect = Matrix3::new(0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((fit.matrix - expect).abs().max() < 1e-12);
    }

    #[test]
    fn last_row_is_homogeneous() {
        let prim = moved(
            PrimitiveKind::Circle,
            circle_points(Point2::new(9.0, 9.0), 4.0),
            |p| Point2::new(p.x * 1.5 + p.y * 0.1 + 2.0, p.y * 0.7 - 1.0),
        );
        let fit = fit_affine(&prim);
        assert_eq!(fit.matrix.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    }
}
