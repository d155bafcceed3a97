use nalgebra::Matrix3;
use primdraw::geometry::{
    circle_points, fit_affine, make_primitive, max_radius, parse_svg_path, patch_of, semicircle_points, svg_path,
    Patch, Point2, Primitive, PrimitiveKind,
};
use proptest::prelude::*;
use proptest::test_runner::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pt(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

fn cfg(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

/// Distance from `c` to the closest patch edge along x, and along y; the smaller of the two.
fn edge_room(patch: &Patch, c: Point2) -> f64 {
    let (x0, y0) = (f64::from(patch.col * patch.size), f64::from(patch.row * patch.size));
    let (x1, y1) = (x0 + f64::from(patch.size), y0 + f64::from(patch.size));
    [c.x - x0, x1 - c.x, c.y - y0, y1 - c.y].into_iter().fold(f64::INFINITY, f64::min)
}

fn centre_of(prim: &Primitive) -> Point2 {
    let p = prim.points();
    match prim.kind() {
        PrimitiveKind::Circle => pt((p[1].x + p[3].x) / 2.0, (p[0].y + p[2].y) / 2.0),
        _ => pt((p[0].x + p[2].x) / 2.0, (p[0].y + p[2].y) / 2.0),
    }
}

fn apply(m: &Matrix3<f64>, p: Point2) -> Point2 {
    pt(
        m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)],
        m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)],
    )
}

fn random_affine<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let m: Matrix3<f64> = Matrix3::new(
            rng.random_range(0.5..1.8),
            rng.random_range(-0.6..0.6),
            rng.random_range(-20.0..20.0),
            rng.random_range(-0.6..0.6),
            rng.random_range(0.5..1.8),
            rng.random_range(-20.0..20.0),
            0.0,
            0.0,
            1.0,
        );
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        if det.abs() > 0.2 {
            return m;
        }
    }
}

#[test]
fn random_primitives_respect_patch_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in PrimitiveKind::ALL {
        for i in 0..10_000u32 {
            let size = [32, 56][i as usize % 2];
            let cells = 224 / size;
            let patch = Patch::new(rng.random_range(0..cells), rng.random_range(0..cells), size);
            let prim = make_primitive(kind, i, &patch, 0.3, &mut rng).unwrap();
            assert_eq!(prim.points().len(), kind.control_point_count());
            assert!(prim.points().iter().all(|p| patch.contains(*p)), "{prim:?} escapes {patch:?}");
            match kind {
                PrimitiveKind::Line => {
                    assert!(prim.line_length().unwrap() > 1.0);
                    for p in prim.points() {
                        assert_eq!(patch_of(*p, size, 224, 224).unwrap(), (patch.row, patch.col));
                    }
                }
                _ => {
                    let c = centre_of(&prim);
                    let p = prim.points();
                    let r = match kind {
                        PrimitiveKind::Circle => (p[1].x - p[3].x) / 2.0,
                        _ => (p[2].x - p[0].x) / 2.0,
                    };
                    assert_eq!(patch_of(c, size, 224, 224).unwrap(), (patch.row, patch.col));
                    assert_eq!(c.x.fract(), 0.0);
                    assert_eq!(r.fract(), 0.0);
                    assert!(r >= 1.0 && r <= edge_room(&patch, c), "r {r} at {c:?} in {patch:?}");
                    assert_eq!(max_radius(&patch, c), edge_room(&patch, c));
                }
            }
        }
    }
}

#[test]
fn exact_shape_templates_are_byte_exact() {
    let circle = Primitive::new(0, PrimitiveKind::Circle, circle_points(pt(100.0, 50.0), 10.0), 1.0).unwrap();
    assert_eq!(svg_path(&circle), "M 90,50 a 10,10 0 1,1 20,0 a 10,10 0 1,1 -20,0");
    let up = Primitive::new(1, PrimitiveKind::SemiCircle, semicircle_points(pt(40.0, 40.0), 7.0, true), 1.0).unwrap();
    assert_eq!(svg_path(&up), "M 33,40 a 7,7 0 1,1 14,0");
    let down =
        Primitive::new(2, PrimitiveKind::SemiCircle, semicircle_points(pt(40.0, 40.0), 7.0, false), 1.0).unwrap();
    assert_eq!(svg_path(&down), "M 33,40 a 7,7 0 1,0 14,0");
    let line = Primitive::new(3, PrimitiveKind::Line, vec![pt(1.0, 2.0), pt(3.5, 4.0)], 1.0).unwrap();
    assert_eq!(svg_path(&line), "M 1,2 L 3.5,4");
}

#[test]
fn svg_round_trip_after_random_deformation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..3_000u32 {
        let kind = PrimitiveKind::ALL[i as usize % 3];
        let patch = Patch::new(rng.random_range(0..7), rng.random_range(0..7), 32);
        let mut prim = make_primitive(kind, i, &patch, 0.3, &mut rng).unwrap();
        if i % 2 == 1 {
            let m = random_affine(&mut rng);
            let moved: Vec<Point2> = prim.points().iter().map(|p| apply(&m, *p)).collect();
            prim.set_points(&moved).unwrap();
        }
        let back = parse_svg_path(kind, &svg_path(&prim)).unwrap();
        for (a, b) in prim.points().iter().zip(&back) {
            assert!(a.distance(*b) < 1e-6, "{kind}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn affine_recovery_on_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..1_000u32 {
        let kind = [PrimitiveKind::Circle, PrimitiveKind::SemiCircle][i as usize % 2];
        let patch = Patch::new(rng.random_range(0..7), rng.random_range(0..7), 32);
        let mut prim = make_primitive(kind, i, &patch, 0.3, &mut rng).unwrap();
        let m = random_affine(&mut rng);
        let moved: Vec<Point2> = prim.initial_points().iter().map(|p| apply(&m, *p)).collect();
        prim.set_points(&moved).unwrap();
        let fit = fit_affine(&prim);
        assert!(!fit.degenerate);
        let err = (fit.matrix - m).abs().max();
        assert!(err < 1e-6, "entry error {err} {kind} {:?} {:?} fit {} true {}", prim.initial_points(), prim.points(), fit.matrix, m);
        assert!(fit.residual < 1e-9, "residual {}", fit.residual);
    }
}

#[test]
fn affine_recovery_on_lines_keeps_translations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..200u32 {
        let patch = Patch::new(rng.random_range(0..7), rng.random_range(0..7), 32);
        let mut prim = make_primitive(PrimitiveKind::Line, i, &patch, 0.3, &mut rng).unwrap();
        let (tx, ty) = (rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        let moved: Vec<Point2> = prim.initial_points().iter().map(|p| pt(p.x + tx, p.y + ty)).collect();
        prim.set_points(&moved).unwrap();
        let fit = fit_affine(&prim);
        let expected = Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0);
        assert!((fit.matrix - expected).abs().max() < 1e-9);
        assert!(fit.residual < 1e-9);
    }
}

proptest! {
    #![proptest_config(cfg(2_000))]

    #[test]
    fn patch_of_matches_floor_division(x in 0.0..224.0f64, y in 0.0..224.0f64, size in prop::sample::select(vec![8u32, 16, 32, 56])) {
        let (row, col) = patch_of(pt(x, y), size, 224, 224).unwrap();
        let patch = Patch::new(row, col, size);
        prop_assert!(patch.start().x <= x && x < patch.end().x);
        prop_assert!(patch.start().y <= y && y < patch.end().y);
    }

    #[test]
    fn fit_is_exact_for_any_similarity_of_a_line(
        x0 in 10.0..200.0f64, y0 in 10.0..200.0f64, dx in 2.0..20.0f64, dy in -20.0..20.0f64,
        angle in -3.0..3.0f64, scale in 0.3..3.0f64, tx in -30.0..30.0f64, ty in -30.0..30.0f64,
    ) {
        let mut prim = Primitive::new(0, PrimitiveKind::Line, vec![pt(x0, y0), pt(x0 + dx, y0 + dy)], 0.3).unwrap();
        let (s, c) = angle.sin_cos();
        let m = Matrix3::new(scale * c, -scale * s, tx, scale * s, scale * c, ty, 0.0, 0.0, 1.0);
        let moved: Vec<Point2> = prim.initial_points().iter().map(|p| apply(&m, *p)).collect();
        prim.set_points(&moved).unwrap();
        let fit = fit_affine(&prim);
        for (a, b) in prim.initial_points().iter().zip(prim.points()) {
            prop_assert!(fit.apply(*a).distance(*b) < 1e-9);
        }
        prop_assert!(fit.residual < 1e-9);
    }
}
