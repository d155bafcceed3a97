use std::collections::BTreeSet;

use primdraw::canvas::Canvas;
use primdraw::geometry::{circle_points, make_primitive, semicircle_points, Patch, Point2, Primitive, PrimitiveKind};
use primdraw::optimizer::{run, OptimConfig, TargetL2};
use primdraw::render::{
    export_layers, export_svg, rasterize, read_svg_primitives, svg_document, ColorMode, SoftRasterizer, LAYER_FILES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pt(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

fn three() -> Canvas {
    Canvas::new(
        32,
        32,
        vec![
            Primitive::new(0, PrimitiveKind::Line, vec![pt(2.0, 3.0), pt(25.5, 9.0)], 0.3).unwrap(),
            Primitive::new(1, PrimitiveKind::Circle, circle_points(pt(16.0, 16.0), 6.0), 0.7).unwrap(),
            Primitive::new(2, PrimitiveKind::SemiCircle, semicircle_points(pt(10.0, 24.0), 4.0, false), 1.0).unwrap(),
        ],
    )
}

fn ids_in(doc: &str) -> BTreeSet<u32> {
    read_svg_primitives(doc).unwrap().into_iter().map(|p| p.id).collect()
}

#[test]
fn one_path_per_primitive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.svg");
    export_svg(&three(), &path, 1.5, ColorMode::Black).unwrap();
    let doc = std::fs::read_to_string(&path).unwrap();
    assert_eq!(doc.matches("<path").count(), 3);
    assert!(doc.contains("fill=\"none\""));
    assert!(doc.contains("stroke-width=\"1.5\""));
    assert!(doc.contains("stroke-opacity=\"0.7\""));
    assert!(!doc.contains("stroke=\"red\""));
}

#[test]
fn pruned_primitives_are_omitted() {
    let mut canvas = three();
    // Gating is the only way to prune; drive primitive 1 below the threshold.
    canvas.primitives_mut()[1].set_opacity(0.01);
    primdraw::optimizer::gate_opacity(&mut canvas, 0.05).unwrap();
    let doc = svg_document(32, 32, 1.5, canvas.primitives(), ColorMode::Black);
    assert_eq!(ids_in(&doc), BTreeSet::from([0, 2]));
}

#[test]
fn round_trip_recovers_points_of_deformed_canvas() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut prims = Vec::new();
    for i in 0..60u32 {
        let kind = PrimitiveKind::ALL[i as usize % 3];
        let patch = Patch::new(rng.random_range(0..7), rng.random_range(0..7), 32);
        let mut p = make_primitive(kind, i, &patch, rng.random_range(0.05..1.0), &mut rng).unwrap();
        let moved: Vec<Point2> = p
            .points()
            .iter()
            .map(|q| pt(q.x + rng.random_range(-3.0..3.0), q.y + rng.random_range(-3.0..3.0)))
            .collect();
        p.set_points(&moved).unwrap();
        prims.push(p);
    }
    let canvas = Canvas::new(224, 224, prims);
    let doc = svg_document(224, 224, 1.5, canvas.primitives(), ColorMode::PerKind);
    let back = read_svg_primitives(&doc).unwrap();
    assert_eq!(back.len(), 60);
    for (orig, parsed) in canvas.primitives().iter().zip(&back) {
        assert_eq!(orig.id(), parsed.id);
        assert_eq!(orig.kind(), parsed.kind);
        assert_eq!(orig.opacity(), parsed.opacity);
        for (a, b) in orig.points().iter().zip(&parsed.points) {
            assert!(a.distance(*b) < 1e-6);
        }
    }
}

#[test]
fn layers_partition_the_composite() {
    let canvas = three();
    let target = rasterize(&canvas, None, 1.5, &SoftRasterizer::default()).unwrap();
    let cfg = OptimConfig {
        num_iter: 0,
        ..OptimConfig::default()
    };
    let out = run(canvas, &mut TargetL2::new(target), &SoftRasterizer::default(), &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_layers(&out.log, dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    let read = |name: &str| std::fs::read_to_string(dir.path().join("iter_0").join(name)).unwrap();
    let composite = ids_in(&read("composite.svg"));
    let parts: Vec<BTreeSet<u32>> = ["circles.svg", "lines.svg", "semicircles.svg"].iter().map(|n| ids_in(&read(n))).collect();
    let union: BTreeSet<u32> = parts.iter().flatten().copied().collect();
    assert_eq!(union, composite);
    assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), composite.len());
    assert_eq!(ids_in(&read("overlay.svg")), composite);
    assert!(read("circles.svg").contains("stroke=\"blue\""));
    assert!(read("lines.svg").contains("stroke=\"red\""));
    assert!(read("semicircles.svg").contains("stroke=\"green\""));
}

#[test]
fn thousand_iterations_give_eleven_snapshot_groups() {
    let canvas = Canvas::new(
        16,
        16,
        vec![Primitive::new(0, PrimitiveKind::Circle, circle_points(pt(8.0, 8.0), 4.0), 0.5).unwrap()],
    );
    let target = rasterize(&canvas, None, 1.5, &SoftRasterizer::default()).unwrap();
    let out = run(canvas, &mut TargetL2::new(target), &SoftRasterizer::default(), &OptimConfig::default(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_layers(&out.log, dir.path()).unwrap();
    assert_eq!(files.len(), 11 * LAYER_FILES.len());
    for t in (0..=1000).step_by(100) {
        for name in LAYER_FILES {
            assert!(dir.path().join(format!("iter_{t}")).join(name).is_file());
        }
    }
}
