use primdraw::canvas::Canvas;
use primdraw::geometry::{circle_points, semicircle_points, Point2, Primitive, PrimitiveKind};
use primdraw::optimizer::{
    adam_update, gate_opacity, pld_mask, run, schedule_lr, step, AdamState, CanvasGrad, DropoutMask, Evaluation,
    JsonlSink, Objective, OptimConfig, TargetL2, TrajectoryLog,
};
use primdraw::render::{rasterize, RasterizerBackend, Scene, SoftRasterizer};
use primdraw::{Error, Raster, Result};
use proptest::prelude::*;
use proptest::test_runner::Config;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pt(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

/// Three lines, three circles and three semicircles on a 64x64 canvas.
fn nine(opacity: f64) -> Vec<Primitive> {
    let centres = [
        (12.0, 12.0),
        (32.0, 14.0),
        (52.0, 12.0),
        (12.0, 32.0),
        (32.0, 32.0),
        (52.0, 32.0),
        (12.0, 52.0),
        (32.0, 50.0),
        (52.0, 52.0),
    ];
    centres
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let id = i as u32;
            match i % 3 {
                0 => Primitive::new(id, PrimitiveKind::Line, vec![pt(x - 6.0, y - 4.0), pt(x + 6.0, y + 4.0)], opacity),
                1 => Primitive::new(id, PrimitiveKind::Circle, circle_points(pt(x, y), 5.0), opacity),
                _ => Primitive::new(id, PrimitiveKind::SemiCircle, semicircle_points(pt(x, y), 6.0, i % 2 == 0), opacity),
            }
            .unwrap()
        })
        .collect()
}

fn jittered(seed: u64) -> Canvas {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prims = nine(0.3)
        .into_iter()
        .map(|p| {
            let pts: Vec<Point2> = p
                .points()
                .iter()
                .map(|q| pt(q.x + rng.random_range(-1.5..1.5), q.y + rng.random_range(-1.5..1.5)))
                .collect();
            Primitive::new(p.id(), p.kind(), pts, 0.3).unwrap()
        })
        .collect();
    Canvas::new(64, 64, prims)
}

fn target() -> Raster {
    rasterize(&Canvas::new(64, 64, nine(1.0)), None, 1.5, &SoftRasterizer::default()).unwrap()
}

/// Textbook Adam on one scalar.
fn adam_oracle(p0: f64, grads: &[f64], lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    let mut out = Vec::new();
    for (k, g) in grads.iter().enumerate() {
        let t = (k + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        p -= lr * mh / (vh.sqrt() + eps);
        out.push(p);
    }
    out
}

const GRADS: [f64; 10] = [0.5, -0.2, 1.3, 0.0, -2.0, 0.7, 0.05, -0.4, 3.0, -1.1];

#[test]
fn adam_scalar_matches_oracle() {
    let expected = adam_oracle(3.0, &GRADS, 0.1);
    let (mut p, mut m, mut v) = (3.0, 0.0, 0.0);
    for (k, g) in GRADS.iter().enumerate() {
        adam_update(&mut p, *g, &mut m, &mut v, k as u32 + 1, 0.1, (0.9, 0.999), 1e-8);
        assert!((p - expected[k]).abs() < 1e-10);
    }
}

#[test]
fn canvas_step_matches_oracle_on_one_coordinate() {
    let mut canvas = Canvas::new(
        64,
        64,
        vec![Primitive::new(0, PrimitiveKind::Line, vec![pt(20.0, 20.0), pt(40.0, 30.0)], 0.5).unwrap()],
    );
    let cfg = OptimConfig::default();
    let mut state = AdamState::new(&canvas);
    let mask = DropoutMask::all(1);
    let expected = adam_oracle(40.0, &GRADS, 0.7);
    for (k, g) in GRADS.iter().enumerate() {
        let mut grad = CanvasGrad::zeros(&canvas);
        grad.points[0][1].x = *g;
        step(&mut canvas, &mask, &grad, &mut state, 0.7, &cfg).unwrap();
        let p = canvas.primitives()[0].points();
        assert!((p[1].x - expected[k]).abs() < 1e-10);
        assert_eq!(p[0], pt(20.0, 20.0));
        assert_eq!(p[1].y, 30.0);
        assert_eq!(canvas.primitives()[0].opacity(), 0.5);
    }
}

#[test]
fn zero_gradient_leaves_canvas_unchanged() {
    let mut canvas = jittered(1);
    let before = canvas.clone();
    let mut state = AdamState::new(&canvas);
    let grad = CanvasGrad::zeros(&canvas);
    step(&mut canvas, &DropoutMask::all(9), &grad, &mut state, 1.0, &OptimConfig::default()).unwrap();
    assert_eq!(canvas, before);
}

#[test]
fn masked_primitive_and_moments_untouched() {
    let mut canvas = jittered(2);
    let mut state = AdamState::new(&canvas);
    let mut grad = CanvasGrad::zeros(&canvas);
    for (pts, a) in grad.points.iter_mut().zip(grad.opacity.iter_mut()) {
        pts.iter_mut().for_each(|p| *p = pt(0.3, -0.2));
        *a = -0.5;
    }
    let mut bits = vec![true; 9];
    bits[4] = false;
    let before = canvas.primitives()[4].clone();
    let moments = state.clone();
    step(&mut canvas, &DropoutMask::from_bits(bits), &grad, &mut state, 1.0, &OptimConfig::default()).unwrap();
    assert_eq!(canvas.primitives()[4], before);
    assert_eq!(state.moments(4), moments.moments(4));
    assert_eq!(state.steps(4), 0);
    assert_ne!(canvas.primitives()[3], jittered(2).primitives()[3]);
}

#[test]
fn non_finite_gradient_names_primitive() {
    let mut canvas = jittered(3);
    let mut state = AdamState::new(&canvas);
    let mut grad = CanvasGrad::zeros(&canvas);
    grad.points[6][0].y = f64::NAN;
    let before = canvas.clone();
    let err = step(&mut canvas, &DropoutMask::all(9), &grad, &mut state, 1.0, &OptimConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient { id: 6 }), "{err}");
    assert_eq!(canvas, before);
}

#[test]
fn pld_mean_active_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 10_000;
    let active: usize = (0..draws).map(|_| pld_mask(150, 0.05, &mut rng).active_count()).sum();
    let mean = active as f64 / (draws * 150) as f64;
    assert!((mean - 0.95).abs() < 0.01, "mean active fraction {mean}");
}

#[test]
fn schedule_matches_milestones() {
    let cfg = OptimConfig::default();
    assert_eq!(schedule_lr(499, &cfg), 1.0);
    assert_eq!(schedule_lr(500, &cfg), 0.4);
    assert_eq!(schedule_lr(750, &cfg), 0.1);
}

#[test]
fn zero_iterations_records_only_the_start() {
    let canvas = jittered(4);
    let cfg = OptimConfig {
        num_iter: 0,
        ..OptimConfig::default()
    };
    let out = run(canvas.clone(), &mut TargetL2::new(target()), &SoftRasterizer::default(), &cfg, None).unwrap();
    assert_eq!(out.canvas, canvas);
    assert_eq!(out.log.records.len(), 1);
    assert_eq!(out.log.records[0].iter, 0);
}

#[test]
fn synthetic_target_loss_drops_ninety_percent() {
    let cfg = OptimConfig {
        num_iter: 200,
        seed: 3,
        ..OptimConfig::default()
    };
    assert_eq!(cfg.pld_prob, 0.05);
    let out = run(jittered(11), &mut TargetL2::new(target()), &SoftRasterizer::default(), &cfg, None).unwrap();
    let first = out.log.records.first().unwrap().loss_total;
    let last = out.log.records.last().unwrap().loss_total;
    assert!(last <= 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn snapshot_cadence_and_run_invariants() {
    let canvas = Canvas::new(
        16,
        16,
        vec![
            Primitive::new(0, PrimitiveKind::Line, vec![pt(2.0, 3.0), pt(12.0, 9.0)], 0.3).unwrap(),
            Primitive::new(1, PrimitiveKind::Circle, circle_points(pt(8.0, 8.0), 4.0), 0.3).unwrap(),
        ],
    );
    let mut darker = canvas.clone();
    darker.primitives_mut().iter_mut().for_each(|p| p.set_opacity(0.8));
    let tgt = rasterize(&darker, None, 1.5, &SoftRasterizer::default()).unwrap();
    let cfg = OptimConfig::default();
    let out = run(canvas, &mut TargetL2::new(tgt), &SoftRasterizer::default(), &cfg, None).unwrap();
    let iters: Vec<usize> = out.log.records.iter().map(|r| r.iter).collect();
    assert_eq!(iters, (0..=10).map(|k| k * 100).collect::<Vec<_>>());
    let mut alive = usize::MAX;
    let mut last_lr = f64::INFINITY;
    for rec in &out.log.records {
        assert!(rec.primitives.iter().all(|p| (0.0..=1.0).contains(&p.opacity)));
        let ids: Vec<u32> = rec.primitives.iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![0, 1]);
        let now = rec.primitives.iter().filter(|p| !p.pruned).count();
        assert!(now <= alive);
        alive = now;
        assert!(rec.lr <= last_lr);
        last_lr = rec.lr;
    }
}

#[test]
fn masked_primitives_never_move_within_an_iteration() {
    let cfg = OptimConfig {
        num_iter: 100,
        snapshot_every: 1,
        pld_prob: 0.3,
        ..OptimConfig::default()
    };
    let out = run(jittered(5), &mut TargetL2::new(target()), &SoftRasterizer::default(), &cfg, None).unwrap();
    assert_eq!(out.log.records.len(), 101);
    let mut masked = 0;
    for pair in out.log.records.windows(2) {
        for (i, active) in pair[0].mask.iter().enumerate() {
            if !active {
                masked += 1;
                let (a, b) = (&pair[0].primitives[i], &pair[1].primitives[i]);
                assert_eq!(a.control_points, b.control_points);
                assert_eq!(a.opacity, b.opacity);
            }
        }
    }
    assert!(masked > 0);
}

#[test]
fn identical_configs_give_identical_logs() {
    let cfg = OptimConfig {
        num_iter: 60,
        snapshot_every: 10,
        gate_every: 20,
        seed: 42,
        ..OptimConfig::default()
    };
    let go = || {
        run(jittered(6), &mut TargetL2::new(target()), &SoftRasterizer::default(), &cfg, None)
            .unwrap()
            .log
            .to_jsonl()
            .unwrap()
    };
    assert_eq!(go(), go());
}

#[test]
fn without_dropout_or_gating_run_is_plain_adam() {
    let cfg = OptimConfig {
        num_iter: 20,
        pld_prob: 0.0,
        opacity_threshold: 0.0,
        ..OptimConfig::default()
    };
    let backend = SoftRasterizer::default();
    let tgt = target();
    let out = run(jittered(7), &mut TargetL2::new(tgt.clone()), &backend, &cfg, None).unwrap();

    // Reference loop: full render, L2 gradient, textbook Adam per scalar.
    let mut canvas = jittered(7);
    let n = canvas.len();
    let mut m: Vec<Vec<f64>> = canvas.primitives().iter().map(|p| vec![0.0; 2 * p.points().len() + 1]).collect();
    let mut v = m.clone();
    for t in 0..cfg.num_iter {
        let lr = schedule_lr(t, &cfg);
        let scene = Scene::from_canvas(&canvas, None, cfg.stroke_width);
        let (raster, tape) = backend.render_differentiable(&scene).unwrap();
        let d: Vec<f64> = raster.data().iter().zip(tgt.data()).map(|(a, b)| 2.0 * (a - b)).collect();
        let g = tape.backward(&d).unwrap();
        drop(scene);
        let k = (t + 1) as i32;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64| {
            *m = 0.9 * *m + 0.1 * g;
            *v = 0.999 * *v + 0.001 * g * g;
            let mh = *m / (1.0 - 0.9f64.powi(k));
            let vh = *v / (1.0 - 0.999f64.powi(k));
            *p -= lr * mh / (vh.sqrt() + 1e-8);
        };
        for i in 0..n {
            let prim = &canvas.primitives()[i];
            let mut pts = prim.points().to_vec();
            for (j, q) in pts.iter_mut().enumerate() {
                update(&mut q.x, g.points[i][j].x, &mut m[i][2 * j], &mut v[i][2 * j], lr);
                update(&mut q.y, g.points[i][j].y, &mut m[i][2 * j + 1], &mut v[i][2 * j + 1], lr);
                q.x = q.x.clamp(0.0, 64.0);
                q.y = q.y.clamp(0.0, 64.0);
            }
            let mut a = prim.opacity();
            let last = m[i].len() - 1;
            update(&mut a, g.opacity[i], &mut m[i][last], &mut v[i][last], lr * cfg.opacity_lr_scale);
            let p = &mut canvas.primitives_mut()[i];
            p.set_points(&pts).unwrap();
            p.set_opacity(a);
        }
    }
    for (a, b) in out.canvas.primitives().iter().zip(canvas.primitives()) {
        for (p, q) in a.points().iter().zip(b.points()) {
            assert!(p.distance(*q) < 1e-9, "{p:?} vs {q:?}");
        }
        assert!((a.opacity() - b.opacity()).abs() < 1e-12);
    }
}

/// Fails once it has been evaluated `fail_at + 1` times.
struct FailsAt {
    inner: TargetL2,
    calls: usize,
    fail_at: usize,
}

impl Objective for FailsAt {
    fn evaluate(&mut self, raster: &Raster, rng: &mut dyn RngCore) -> Result<Evaluation> {
        if self.calls == self.fail_at {
            return Err(Error::Backend {
                backend: "flaky".into(),
                reason: "connection reset".into(),
            });
        }
        self.calls += 1;
        self.inner.evaluate(raster, rng)
    }
}

#[test]
fn failure_keeps_completed_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectory.jsonl");
    let mut sink = JsonlSink::create(&path).unwrap();
    let mut objective = FailsAt {
        inner: TargetL2::new(target()),
        calls: 0,
        fail_at: 150,
    };
    let cfg = OptimConfig {
        num_iter: 300,
        ..OptimConfig::default()
    };
    let failure = run(jittered(8), &mut objective, &SoftRasterizer::default(), &cfg, Some(&mut sink)).unwrap_err();
    assert_eq!(failure.iter, 150);
    assert!(matches!(failure.error, Error::Backend { .. }));
    assert_eq!(failure.log.records.len(), 2);
    let on_disk = TrajectoryLog::read_jsonl(&path).unwrap();
    assert!(!on_disk.truncated);
    assert_eq!(on_disk.log, failure.log);
}

fn canvas_with_opacities(ops: &[f64]) -> Canvas {
    let prims = ops
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            Primitive::new(i as u32, PrimitiveKind::Line, vec![pt(1.0, 1.0), pt(5.0, 5.0)], a).unwrap()
        })
        .collect();
    Canvas::new(8, 8, prims)
}

#[test]
fn gating_examples() {
    let mut c = canvas_with_opacities(&[0.01, 0.3, 0.9]);
    assert_eq!(gate_opacity(&mut c, 0.05).unwrap(), vec![0]);
    let mut c = canvas_with_opacities(&[0.3, 0.3]);
    assert!(gate_opacity(&mut c, 0.0).unwrap().is_empty());
    let mut c = canvas_with_opacities(&[0.01, 0.02]);
    assert!(gate_opacity(&mut c, 0.05).is_err());
}

proptest! {
    #![proptest_config(Config { cases: 300, failure_persistence: None, ..Config::default() })]

    #[test]
    fn gating_sets_are_nested(ops in prop::collection::vec(0.0..1.0f64, 1..30)) {
        let mut lo = canvas_with_opacities(&ops);
        let mut hi = canvas_with_opacities(&ops);
        if let (Ok(a), Ok(b)) = (gate_opacity(&mut lo, 0.05), gate_opacity(&mut hi, 0.1)) {
            prop_assert!(a.iter().all(|id| b.contains(id)));
        }
    }

    #[test]
    fn schedule_never_increases(num_iter in 1usize..5000, t in 0usize..5000) {
        let cfg = OptimConfig { num_iter, ..OptimConfig::default() };
        prop_assume!(t + 1 < num_iter);
        prop_assert!(schedule_lr(t + 1, &cfg) <= schedule_lr(t, &cfg));
    }
}
