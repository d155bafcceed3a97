//! The synthesis loop: primitive-level dropout, differentiable render,
//! scoring, Adam steps, periodic opacity gating, and snapshots.

mod adam;
mod trajectory;

pub use adam::{adam_update, step, AdamState, CanvasGrad};
pub use trajectory::{
    JsonlSink, LoadedLog, PrimitiveRecord, SnapshotSink, TrajectoryLog, TrajectoryRecord, SCHEMA_VERSION,
};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canvas::Canvas;
use crate::render::{wrap, RasterizerBackend, Scene, DEFAULT_STROKE_WIDTH};
use crate::{Error, Raster, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub num_iter: usize,
    pub lr0: f64,
    /// `(fraction of num_iter, lr)` pairs, fractions strictly increasing.
    pub lr_milestones: Vec<(f64, f64)>,
    pub pld_prob: f64,
    /// Opacity at or below which a primitive is pruned at gating time.
    pub opacity_threshold: f64,
    pub gate_every: usize,
    pub snapshot_every: usize,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Opacity step size relative to the coordinate step size.
    pub opacity_lr_scale: f64,
    pub stroke_width: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            num_iter: 1000,
            lr0: 1.0,
            lr_milestones: vec![(0.5, 0.4), (0.75, 0.1)],
            pld_prob: 0.05,
            opacity_threshold: 0.05,
            gate_every: 50,
            snapshot_every: 100,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            opacity_lr_scale: 0.01,
            stroke_width: DEFAULT_STROKE_WIDTH,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pld_prob) {
            return Err(Error::domain("pld probability must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.opacity_threshold) {
            return Err(Error::domain("opacity threshold must lie in [0, 1)"));
        }
        let mut prev = 0.0;
        for &(frac, lr) in &self.lr_milestones {
            if !(frac > prev && frac < 1.0) {
                return Err(Error::domain("lr milestone fractions must be strictly increasing in (0, 1)"));
            }
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::domain("milestone learning rates must be finite and non-negative"));
            }
            prev = frac;
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::domain("lr0 must be finite and non-negative"));
        }
        if self.gate_every == 0 || self.snapshot_every == 0 {
            return Err(Error::domain("gate_every and snapshot_every must be at least 1"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) || self.adam_eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::domain("adam betas must lie in [0, 1) and eps be positive"));
        }
        if !(self.opacity_lr_scale.is_finite() && self.opacity_lr_scale >= 0.0) {
            return Err(Error::domain("opacity lr scale must be finite and non-negative"));
        }
        if !(self.stroke_width.is_finite() && self.stroke_width > 0.0) {
            return Err(Error::domain("stroke width must be positive"));
        }
        Ok(())
    }
}

/// Step learning-rate schedule: `lr0` until the first milestone, then each
/// milestone's rate from `int(num_iter * fraction)` on.
pub fn schedule_lr(t: usize, cfg: &OptimConfig) -> f64 {
    let mut lr = cfg.lr0;
    for &(frac, rate) in &cfg.lr_milestones {
        if t >= (cfg.num_iter as f64 * frac) as usize {
            lr = rate;
        }
    }
    lr
}

/// Which primitives take part in one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    bits: Vec<bool>,
}

impl DropoutMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        DropoutMask { bits }
    }

    pub fn all(n: usize) -> Self {
        DropoutMask { bits: vec![true; n] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Independent Bernoulli(1 - p) bits; an all-false draw is redrawn.
pub fn pld_mask<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> DropoutMask {
    pld_mask_alive(&vec![true; n], p, rng)
}

/// Like [`pld_mask`] but only over `alive` entries; the rest stay inactive.
pub fn pld_mask_alive<R: Rng + ?Sized>(alive: &[bool], p: f64, rng: &mut R) -> DropoutMask {
    assert!((0.0..1.0).contains(&p), "pld probability must lie in [0, 1)");
    if !alive.iter().any(|a| *a) {
        return DropoutMask::from_bits(vec![false; alive.len()]);
    }
    loop {
        let bits: Vec<bool> = alive.iter().map(|&a| a && !rng.random_bool(p)).collect();
        if bits.iter().any(|b| *b) {
            return DropoutMask { bits };
        }
    }
}

/// Prunes every live primitive whose opacity is at or below `k` and returns
/// their ids. `k = 0` disables gating. Refuses to prune the whole canvas.
pub fn gate_opacity(canvas: &mut Canvas, k: f64) -> Result<Vec<u32>> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::domain("opacity threshold must lie in [0, 1)"));
    }
    if k == 0.0 {
        return Ok(Vec::new());
    }
    let doomed: Vec<usize> = (0..canvas.len())
        .filter(|&i| {
            let p = &canvas.primitives()[i];
            !p.is_pruned() && p.opacity() <= k
        })
        .collect();
    if !doomed.is_empty() && doomed.len() == canvas.alive_count() {
        return Err(Error::domain(format!(
            "opacity threshold {k} would prune all {} remaining primitives",
            doomed.len()
        )));
    }
    Ok(doomed
        .into_iter()
        .map(|i| {
            let p = &mut canvas.primitives_mut()[i];
            p.prune();
            p.id()
        })
        .collect())
}

/// Losses for one render and the gradient of the total with respect to
/// the raster, laid out like [`Raster::data`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss_sem: Option<f64>,
    pub loss_vis: Option<f64>,
    pub loss_total: f64,
    pub d_raster: Vec<f64>,
}

/// A differentiable scalar of the rendered sketch.
pub trait Objective {
    fn evaluate(&mut self, raster: &Raster, rng: &mut dyn RngCore) -> Result<Evaluation>;
}

/// Sum of squared differences to a fixed target image.
#[derive(Debug, Clone)]
pub struct TargetL2 {
    target: Raster,
}

impl TargetL2 {
    pub fn new(target: Raster) -> Self {
        TargetL2 { target }
    }

    pub fn loss(&self, raster: &Raster) -> f64 {
        raster
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl Objective for TargetL2 {
    fn evaluate(&mut self, raster: &Raster, _rng: &mut dyn RngCore) -> Result<Evaluation> {
        if raster.width() != self.target.width() || raster.height() != self.target.height() {
            return Err(Error::domain("raster and target sizes differ"));
        }
        let d_raster = raster
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        Ok(Evaluation {
            loss_sem: None,
            loss_vis: None,
            loss_total: self.loss(raster),
            d_raster,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub canvas: Canvas,
    pub log: TrajectoryLog,
}

/// A run that stopped early, with everything recorded up to that point.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub iter: usize,
    pub canvas: Canvas,
    pub log: TrajectoryLog,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at iteration {}: {}", self.iter, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn mask_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn objective_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Renders the active set and returns the objective's evaluation plus the
/// gradient mapped back to canvas indices.
fn forward_backward(
    canvas: &Canvas,
    mask: &DropoutMask,
    objective: &mut dyn Objective,
    rasterizer: &dyn RasterizerBackend,
    stroke_width: f64,
    rng: &mut dyn RngCore,
    need_grad: bool,
) -> Result<(Evaluation, Option<CanvasGrad>)> {
    let scene = Scene::from_canvas(canvas, Some(mask), stroke_width);
    let (raster, tape) = rasterizer
        .render_differentiable(&scene)
        .map_err(|e| wrap(e, &scene))?;
    let eval = objective.evaluate(&raster, rng)?;
    if !need_grad {
        return Ok((eval, None));
    }
    let sg = tape.backward(&eval.d_raster).map_err(|e| wrap(e, &scene))?;
    let mut grad = CanvasGrad::zeros(canvas);
    let active = (0..canvas.len()).filter(|&i| mask.is_active(i) && !canvas.primitives()[i].is_pruned());
    for (slot, i) in active.enumerate() {
        grad.points[i].clone_from(&sg.points[slot]);
        grad.opacity[i] = sg.opacity[slot];
    }
    Ok((eval, Some(grad)))
}

/// Optimizes `canvas` for `cfg.num_iter` iterations.
///
/// A snapshot is taken before every `snapshot_every`-th step, holding the
/// primitives as they were rendered for that step, and once more after the
/// last step with every live primitive active. Snapshots go to `sink` as
/// they are produced and are also returned in the log.
pub fn run(
    canvas: Canvas,
    objective: &mut dyn Objective,
    rasterizer: &dyn RasterizerBackend,
    cfg: &OptimConfig,
    mut sink: Option<&mut dyn SnapshotSink>,
) -> std::result::Result<RunOutput, Box<RunFailure>> {
    let mut canvas = canvas;
    let mut log = TrajectoryLog::default();
    let mut iter = 0;
    let result = (|| -> Result<()> {
        cfg.validate()?;
        let mut masks = mask_rng(cfg.seed);
        let mut aug = objective_rng(cfg.seed);
        let mut adam = AdamState::new(&canvas);
        let mut emit = |rec: TrajectoryRecord, log: &mut TrajectoryLog| -> Result<()> {
            if let Some(s) = sink.as_deref_mut() {
                s.record(&rec)?;
            }
            log.records.push(rec);
            Ok(())
        };

        for t in 0..cfg.num_iter {
            iter = t;
            let lr = schedule_lr(t, cfg);
            let alive: Vec<bool> = canvas.primitives().iter().map(|p| !p.is_pruned()).collect();
            let mask = pld_mask_alive(&alive, cfg.pld_prob, &mut masks);
            let (eval, grad) =
                forward_backward(&canvas, &mask, objective, rasterizer, cfg.stroke_width, &mut aug, true)?;
            if t % cfg.snapshot_every == 0 {
                let rec = TrajectoryRecord::capture(
                    t,
                    eval.loss_sem,
                    eval.loss_vis,
                    eval.loss_total,
                    lr,
                    cfg.stroke_width,
                    &mask,
                    &canvas,
                );
                emit(rec, &mut log)?;
            }
            step(&mut canvas, &mask, &grad.expect("gradient requested"), &mut adam, lr, cfg)?;
            if (t + 1) % cfg.gate_every == 0 {
                gate_opacity(&mut canvas, cfg.opacity_threshold)?;
            }
        }

        iter = cfg.num_iter;
        let lr = schedule_lr(cfg.num_iter.saturating_sub(1), cfg);
        let mask = DropoutMask::from_bits(canvas.primitives().iter().map(|p| !p.is_pruned()).collect());
        let (eval, _) = forward_backward(&canvas, &mask, objective, rasterizer, cfg.stroke_width, &mut aug, false)?;
        let rec = TrajectoryRecord::capture(
            cfg.num_iter,
            eval.loss_sem,
            eval.loss_vis,
            eval.loss_total,
            lr,
            cfg.stroke_width,
            &mask,
            &canvas,
        );
        emit(rec, &mut log)
    })();

    match result {
        Ok(()) => Ok(RunOutput { canvas, log }),
        Err(error) => Err(Box::new(RunFailure {
            error,
            iter,
            canvas,
            log,
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Primitive, PrimitiveKind};

    fn line(id: u32, opacity: f64) -> Primitive {
        Primitive::new(
            id,
            PrimitiveKind::Line,
            vec![Point2::new(1.0, 1.0), Point2::new(6.0, 6.0)],
            opacity,
        )
        .unwrap()
    }

    #[test]
    fn schedule_milestones() {
        let cfg = OptimConfig::default();
        assert_eq!(schedule_lr(0, &cfg), 1.0);
        assert_eq!(schedule_lr(499, &cfg), 1.0);
        assert_eq!(schedule_lr(500, &cfg), 0.4);
        assert_eq!(schedule_lr(749, &cfg), 0.4);
        assert_eq!(schedule_lr(750, &cfg), 0.1);
        assert_eq!(schedule_lr(999, &cfg), 0.1);
    }

    #[test]
    fn pld_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pld_mask(10, 0.0, &mut rng), DropoutMask::all(10));
        for _ in 0..200 {
            assert!(pld_mask(1, 0.5, &mut rng).is_active(0));
        }
        let m = pld_mask_alive(&[false, true, false], 0.9, &mut rng);
        assert_eq!(m.bits(), &[false, true, false]);
    }

    #[test]
    fn gating_threshold() {
        let mut canvas = Canvas::new(8, 8, vec![line(0, 0.01), line(1, 0.3), line(2, 0.9)]);
        assert_eq!(gate_opacity(&mut canvas, 0.05).unwrap(), vec![0]);
        assert_eq!(canvas.alive_count(), 2);
        assert!(gate_opacity(&mut canvas, 0.95).is_err());
        assert_eq!(canvas.alive_count(), 2);
        assert!(gate_opacity(&mut canvas, 0.0).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        let bad = OptimConfig {
            lr_milestones: vec![(0.75, 0.1), (0.5, 0.4)],
            ..OptimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimConfig {
            pld_prob: 1.0,
            ..OptimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
