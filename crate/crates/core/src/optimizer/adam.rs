use crate::canvas::Canvas;
use crate::geometry::Point2;
use crate::{Error, Result};

use super::{DropoutMask, OptimConfig};

/// One Adam update of a scalar. `t` is the 1-based step count of this
/// parameter's group.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut f64,
    grad: f64,
    m: &mut f64,
    v: &mut f64,
    t: u32,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) {
    let (b1, b2) = betas;
    *m = b1 * *m + (1.0 - b1) * grad;
    *v = b2 * *v + (1.0 - b2) * grad * grad;
    let m_hat = *m / (1.0 - b1.powi(t as i32));
    let v_hat = *v / (1.0 - b2.powi(t as i32));
    *param -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// Moments for every parameter of every primitive. Each primitive keeps its
/// own step counter so iterations it sat out under dropout do not count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: Vec<u32>,
}

impl AdamState {
    pub fn new(canvas: &Canvas) -> Self {
        let sizes: Vec<usize> = canvas
            .primitives()
            .iter()
            .map(|p| 2 * p.points().len() + 1)
            .collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            steps: vec![0; sizes.len()],
        }
    }

    /// First and second moments of primitive `index`: x/y per point, then opacity.
    pub fn moments(&self, index: usize) -> (&[f64], &[f64]) {
        (&self.m[index], &self.v[index])
    }

    pub fn steps(&self, index: usize) -> u32 {
        self.steps[index]
    }
}

/// Gradient with respect to every canvas primitive, indexed like
/// `Canvas::primitives`; inactive primitives carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CanvasGrad {
    pub points: Vec<Vec<Point2>>,
    pub opacity: Vec<f64>,
}

impl CanvasGrad {
    pub fn zeros(canvas: &Canvas) -> Self {
        CanvasGrad {
            points: canvas
                .primitives()
                .iter()
                .map(|p| vec![Point2::default(); p.points().len()])
                .collect(),
            opacity: vec![0.0; canvas.len()],
        }
    }
}

/// Applies one Adam step to the unpruned primitives active in `mask`.
/// Coordinates are clamped to the canvas and opacities to `[0, 1]`.
pub fn step(
    canvas: &mut Canvas,
    mask: &DropoutMask,
    grad: &CanvasGrad,
    state: &mut AdamState,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if mask.len() != canvas.len() {
        return Err(Error::domain(format!(
            "mask covers {} primitives, canvas has {}",
            mask.len(),
            canvas.len()
        )));
    }
    let active: Vec<usize> = (0..canvas.len())
        .filter(|&i| mask.is_active(i) && !canvas.primitives()[i].is_pruned())
        .collect();
    for &i in &active {
        let finite = grad.opacity[i].is_finite() && grad.points[i].iter().all(|p| p.is_finite());
        if !finite {
            return Err(Error::NonFiniteGradient {
                id: canvas.primitives()[i].id(),
            });
        }
    }

    let (w, h) = (canvas.width() as f64, canvas.height() as f64);
    let opacity_lr = lr * cfg.opacity_lr_scale;
    for i in active {
        state.steps[i] += 1;
        let t = state.steps[i];
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let prim = &mut canvas.primitives_mut()[i];
        for (j, (p, g)) in prim.points_mut().iter_mut().zip(&grad.points[i]).enumerate() {
            adam_update(&mut p.x, g.x, &mut m[2 * j], &mut v[2 * j], t, lr, cfg.adam_betas, cfg.adam_eps);
            adam_update(&mut p.y, g.y, &mut m[2 * j + 1], &mut v[2 * j + 1], t, lr, cfg.adam_betas, cfg.adam_eps);
            p.x = p.x.clamp(0.0, w);
            p.y = p.y.clamp(0.0, h);
        }
        let k = m.len() - 1;
        let mut a = prim.opacity();
        adam_update(&mut a, grad.opacity[i], &mut m[k], &mut v[k], t, opacity_lr, cfg.adam_betas, cfg.adam_eps);
        prim.set_opacity(a);
    }
    Ok(())
}
