//! Central finite-difference check of a rasterizer's gradients.

use super::{RasterizerBackend, Scene};
use crate::canvas::Canvas;
use crate::{Exec, Raster, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Step for control-point coordinates, canvas units.
    pub coord_step: f64,
    pub opacity_step: f64,
    pub stroke_width: f64,
    pub exec: Exec,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            coord_step: 1e-2,
            opacity_step: 1e-3,
            stroke_width: super::DEFAULT_STROKE_WIDTH,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    /// Coordinate `axis` (0 = x, 1 = y) of control point `point`.
    Point {
        primitive: usize,
        point: usize,
        axis: usize,
    },
    Opacity {
        primitive: usize,
    },
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`,
    /// with `floor` = 1e-3 of the largest numeric gradient magnitude.
    pub max_rel_error: f64,
    pub worst: Option<(ParamRef, f64, f64)>,
    pub params: usize,
}

/// Compares the backend's gradients of `objective(render(canvas))` against
/// central differences for every control-point coordinate and opacity of
/// the unpruned primitives. Opacities must lie at least one step inside
/// `[0, 1]`. `objective` returns the value and its gradient per raster value.
pub fn grad_check<F>(
    backend: &dyn RasterizerBackend,
    canvas: &Canvas,
    objective: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&Raster) -> (f64, Vec<f64>) + Sync,
{
    let scene = Scene::from_canvas(canvas, None, cfg.stroke_width);
    let (raster, tape) = backend.render_differentiable(&scene)?;
    let (_, d_raster) = objective(&raster);
    let grad = tape.backward(&d_raster)?;

    let alive: Vec<usize> = canvas
        .primitives()
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_pruned())
        .map(|(i, _)| i)
        .collect();
    let mut params = Vec::new();
    for (slot, &idx) in alive.iter().enumerate() {
        let prim = &canvas.primitives()[idx];
        for point in 0..prim.points().len() {
            for axis in 0..2 {
                let g = &grad.points[slot][point];
                params.push((
                    idx,
                    ParamRef::Point {
                        primitive: idx,
                        point,
                        axis,
                    },
                    if axis == 0 { g.x } else { g.y },
                ));
            }
        }
        params.push((idx, ParamRef::Opacity { primitive: idx }, grad.opacity[slot]));
    }

    let eval = |c: &Canvas| -> Result<f64> {
        let s = Scene::from_canvas(c, None, cfg.stroke_width);
        Ok(objective(&backend.render(&s)?).0)
    };
    let numeric = cfg.exec.map(&params, |&(idx, param, _)| -> Result<f64> {
        let step = match param {
            ParamRef::Point { .. } => cfg.coord_step,
            ParamRef::Opacity { .. } => cfg.opacity_step,
        };
        let shifted = |delta: f64| {
            let mut c = canvas.clone();
            let prim = &mut c.primitives_mut()[idx];
            match param {
                ParamRef::Point { point, axis, .. } => {
                    let p = &mut prim.points_mut()[point];
                    if axis == 0 {
                        p.x += delta;
                    } else {
                        p.y += delta;
                    }
                }
                ParamRef::Opacity { .. } => prim.set_opacity(prim.opacity() + delta),
            }
            c
        };
        Ok((eval(&shifted(step))? - eval(&shifted(-step))?) / (2.0 * step))
    });
    let numeric: Vec<f64> = numeric.into_iter().collect::<Result<_>>()?;

    let floor = 1e-3 * numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1e-12;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        params: params.len(),
    };
    for ((_, param, analytic), num) in params.iter().zip(&numeric) {
        let err = (analytic - num).abs() / analytic.abs().max(num.abs()).max(floor);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((*param, *analytic, *num));
        }
    }
    Ok(report)
}
