//! Embedding-space losses between the rendered sketch, the prompt, and the
//! reference image, averaged over random augmentations of the render.

mod augment;
mod fake;

pub use augment::{augment, sample_warps, AugmentConfig, Warp};
pub use fake::FakeBackend;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::optimizer::{Evaluation, Objective};
use crate::{Error, Exec, Raster, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("embedding must have at least one entry"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding has non-finite entries"));
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Text and image encoders sharing one embedding space.
pub trait EmbeddingBackend: Sync {
    /// Identifier recorded alongside metrics.
    fn id(&self) -> String;

    fn encode_text(&self, text: &str) -> Result<Embedding>;

    fn encode_image(&self, image: &Raster) -> Result<Embedding>;

    /// Pulls `d_embedding` (gradient w.r.t. the image embedding) back onto
    /// the image pixels, returned in `Raster::data` layout.
    fn image_vjp(&self, image: &Raster, d_embedding: &[f64]) -> Result<Vec<f64>>;

    fn encode_images(&self, images: &[Raster]) -> Result<Vec<Embedding>> {
        images.iter().map(|im| self.encode_image(im)).collect()
    }
}

fn check_pair(a: &Embedding, b: &Embedding) -> Result<(f64, f64)> {
    if a.dim() != b.dim() {
        return Err(Error::domain(format!(
            "embedding dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("cosine similarity of a zero vector"));
    }
    Ok((na, nb))
}

pub fn cosine_sim(a: &Embedding, b: &Embedding) -> Result<f64> {
    let (na, nb) = check_pair(a, b)?;
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradient of `cosine_sim(a, b)` with respect to `b`.
pub fn cosine_sim_grad(a: &Embedding, b: &Embedding) -> Result<Vec<f64>> {
    let (na, nb) = check_pair(a, b)?;
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let sim = dot / (na * nb);
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| x / (na * nb) - sim * y / (nb * nb))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_sem: f64,
    pub lambda_vis: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_sem: 0.6,
            lambda_vis: 0.9,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.lambda_sem) || !ok(self.lambda_vis) {
            return Err(Error::domain("loss weights must be finite and non-negative"));
        }
        if self.lambda_sem == 0.0 && self.lambda_vis == 0.0 {
            return Err(Error::domain("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// `-sum sim(anchor, I(view))` over the identity view followed by `warps`.
fn view_loss(anchor: &Embedding, raster: &Raster, warps: &[Warp], backend: &dyn EmbeddingBackend) -> Result<f64> {
    let mut total = -cosine_sim(anchor, &backend.encode_image(raster)?)?;
    for w in warps {
        total -= cosine_sim(anchor, &backend.encode_image(&w.apply(raster))?)?;
    }
    Ok(total)
}

/// Prompt alignment over the unaugmented render plus one view per warp.
pub fn semantic_loss(
    prompt_emb: &Embedding,
    sketch: &Raster,
    warps: &[Warp],
    backend: &dyn EmbeddingBackend,
) -> Result<f64> {
    view_loss(prompt_emb, sketch, warps, backend)
}

/// Reference-image alignment over the unaugmented render plus one view per warp.
pub fn visual_loss(
    ref_image_emb: &Embedding,
    sketch: &Raster,
    warps: &[Warp],
    backend: &dyn EmbeddingBackend,
) -> Result<f64> {
    view_loss(ref_image_emb, sketch, warps, backend)
}

pub fn total_loss(sem: f64, vis: f64, w: &LossWeights) -> f64 {
    w.lambda_sem * sem + w.lambda_vis * vis
}

/// Losses and pixel gradient for one render, with the warps supplied.
#[derive(Debug, Clone)]
pub struct Scored {
    pub loss_sem: f64,
    pub loss_vis: f64,
    pub loss_total: f64,
    pub d_raster: Vec<f64>,
}

/// The synthesis objective: weighted semantic and visual losses over
/// augmented views of the render.
pub struct SketchObjective<'a> {
    backend: &'a dyn EmbeddingBackend,
    prompt: Embedding,
    reference: Embedding,
    weights: LossWeights,
    augment: AugmentConfig,
    exec: Exec,
}

impl<'a> SketchObjective<'a> {
    pub fn new(
        backend: &'a dyn EmbeddingBackend,
        prompt: &str,
        reference: &Raster,
        weights: LossWeights,
        augment: AugmentConfig,
    ) -> Result<Self> {
        weights.validate()?;
        augment.validate()?;
        Ok(SketchObjective {
            prompt: backend.encode_text(prompt)?,
            reference: backend.encode_image(reference)?,
            backend,
            weights,
            augment,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn prompt_embedding(&self) -> &Embedding {
        &self.prompt
    }

    pub fn reference_embedding(&self) -> &Embedding {
        &self.reference
    }

    /// Scores `raster` under the identity view plus the given warps.
    pub fn score(&self, raster: &Raster, warps: &[Warp]) -> Result<Scored> {
        let (w, h) = (raster.width(), raster.height());
        let identity = Warp::identity();
        let all: Vec<&Warp> = std::iter::once(&identity).chain(warps).collect();
        let per_view = self.exec.map(&all, |warp| -> Result<(f64, f64, Vec<f64>)> {
            let view = warp.apply(raster);
            let e = self.backend.encode_image(&view)?;
            let s_sem = cosine_sim(&self.prompt, &e)?;
            let s_vis = cosine_sim(&self.reference, &e)?;
            let g_sem = cosine_sim_grad(&self.prompt, &e)?;
            let g_vis = cosine_sim_grad(&self.reference, &e)?;
            let d_e: Vec<f64> = g_sem
                .iter()
                .zip(&g_vis)
                .map(|(a, b)| -self.weights.lambda_sem * a - self.weights.lambda_vis * b)
                .collect();
            let d_view = self.backend.image_vjp(&view, &d_e)?;
            Ok((s_sem, s_vis, warp.apply_transpose(&d_view, w, h)))
        });

        let mut loss_sem = 0.0;
        let mut loss_vis = 0.0;
        let mut d_raster = vec![0.0; w * h * 3];
        for r in per_view {
            let (s, v, g) = r?;
            loss_sem -= s;
            loss_vis -= v;
            for (acc, x) in d_raster.iter_mut().zip(&g) {
                *acc += x;
            }
        }
        Ok(Scored {
            loss_sem,
            loss_vis,
            loss_total: total_loss(loss_sem, loss_vis, &self.weights),
            d_raster,
        })
    }
}

impl Objective for SketchObjective<'_> {
    fn evaluate(&mut self, raster: &Raster, rng: &mut dyn RngCore) -> Result<Evaluation> {
        let warps = sample_warps(&self.augment, raster.width(), raster.height(), rng);
        let s = self.score(raster, &warps)?;
        Ok(Evaluation {
            loss_sem: Some(s.loss_sem),
            loss_vis: Some(s.loss_vis),
            loss_total: s.loss_total,
            d_raster: s.d_raster,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let v = emb(&[0.3, -2.0, 5.0]);
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_sim(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_sim(&emb(&[1.0, 1.0]), &emb(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(cosine_sim(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])).is_err());
        assert!(cosine_sim(&emb(&[1.0]), &emb(&[1.0, 0.0])).is_err());
        assert!(Embedding::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert!((total_loss(-1.0, -1.0, &LossWeights::default()) + 1.5).abs() < 1e-12);
        let w = LossWeights {
            lambda_sem: 1.0,
            lambda_vis: 0.0,
        };
        assert_eq!(total_loss(-0.37, 0.0, &w), -0.37);
        assert_eq!(total_loss(0.0, 0.0, &LossWeights::default()), 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let zero = LossWeights {
            lambda_sem: 0.0,
            lambda_vis: 0.0,
        };
        assert!(zero.validate().is_err());
        let neg = LossWeights {
            lambda_sem: -1.0,
            lambda_vis: 1.0,
        };
        assert!(neg.validate().is_err());
    }
}
