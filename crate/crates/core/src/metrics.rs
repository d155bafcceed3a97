//! Evaluation metrics: prompt-sketch cosine similarity (raw prompt and
//! templated caption) and PSNR against the reference image.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scoring::{cosine_sim, EmbeddingBackend};
use crate::{Error, Raster, Result};

pub const DEFAULT_CLIP_T_TEMPLATE: &str = "a photo of {}";

/// Cosine similarity between the sketch and the raw prompt.
pub fn cs(sketch: &Raster, prompt: &str, backend: &dyn EmbeddingBackend) -> Result<f64> {
    cosine_sim(&backend.encode_image(sketch)?, &backend.encode_text(prompt)?)
}

/// Cosine similarity between the sketch and the prompt placed in `template`
/// (every `{}` is replaced by the prompt).
pub fn clip_t_with(sketch: &Raster, prompt: &str, template: &str, backend: &dyn EmbeddingBackend) -> Result<f64> {
    cs(sketch, &template.replace("{}", prompt), backend)
}

pub fn clip_t(sketch: &Raster, prompt: &str, backend: &dyn EmbeddingBackend) -> Result<f64> {
    clip_t_with(sketch, prompt, DEFAULT_CLIP_T_TEMPLATE, backend)
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`; `+inf` when
/// the images are identical.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::domain(format!(
            "psnr of {}x{} and {}x{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let n = a.data().len();
    if n == 0 {
        return Err(Error::domain("psnr of empty images"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("invalid psnr value {t:?}"))),
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub prompt: String,
    pub seed: u64,
    pub cs: f64,
    pub clip_t: f64,
    /// Sketch against the reference image; `"inf"` in JSON when identical.
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    pub iter: usize,
    pub wallclock_seconds: f64,
    pub cs_backend: String,
    pub clip_t_backend: String,
    pub clip_t_template: String,
    pub psnr_reference: String,
}

impl MetricsReport {
    /// Scores `sketch` with one backend for both similarity metrics.
    pub fn compute(
        sketch: &Raster,
        reference: &Raster,
        prompt: &str,
        template: &str,
        backend: &dyn EmbeddingBackend,
    ) -> Result<Self> {
        Ok(MetricsReport {
            prompt: prompt.to_string(),
            seed: 0,
            cs: cs(sketch, prompt, backend)?,
            clip_t: clip_t_with(sketch, prompt, template, backend)?,
            psnr: psnr(sketch, reference)?,
            iter: 0,
            wallclock_seconds: 0.0,
            cs_backend: backend.id(),
            clip_t_backend: backend.id(),
            clip_t_template: template.to_string(),
            psnr_reference: "reference_image".to_string(),
        })
    }
}
