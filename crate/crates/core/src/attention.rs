//! Saliency maps for the focus token and weighted landmark sampling.
//!
//! The diffusion model that produces cross-attention is consumed through
//! [`AttentionProvider`]. Offline providers read maps from disk or return a
//! uniform map, so the rest of the pipeline runs without model weights.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::geometry::Point2;
use crate::raster::{resize_bilinear, Raster};
use crate::{Error, Result};

const ATTN_MAGIC: &[u8; 4] = b"ATTN";
const FILE_FORMATS: &str =
    "an 8/16-bit grayscale PNG or an ATTN float32 matrix (magic, u32 height, u32 width, row-major f32 LE)";

/// One raw cross-attention matrix at its native resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAttention {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl RawAttention {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::domain(format!(
                "attention matrix of {} values does not match {width}x{height}",
                values.len()
            )));
        }
        Ok(RawAttention {
            width,
            height,
            values,
        })
    }
}

/// A probability distribution over canvas pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl AttentionMap {
    /// Softmax (temperature 1) over all pixels.
    pub fn from_logits(width: usize, height: usize, logits: &[f64]) -> Result<Self> {
        if width == 0 || height == 0 || logits.len() != width * height {
            return Err(Error::domain("logit buffer does not match map size"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite attention value"));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        Ok(AttentionMap {
            width,
            height,
            probs: exp.into_iter().map(|e| e / z).collect(),
        })
    }

    /// Normalizes non-negative weights to sum to one.
    pub fn from_weights(width: usize, height: usize, weights: &[f64]) -> Result<Self> {
        if width == 0 || height == 0 || weights.len() != width * height {
            return Err(Error::domain("weight buffer does not match map size"));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("attention weights must be finite and non-negative"));
        }
        let z: f64 = weights.iter().sum();
        if z <= 0.0 {
            return Err(Error::domain("attention map has no mass"));
        }
        Ok(AttentionMap {
            width,
            height,
            probs: weights.iter().map(|w| w / z).collect(),
        })
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        let p = 1.0 / (width * height) as f64;
        AttentionMap {
            width,
            height,
            probs: vec![p; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[y * self.width + x]
    }
}

/// Resizes every raw map to `width x height`, sums them and applies a
/// softmax over all pixels.
pub fn aggregate(raw_maps: &[RawAttention], width: usize, height: usize) -> Result<AttentionMap> {
    if raw_maps.is_empty() {
        return Err(Error::domain("no attention maps to aggregate"));
    }
    let mut sum = vec![0.0; width * height];
    for m in raw_maps {
        if m.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("raw attention maps must be non-negative"));
        }
        let resized = resize_bilinear(&m.values, m.width, m.height, width, height);
        for (s, v) in sum.iter_mut().zip(resized) {
            *s += v;
        }
    }
    AttentionMap::from_logits(width, height, &sum)
}

/// `k` distinct pixel positions with their saliency.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws `k` pixels without replacement, each draw proportional to the
/// remaining mass. Points are integer pixel coordinates (x = column).
pub fn sample_landmarks<R: Rng + ?Sized>(map: &AttentionMap, k: usize, rng: &mut R) -> Result<LandmarkSet> {
    if k == 0 {
        return Err(Error::domain("landmark count must be at least 1"));
    }
    let support = map.probs.iter().filter(|&&p| p > 0.0).count();
    if k > support {
        return Err(Error::domain(format!(
            "cannot draw {k} distinct landmarks from {support} pixels with positive mass"
        )));
    }
    let mut remaining = map.probs.clone();
    let mut total: f64 = remaining.iter().sum();
    let mut points = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for _ in 0..k {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &w) in remaining.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            chosen = Some(i);
            if acc > target {
                break;
            }
        }
        // Rounding can leave `target` just above the running sum; the last
        // positive pixel is then the right pick.
        let i = chosen.expect("positive mass remains");
        points.push(Point2::new((i % map.width) as f64, (i / map.width) as f64));
        weights.push(map.probs[i]);
        total -= remaining[i];
        remaining[i] = 0.0;
        if total <= 0.0 {
            total = remaining.iter().sum();
        }
    }
    Ok(LandmarkSet { points, weights })
}

fn input_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        reason: reason.into(),
        expected: FILE_FORMATS,
    }
}

/// Reads a raw map from a grayscale PNG (scaled to `[0, 1]`) or an ATTN
/// float matrix (values as stored). Negative values are clamped to zero.
pub fn read_raw_map(path: &Path) -> Result<RawAttention> {
    let bytes = fs::read(path).map_err(|e| input_err(path, e.to_string()))?;
    let mut raw = if bytes.starts_with(ATTN_MAGIC) {
        parse_attn(&bytes).map_err(|why| input_err(path, why))?
    } else {
        let img = image::load_from_memory(&bytes).map_err(|e| input_err(path, e.to_string()))?;
        let luma = img.to_luma32f();
        let (w, h) = (luma.width() as usize, luma.height() as usize);
        let values = luma.into_raw().into_iter().map(f64::from).collect();
        RawAttention::new(w, h, values).map_err(|e| input_err(path, e.to_string()))?
    };
    for v in &mut raw.values {
        *v = v.max(0.0);
    }
    Ok(raw)
}

fn parse_attn(bytes: &[u8]) -> std::result::Result<RawAttention, String> {
    if bytes.len() < 12 {
        return Err("truncated ATTN header".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (height, width) = (u32_at(4), u32_at(8));
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or("ATTN dimensions overflow")?;
    let body = &bytes[12..];
    if width == 0 || height == 0 || body.len() != expected {
        return Err(format!(
            "ATTN body has {} bytes, header declares {height}x{width} float32",
            body.len()
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err("ATTN body holds non-finite values".into());
    }
    Ok(RawAttention {
        width,
        height,
        values,
    })
}

/// Writes a raw map in the ATTN float32 format.
pub fn write_attn_file(path: &Path, raw: &RawAttention) -> Result<()> {
    let mut out = Vec::with_capacity(12 + raw.values.len() * 4);
    out.extend_from_slice(ATTN_MAGIC);
    out.extend_from_slice(&(raw.height as u32).to_le_bytes());
    out.extend_from_slice(&(raw.width as u32).to_le_bytes());
    for v in &raw.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a map file, resizes it to the canvas and softmax-normalizes it.
pub fn load_map_from_file(path: &Path, width: usize, height: usize) -> Result<AttentionMap> {
    let raw = read_raw_map(path)?;
    aggregate(&[raw], width, height)
}

/// Raw attention for the focus token plus the reference image generated for
/// the same prompt.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub raw_maps: Vec<RawAttention>,
    pub reference: Raster,
}

/// Source of cross-attention maps and reference images. Calls may be slow
/// and are made from one worker at a time.
pub trait AttentionProvider {
    fn name(&self) -> &str;

    fn attend(&self, prompt: &str, focus_token: &str, seed: u64) -> Result<AttentionOutput>;
}

/// Constant attention and a white reference image.
#[derive(Debug, Clone)]
pub struct UniformAttention {
    pub width: usize,
    pub height: usize,
    pub reference: Option<PathBuf>,
}

impl AttentionProvider for UniformAttention {
    fn name(&self) -> &str {
        "uniform"
    }

    fn attend(&self, _prompt: &str, _focus: &str, _seed: u64) -> Result<AttentionOutput> {
        let reference = match &self.reference {
            Some(p) => Raster::load_png(p, self.width, self.height)?,
            None => Raster::white(self.width, self.height),
        };
        Ok(AttentionOutput {
            raw_maps: vec![RawAttention::new(
                self.width,
                self.height,
                vec![0.0; self.width * self.height],
            )?],
            reference,
        })
    }
}

/// Attention read from a map file; reference image from a PNG if given,
/// otherwise white.
#[derive(Debug, Clone)]
pub struct FileAttention {
    pub map: PathBuf,
    pub reference: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
}

impl AttentionProvider for FileAttention {
    fn name(&self) -> &str {
        "file"
    }

    fn attend(&self, _prompt: &str, _focus: &str, _seed: u64) -> Result<AttentionOutput> {
        let raw = read_raw_map(&self.map)?;
        let reference = match &self.reference {
            Some(p) => Raster::load_png(p, self.width, self.height)?,
            None => Raster::white(self.width, self.height),
        };
        Ok(AttentionOutput {
            raw_maps: vec![raw],
            reference,
        })
    }
}
