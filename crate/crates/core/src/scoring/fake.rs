use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Embedding, EmbeddingBackend};
use crate::{Error, Raster, Result};

/// Deterministic stand-in encoder: average-pools the image onto a coarse grid
/// and applies a fixed random projection. Text embeddings are seeded from a
/// hash of the string, so equal prompts embed equally.
///
/// The image encoder is linear, which makes exact gradient checks possible.
#[derive(Debug, Clone)]
pub struct FakeBackend {
    seed: u64,
    dim: usize,
    grid: usize,
    projection: Vec<f64>,
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl FakeBackend {
    pub const DEFAULT_DIM: usize = 32;
    pub const DEFAULT_GRID: usize = 16;

    pub fn new(seed: u64) -> Self {
        Self::with_shape(seed, Self::DEFAULT_DIM, Self::DEFAULT_GRID)
    }

    pub fn with_shape(seed: u64, dim: usize, grid: usize) -> Self {
        assert!(dim > 0 && grid > 0, "embedding shape must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let projection = (0..dim * grid * grid).map(|_| rng.random_range(-1.0..1.0)).collect();
        FakeBackend {
            seed,
            dim,
            grid,
            projection,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Projection weights, `dim` rows of `grid * grid` cells in row-major order.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    fn cells(&self, image: &Raster) -> (usize, usize) {
        (self.grid.min(image.width()), self.grid.min(image.height()))
    }

    fn cell_of(x: usize, y: usize, w: usize, h: usize, gx: usize, gy: usize) -> usize {
        (y * gy / h) * gx + x * gx / w
    }

    fn pool(&self, image: &Raster) -> (Vec<f64>, usize, usize) {
        let (w, h) = (image.width(), image.height());
        let (gx, gy) = self.cells(image);
        let mut sums = vec![0.0; gx * gy];
        let mut counts = vec![0usize; gx * gy];
        let data = image.data();
        for y in 0..h {
            for x in 0..w {
                let c = Self::cell_of(x, y, w, h, gx, gy);
                let p = (y * w + x) * 3;
                sums[c] += data[p] + data[p + 1] + data[p + 2];
                counts[c] += 3;
            }
        }
        for (s, n) in sums.iter_mut().zip(&counts) {
            *s /= *n as f64;
        }
        (sums, gx, gy)
    }

    fn project(&self, pooled: &[f64], gx: usize, gy: usize) -> Vec<f64> {
        let stride = self.grid * self.grid;
        (0..self.dim)
            .map(|d| {
                let row = &self.projection[d * stride..];
                let mut acc = 0.0;
                for cy in 0..gy {
                    for cx in 0..gx {
                        acc += row[cy * self.grid + cx] * pooled[cy * gx + cx];
                    }
                }
                acc
            })
            .collect()
    }
}

impl EmbeddingBackend for FakeBackend {
    fn id(&self) -> String {
        format!("fake-{}x{}-d{}-s{}", self.grid, self.grid, self.dim, self.seed)
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(text.as_bytes()) ^ self.seed);
        Embedding::new((0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn encode_image(&self, image: &Raster) -> Result<Embedding> {
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Backend {
                backend: self.id(),
                reason: "empty image".into(),
            });
        }
        let (pooled, gx, gy) = self.pool(image);
        Embedding::new(self.project(&pooled, gx, gy))
    }

    fn image_vjp(&self, image: &Raster, d_embedding: &[f64]) -> Result<Vec<f64>> {
        if d_embedding.len() != self.dim {
            return Err(Error::Backend {
                backend: self.id(),
                reason: format!("cotangent has {} entries, expected {}", d_embedding.len(), self.dim),
            });
        }
        let (w, h) = (image.width(), image.height());
        let (gx, gy) = self.cells(image);
        let stride = self.grid * self.grid;
        let mut d_pooled = vec![0.0; gx * gy];
        for (d, g) in d_embedding.iter().enumerate() {
            let row = &self.projection[d * stride..];
            for cy in 0..gy {
                for cx in 0..gx {
                    d_pooled[cy * gx + cx] += g * row[cy * self.grid + cx];
                }
            }
        }
        let mut counts = vec![0usize; gx * gy];
        for y in 0..h {
            for x in 0..w {
                counts[Self::cell_of(x, y, w, h, gx, gy)] += 3;
            }
        }
        let mut out = vec![0.0; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let c = Self::cell_of(x, y, w, h, gx, gy);
                let v = d_pooled[c] / counts[c] as f64;
                out[(y * w + x) * 3..][..3].fill(v);
            }
        }
        Ok(out)
    }
}
