//! Random perspective warp followed by a random resized crop, fused into a
//! single homography and applied by bilinear resampling. Resampling is
//! linear in the input pixels, so the transpose carries gradients back.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;

use crate::{Error, Raster, Result};

/// Value of pixels sampled from outside the source image.
const FILL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Number of augmented views per evaluation.
    pub views: usize,
    /// Perspective distortion scale in `[0, 1]`.
    pub distortion: f64,
    /// Crop area as a fraction of the image.
    pub crop_scale: (f64, f64),
    /// Crop aspect-ratio range.
    pub crop_ratio: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            views: 4,
            distortion: 0.5,
            crop_scale: (0.7, 0.9),
            crop_ratio: (3.0 / 4.0, 4.0 / 3.0),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale;
        if self.views == 0 {
            return Err(Error::domain("at least one augmented view is required"));
        }
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(Error::domain("crop scale must satisfy 0 < lo <= hi <= 1"));
        }
        if !(0.0..=1.0).contains(&self.distortion) {
            return Err(Error::domain("distortion must lie in [0, 1]"));
        }
        let (r0, r1) = self.crop_ratio;
        if !(0.0 < r0 && r0 <= r1) {
            return Err(Error::domain("crop ratio must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }
}

/// Maps output pixel indices to (fractional) source pixel indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Warp {
    map: Option<Matrix3<f64>>,
}

fn homography(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> Option<Matrix3<f64>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (k, (&(x, y), &(u, v))) in from.iter().zip(&to).enumerate() {
        let r = 2 * k;
        a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Some(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

impl Warp {
    pub fn identity() -> Self {
        Warp { map: None }
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_none()
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Warp { map: Some(m) }
    }

    /// Draws one perspective-then-crop transform for a `width x height` image.
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, width: usize, height: usize, rng: &mut R) -> Self {
        let (w, h) = (width as f64, height as f64);
        let mut map: Option<Matrix3<f64>> = None;

        if cfg.distortion > 0.0 {
            let dx = cfg.distortion * (width / 2) as f64;
            let dy = cfg.distortion * (height / 2) as f64;
            let mut jitter = |d: f64| if d > 0.0 { rng.random_range(0.0..=d) } else { 0.0 };
            let start = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)];
            let end = [
                (jitter(dx), jitter(dy)),
                (w - 1.0 - jitter(dx), jitter(dy)),
                (w - 1.0 - jitter(dx), h - 1.0 - jitter(dy)),
                (jitter(dx), h - 1.0 - jitter(dy)),
            ];
            // Content at `start` moves to `end`; sampling runs end -> start.
            map = homography(end, start);
        }

        if let Some((left, top, cw, ch)) = sample_crop(cfg, width, height, rng) {
            let sx = cw / w;
            let sy = ch / h;
            let crop = Matrix3::new(
                sx,
                0.0,
                left + 0.5 * sx - 0.5,
                0.0,
                sy,
                top + 0.5 * sy - 0.5,
                0.0,
                0.0,
                1.0,
            );
            map = Some(match map {
                Some(p) => p * crop,
                None => crop,
            });
        }
        Warp { map }
    }

    fn source(&self, x: usize, y: usize) -> (f64, f64) {
        match &self.map {
            None => (x as f64, y as f64),
            Some(m) => {
                let v = m * Vector3::new(x as f64, y as f64, 1.0);
                (v.x / v.z, v.y / v.z)
            }
        }
    }

    /// Bilinear taps `(source pixel or None for fill, weight)` for one output pixel.
    fn taps(&self, x: usize, y: usize, width: usize, height: usize) -> [(Option<usize>, f64); 4] {
        let (sx, sy) = self.source(x, y);
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let at = |cx: f64, cy: f64| {
            let inside = cx >= 0.0 && cy >= 0.0 && cx < width as f64 && cy < height as f64;
            inside.then(|| cy as usize * width + cx as usize)
        };
        [
            (at(x0, y0), (1.0 - fx) * (1.0 - fy)),
            (at(x0 + 1.0, y0), fx * (1.0 - fy)),
            (at(x0, y0 + 1.0), (1.0 - fx) * fy),
            (at(x0 + 1.0, y0 + 1.0), fx * fy),
        ]
    }

    pub fn apply(&self, src: &Raster) -> Raster {
        if self.is_identity() {
            return src.clone();
        }
        let (w, h) = (src.width(), src.height());
        let data = src.data();
        let mut out = vec![0.0; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let o = (y * w + x) * 3;
                for (tap, wt) in self.taps(x, y, w, h) {
                    if wt == 0.0 {
                        continue;
                    }
                    for c in 0..3 {
                        out[o + c] += wt * tap.map_or(FILL, |i| data[i * 3 + c]);
                    }
                }
            }
        }
        Raster::from_data(w, h, out).expect("same dimensions")
    }

    /// Pulls a gradient on the warped image back onto the source image.
    pub fn apply_transpose(&self, d_out: &[f64], width: usize, height: usize) -> Vec<f64> {
        if self.is_identity() {
            return d_out.to_vec();
        }
        let mut d_in = vec![0.0; width * height * 3];
        for y in 0..height {
            for x in 0..width {
                let o = (y * width + x) * 3;
                for (tap, wt) in self.taps(x, y, width, height) {
                    if let (Some(i), true) = (tap, wt != 0.0) {
                        for c in 0..3 {
                            d_in[i * 3 + c] += wt * d_out[o + c];
                        }
                    }
                }
            }
        }
        d_in
    }
}

/// `(left, top, width, height)` of a random resized crop, or `None` when the
/// crop is the whole image.
fn sample_crop<R: Rng + ?Sized>(
    cfg: &AugmentConfig,
    width: usize,
    height: usize,
    rng: &mut R,
) -> Option<(f64, f64, f64, f64)> {
    let (w, h) = (width as f64, height as f64);
    let area = w * h;
    let (lo, hi) = cfg.crop_scale;
    let (r0, r1) = (cfg.crop_ratio.0.ln(), cfg.crop_ratio.1.ln());
    for _ in 0..10 {
        let target = area * if hi > lo { rng.random_range(lo..hi) } else { lo };
        let ratio = if r1 > r0 { rng.random_range(r0..r1) } else { r0 }.exp();
        let cw = (target * ratio).sqrt().round();
        let ch = (target / ratio).sqrt().round();
        if cw > 0.0 && cw <= w && ch > 0.0 && ch <= h {
            if cw == w && ch == h {
                return None;
            }
            let top = rng.random_range(0..=(height - ch as usize)) as f64;
            let left = rng.random_range(0..=(width - cw as usize)) as f64;
            return Some((left, top, cw, ch));
        }
    }
    // Fallback: centre crop at the nearest admissible aspect ratio.
    let ratio = w / h;
    let (cw, ch) = if ratio < cfg.crop_ratio.0 {
        (w, (w / cfg.crop_ratio.0).round())
    } else if ratio > cfg.crop_ratio.1 {
        ((h * cfg.crop_ratio.1).round(), h)
    } else {
        (w, h)
    };
    if cw == w && ch == h {
        return None;
    }
    Some(((w - cw) / 2.0, (h - ch) / 2.0, cw, ch))
}

/// `cfg.views` independently augmented copies of `raster`.
pub fn augment<R: Rng + ?Sized>(raster: &Raster, cfg: &AugmentConfig, rng: &mut R) -> Vec<Raster> {
    sample_warps(cfg, raster.width(), raster.height(), rng)
        .iter()
        .map(|w| w.apply(raster))
        .collect()
}

/// `cfg.views` random warps.
pub fn sample_warps<R: Rng + ?Sized>(cfg: &AugmentConfig, width: usize, height: usize, rng: &mut R) -> Vec<Warp> {
    (0..cfg.views).map(|_| Warp::sample(cfg, width, height, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(w: usize, h: usize) -> Raster {
        let gray: Vec<f64> = (0..w * h).map(|i| (i % 17) as f64 / 16.0).collect();
        Raster::from_gray(w, h, &gray).unwrap()
    }

    #[test]
    fn identity_settings_copy_input() {
        let cfg = AugmentConfig {
            views: 3,
            distortion: 0.0,
            crop_scale: (1.0, 1.0),
            ..AugmentConfig::default()
        };
        let img = gradient_image(24, 24);
        let views = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(views.len(), 3);
        assert!(views.iter().all(|v| *v == img));
    }

    #[test]
    fn default_produces_four_deterministic_views() {
        let img = gradient_image(32, 32);
        let a = augment(&img, &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = augment(&img, &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| *v != img));
        assert!(a.iter().flat_map(|v| v.data()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn transpose_is_adjoint() {
        // <W x, y> == <x, W^T y> for the linear part (fill contributes a constant).
        let (w, h) = (12, 10);
        let warp = Warp::sample(&AugmentConfig::default(), w, h, &mut ChaCha8Rng::seed_from_u64(3));
        let x = gradient_image(w, h);
        let zero = Raster::filled(w, h, 0.0);
        let y: Vec<f64> = (0..w * h * 3).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let wx: Vec<f64> = warp
            .apply(&x)
            .data()
            .iter()
            .zip(warp.apply(&zero).data())
            .map(|(a, b)| a - b)
            .collect();
        let lhs: f64 = wx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let wty = warp.apply_transpose(&y, w, h);
        let rhs: f64 = x.data().iter().zip(&wty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn validation() {
        let mut cfg = AugmentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.crop_scale = (0.9, 0.7);
        assert!(cfg.validate().is_err());
        cfg = AugmentConfig {
            views: 0,
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
