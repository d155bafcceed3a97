//! RGB float images in `[0, 1]`, row-major, channels interleaved.

use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    /// All-white background.
    pub fn white(width: usize, height: usize) -> Self {
        Raster::filled(width, height, 1.0)
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::domain(format!(
                "raster data has {} values, expected {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    /// Grey image with every channel equal to `gray[y * width + x]`.
    pub fn from_gray(width: usize, height: usize, gray: &[f64]) -> Result<Self> {
        if gray.len() != width * height {
            return Err(Error::domain("gray buffer size mismatch"));
        }
        let data = gray.iter().flat_map(|&v| [v, v, v]).collect();
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel-mean intensity per pixel.
    pub fn gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|c| (c[0] + c[1] + c[2]) / 3.0)
            .collect()
    }

    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        let bytes = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::Io(io),
                other => Error::Io(std::io::Error::other(other)),
            })
    }

    /// Loads an RGB image, bilinearly resized to `width x height` if needed.
    pub fn load_png(path: &Path, width: usize, height: usize) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            reason: e.to_string(),
            expected: "an RGB or grayscale PNG image",
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let src: Vec<f64> = rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
        if (w, h) == (width, height) {
            return Raster::from_data(w, h, src);
        }
        let mut out = vec![0.0; width * height * 3];
        for c in 0..3 {
            let plane: Vec<f64> = src.iter().skip(c).step_by(3).copied().collect();
            let resized = resize_bilinear(&plane, w, h, width, height);
            for (i, v) in resized.into_iter().enumerate() {
                out[i * 3 + c] = v;
            }
        }
        Raster::from_data(width, height, out)
    }
}

/// Bilinear resize of a single-channel image with half-pixel centres and
/// edge clamping (`align_corners = false`).
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    if (sw, sh) == (dw, dh) {
        return src.to_vec();
    }
    let axis = |dst: usize, n_src: usize, n_dst: usize| {
        let s = ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_src - 1);
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = axis(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, fx) = axis(x, sw, dw);
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}
