//! Report image preparation: exact crops, bilinear resize and channel
//! normalization into model input tensors.

use std::path::Path;

use image::{DynamicImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ModelManifest, TensorLayout};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("crop rect {rect:?} does not fit inside a {width}x{height} image")]
    CropOutOfBounds { rect: CropRect, width: u32, height: u32 },
    #[error("crop rect must have positive width and height, got {0:?}")]
    EmptyCrop(CropRect),
    #[error("cannot decode image {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("model `{0}` has no usable normalization constants")]
    Normalization(String),
    #[error("input size must be positive")]
    ZeroSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn full(image: &RgbImage) -> Self {
        Self { x: 0, y: 0, width: image.width(), height: image.height() }
    }

    fn fits(&self, width: u32, height: u32) -> bool {
        let right = u64::from(self.x) + u64::from(self.width);
        let bottom = u64::from(self.y) + u64::from(self.height);
        right <= u64::from(width) && bottom <= u64::from(height)
    }
}

/// Preprocessed model input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub height: u32,
    pub width: u32,
    pub layout: TensorLayout,
    /// `3 * height * width` values in `layout` order.
    pub values: Vec<f32>,
}

impl InputTensor {
    pub const CHANNELS: usize = 3;

    pub fn zeros(size: u32, layout: TensorLayout) -> Self {
        let n = Self::CHANNELS * size as usize * size as usize;
        Self { height: size, width: size, layout, values: vec![0.0; n] }
    }

    /// Value at channel `c`, row `y`, column `x`.
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        let (h, w) = (self.height as usize, self.width as usize);
        match self.layout {
            TensorLayout::Nchw => self.values[(c * h + y) * w + x],
            TensorLayout::Nhwc => self.values[(y * w + x) * Self::CHANNELS + c],
        }
    }

    /// Little-endian bytes of the values, used for content hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 4);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.push(self.layout as u8);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, PreprocessError> {
    let img = image::open(path).map_err(|source| PreprocessError::Decode {
        path: path.display().to_string(),
        source,
    })?;
    Ok(to_rgb(img))
}

/// Grayscale and alpha images are promoted to 3-channel RGB.
pub fn to_rgb(img: DynamicImage) -> RgbImage {
    match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => other.to_rgb8(),
    }
}

/// Copies the pixels inside `rect`; no resampling.
pub fn crop(image: &RgbImage, rect: CropRect) -> Result<RgbImage, PreprocessError> {
    if rect.width == 0 || rect.height == 0 {
        return Err(PreprocessError::EmptyCrop(rect));
    }
    if !rect.fits(image.width(), image.height()) {
        return Err(PreprocessError::CropOutOfBounds {
            rect,
            width: image.width(),
            height: image.height(),
        });
    }
    Ok(image::imageops::crop_imm(image, rect.x, rect.y, rect.width, rect.height).to_image())
}

/// Source sample positions and weights for one output axis.
///
/// Half-pixel centers: output index `o` maps to source coordinate
/// `(o + 0.5) * in / out - 0.5`, clamped to `[0, in - 1]`.
fn axis_taps(in_len: u32, out_len: u32) -> Vec<(usize, usize, f64)> {
    let scale = f64::from(in_len) / f64::from(out_len);
    let max = f64::from(in_len - 1);
    (0..out_len)
        .map(|o| {
            let src = ((f64::from(o) + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = src.floor();
            let frac = src - lo;
            let lo = lo as usize;
            let hi = (lo + 1).min(in_len as usize - 1);
            (lo, hi, frac)
        })
        .collect()
}

/// Bilinear resize to `width x height`; output is planar `[c][y][x]` in the
/// 0..=255 range. Resizing to the source size returns the exact pixel values.
pub fn resize_bilinear(image: &RgbImage, width: u32, height: u32) -> Vec<[f64; 3]> {
    let xs = axis_taps(image.width(), width);
    let ys = axis_taps(image.height(), height);
    let mut out = Vec::with_capacity(width as usize * height as usize);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p = |x: usize, y: usize| image.get_pixel(x as u32, y as u32).0;
            let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
            let mut px = [0.0; 3];
            for ch in 0..3 {
                let top = f64::from(a[ch]) + (f64::from(b[ch]) - f64::from(a[ch])) * fx;
                let bottom = f64::from(c[ch]) + (f64::from(d[ch]) - f64::from(c[ch])) * fx;
                px[ch] = top + (bottom - top) * fy;
            }
            out.push(px);
        }
    }
    out
}

/// Resize to the model's square input size (anisotropic, no letterboxing)
/// and normalize each channel as `(v / 255 - mean) / std`.
pub fn prepare_input(image: &RgbImage, manifest: &ModelManifest) -> Result<InputTensor, PreprocessError> {
    let size = manifest.input_size;
    if size == 0 {
        return Err(PreprocessError::ZeroSize);
    }
    let stds_ok = manifest.channel_stds.iter().all(|s| s.is_finite() && *s > 0.0);
    let means_ok = manifest.channel_means.iter().all(|m| m.is_finite());
    if !stds_ok || !means_ok {
        return Err(PreprocessError::Normalization(manifest.model_name.clone()));
    }

    let pixels = resize_bilinear(image, size, size);
    let plane = size as usize * size as usize;
    let mut values = vec![0f32; 3 * plane];
    for (i, px) in pixels.iter().enumerate() {
        for (c, &channel) in px.iter().enumerate() {
            let v = (channel / 255.0 - manifest.channel_means[c]) / manifest.channel_stds[c];
            let idx = match manifest.layout {
                TensorLayout::Nchw => c * plane + i,
                TensorLayout::Nhwc => i * 3 + c,
            };
            values[idx] = v as f32;
        }
    }
    Ok(InputTensor { height: size, width: size, layout: manifest.layout, values })
}
