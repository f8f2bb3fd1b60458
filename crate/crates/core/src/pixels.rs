//! Interleaved RGB images with real-valued samples in [0, 255].

use gutcheck_nn::Tensor;
use image::{DynamicImage, ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use crate::Error;

/// Side length every model consumes.
pub const SIDE: usize = 128;

/// Name of the resampling filter used by [`standardize`], recorded in manifests.
pub const RESIZE_FILTER: &str = "bilinear-half-pixel";

/// Height × width × 3, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pixels {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Pixels {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * 3, "pixel buffer size");
        Pixels { height, width, data }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Pixels { height, width, data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Channel-planar copy of shape `[3, H, W]` scaled by `scale` and shifted by `shift`.
    pub fn to_chw(&self, scale: f32, shift: f32) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; 3 * plane];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c] * scale + shift;
            }
        }
        out
    }

    /// Inverse of [`Pixels::to_chw`].
    pub fn from_chw(height: usize, width: usize, chw: &[f32], scale: f32, shift: f32) -> Self {
        let plane = height * width;
        assert_eq!(chw.len(), 3 * plane);
        let mut data = vec![0.0; 3 * plane];
        for i in 0..plane {
            for c in 0..3 {
                data[i * 3 + c] = chw[c * plane + i] * scale + shift;
            }
        }
        Pixels { height, width, data }
    }

    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        let raw = self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, raw).expect("buffer size")
    }

    pub fn from_rgb8(img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> Self {
        Pixels {
            height: img.height() as usize,
            width: img.width() as usize,
            data: img.as_raw().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Bilinear resample with half-pixel centres and edge clamping.
    pub fn resize(&self, height: usize, width: usize) -> Pixels {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
            let scale = inp as f32 / out as f32;
            (0..out)
                .map(|i| {
                    let src = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f32);
                    let lo = src.floor() as usize;
                    let hi = (lo + 1).min(inp - 1);
                    (lo, hi, src - lo as f32)
                })
                .collect()
        };
        let (ty, tx) = (taps(height, self.height), taps(width, self.width));
        let mut data = vec![0.0; height * width * 3];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                for c in 0..3 {
                    let top = self.get(y0, x0, c) * (1.0 - fx) + self.get(y0, x1, c) * fx;
                    let bot = self.get(y1, x0, c) * (1.0 - fx) + self.get(y1, x1, c) * fx;
                    data[(oy * width + ox) * 3 + c] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        Pixels { height, width, data }
    }
}

/// Converts a decoded image to the model input contract: 128×128 RGB in [0, 255].
///
/// Gray images are replicated to three channels and alpha is dropped.
pub fn standardize(img: &DynamicImage) -> Result<Pixels, Error> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidInput("image has a zero dimension".into()));
    }
    let raw = match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => Pixels::from_rgb8(&img.to_rgb8()),
        _ => {
            let f = img.to_rgb32f();
            Pixels {
                height: f.height() as usize,
                width: f.width() as usize,
                data: f.as_raw().iter().map(|&v| v * 255.0).collect(),
            }
        }
    };
    Ok(standardize_pixels(&raw))
}

/// Resizes to 128×128 and clamps to [0, 255]; idempotent.
pub fn standardize_pixels(p: &Pixels) -> Pixels {
    let mut out = p.resize(SIDE, SIDE);
    for v in &mut out.data {
        *v = v.clamp(0.0, 255.0);
    }
    out
}

/// Stacks images into an NCHW tensor after `v * scale + shift`.
pub fn batch_tensor(images: &[&Pixels], scale: f32, shift: f32) -> Tensor {
    let (h, w) = images.first().map_or((0, 0), |p| (p.height, p.width));
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for p in images {
        assert_eq!((p.height, p.width), (h, w), "mixed image sizes in batch");
        data.extend(p.to_chw(scale, shift));
    }
    Tensor::new(&[images.len(), 3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chw_round_trip() {
        let p = Pixels::new(2, 3, (0..18).map(|v| v as f32).collect());
        let chw = p.to_chw(1.0, 0.0);
        assert_eq!(&chw[..6], &[0.0, 3.0, 6.0, 9.0, 12.0, 15.0]);
        assert_eq!(Pixels::from_chw(2, 3, &chw, 1.0, 0.0), p);
    }

    #[test]
    fn halving_averages_pixel_pairs() {
        let p = Pixels::new(2, 2, vec![0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0, 30.0, 30.0, 30.0]);
        let r = p.resize(1, 1);
        assert_eq!(r.data, vec![15.0; 3]);
    }

    #[test]
    fn gray_and_alpha_inputs_become_rgb() {
        let gray = DynamicImage::ImageLuma8(image::GrayImage::from_pixel(5, 4, image::Luma([77])));
        let s = standardize(&gray).unwrap();
        assert_eq!((s.height, s.width), (SIDE, SIDE));
        assert!(s.data.iter().all(|&v| v == 77.0));
        let rgba = DynamicImage::ImageRgba8(image::RgbaImage::from_pixel(3, 3, image::Rgba([1, 2, 3, 0])));
        let s = standardize(&rgba).unwrap();
        assert_eq!(&s.data[..3], &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_size_is_rejected() {
        let empty = DynamicImage::ImageRgb8(image::RgbImage::new(0, 4));
        assert!(matches!(standardize(&empty), Err(Error::InvalidInput(_))));
    }
}
