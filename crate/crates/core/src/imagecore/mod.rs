//! Float raster container and the pixel-wise helpers shared by every other
//! module.

mod histogram;
pub mod io;
mod metrics;

pub use histogram::histogram_match;
pub use metrics::{psnr, rmse, MetricReport, SampleMetrics, PSNR_CAP_DB};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major, channel-interleaved float image in linear light.
///
/// Samples are nominally in `[0, 1]`; values above one are allowed until an
/// explicit clip. Every sample is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert!(value.is_finite());
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::from_raw(width, height, channels, data)
    }

    /// Internal constructor for data produced by finite arithmetic.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite sample");
        Self { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &ImageF, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Spatial compatibility only; channel counts may differ.
    pub fn ensure_same_size(&self, other: &ImageF, what: &str) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::from_raw(self.width, self.height, self.channels, data)
    }

    pub fn zip_map(&self, other: &ImageF, f: impl Fn(f64, f64) -> f64) -> Result<ImageF> {
        self.ensure_same_shape(other, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_raw(self.width, self.height, self.channels, data))
    }

    /// Mean over channels of the pixel at `(x, y)`.
    pub fn channel_mean(&self, x: usize, y: usize) -> f64 {
        self.pixel(x, y).iter().sum::<f64>() / self.channels as f64
    }

    pub fn clip(&self, lo: f64, hi: f64) -> ImageF {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Rounds every sample to the nearest `f32`, which makes the image exactly
    /// representable in a PFM file.
    pub fn round_to_f32(&self) -> ImageF {
        self.map(|v| v as f32 as f64)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImageF> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::invalid(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(Self::from_raw(width, height, c, data))
    }

    /// Replicates a single-channel image into three channels; other images are
    /// returned unchanged.
    pub fn to_rgb(&self) -> ImageF {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self::from_raw(self.width, self.height, 3, data)
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.data.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

/// Sensor readout depth used by [`clip_quantize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    pub fn levels(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            _ => Err(Error::invalid(format!("unsupported bit depth {bits}"))),
        }
    }
}

/// Maps every sample `s` to `s^exponent`.
///
/// With `exponent = 2.2` this linearises gamma-compressed input; `1.0` is the
/// identity. Negative samples are rejected.
pub fn gamma_expand(img: &ImageF, exponent: f64) -> Result<ImageF> {
    if !(exponent.is_finite() && exponent > 0.0) {
        return Err(Error::invalid(format!("gamma exponent must be positive, got {exponent}")));
    }
    if let Some(v) = img.data().iter().find(|v| **v < 0.0) {
        return Err(Error::invalid(format!("negative sample {v} cannot be gamma expanded")));
    }
    Ok(img.map(|v| v.powf(exponent)))
}

/// Inverse of [`gamma_expand`]: `s^(1/exponent)`.
pub fn gamma_compress(img: &ImageF, exponent: f64) -> Result<ImageF> {
    gamma_expand(img, 1.0 / exponent)
}

/// Clips to `[0, 1]` and rounds to the nearest of `2^bits - 1` levels.
pub fn clip_quantize(img: &ImageF, depth: BitDepth) -> ImageF {
    let levels = depth.levels();
    img.map(|v| (v.clamp(0.0, 1.0) * levels).round() / levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn new_rejects_bad_length_and_nan() {
        assert!(matches!(ImageF::new(2, 2, 1, vec![0.0; 3]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            ImageF::new(1, 1, 1, vec![f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(ImageF::new(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn gamma_examples() {
        let img = ImageF::new(1, 1, 1, vec![0.5]).unwrap();
        assert_abs_diff_eq!(gamma_expand(&img, 2.2).unwrap().get(0, 0, 0), 0.217_637_640_8, epsilon = 1e-9);
        assert_eq!(gamma_expand(&img, 1.0).unwrap(), img);
        let one = ImageF::filled(3, 2, 3, 1.0);
        assert_eq!(gamma_expand(&one, 0.37).unwrap(), one);
        assert_eq!(gamma_expand(&one, 2.2).unwrap(), one);
    }

    #[test]
    fn gamma_rejects_negative() {
        let img = ImageF::new(2, 1, 1, vec![0.1, -0.1]).unwrap();
        assert!(matches!(gamma_expand(&img, 2.2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gamma_roundtrip_on_grid() {
        let img = ImageF::from_fn(101, 1, 1, |x, _, _| x as f64 / 100.0);
        for exponent in [0.45, 1.0, 2.2, 3.0] {
            let back = gamma_compress(&gamma_expand(&img, exponent).unwrap(), exponent).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn quantize_examples() {
        let img = ImageF::new(3, 1, 1, vec![1.5, 0.5, 0.0]).unwrap();
        let q = clip_quantize(&img, BitDepth::Eight);
        assert_eq!(q.data()[0], 1.0);
        assert_eq!(q.data()[1], 128.0 / 255.0);
        assert_abs_diff_eq!(q.data()[1], 0.50196, epsilon = 1e-5);
        assert_eq!(q.data()[2], 0.0);
        let q16 = clip_quantize(&img, BitDepth::Sixteen);
        assert_eq!(q16.data()[1], 32768.0 / 65535.0);
        assert!(BitDepth::from_bits(12).is_err());
    }

    #[test]
    fn crop_and_rgb() {
        let img = ImageF::from_fn(4, 3, 1, |x, y, _| (y * 4 + x) as f64);
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(img.crop(3, 0, 2, 1).is_err());
        let rgb = c.to_rgb();
        assert_eq!(rgb.channels(), 3);
        assert_eq!(rgb.pixel(1, 1), &[10.0, 10.0, 10.0]);
    }
}
