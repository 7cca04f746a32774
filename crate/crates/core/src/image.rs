//! Grayscale images and the Gaussian filtering used to build scale spaces.

use alloc::vec;
use alloc::vec::Vec;

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive (got {width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("intensity {0} outside [0, 1]")]
    IntensityOutOfRange(f64),
    #[error("gaussian sigma must be positive (got {0})")]
    NonPositiveSigma(f64),
    #[error("image {width}x{height} is too small to halve")]
    TooSmall { width: usize, height: usize },
}

/// Row-major grayscale image with intensities in `[0, 1]`.
///
/// Intermediate scale-space products (differences of Gaussians) reuse the
/// type through [`GrayImage::from_raw`], which skips the range check.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        let img = Self::from_raw(width, height, data)?;
        if let Some(&bad) = img.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::IntensityOutOfRange(bad));
        }
        Ok(img)
    }

    /// Like [`GrayImage::new`] but without the `[0, 1]` range check.
    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// 8-bit gray samples scaled by `1/255`.
    pub fn from_luma8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::from_raw(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Interleaved 8-bit RGB converted with luma weights 0.299 / 0.587 / 0.114.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.len() != width * height * 3 {
            return Err(ImageError::BufferSize {
                expected: width * height * 3,
                got: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(3)
            .map(|p| {
                let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        Self::from_raw(width, height, data)
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xi, yi)
    }

    /// Bilinear sample at a sub-pixel position, edges replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi);
        let b = self.get_clamped(xi + 1, yi);
        let c = self.get_clamped(xi, yi + 1);
        let d = self.get_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    /// Pointwise `self - other`; dimensions must agree.
    pub fn difference(&self, other: &GrayImage) -> GrayImage {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "image dimensions differ"
        );
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Sampled Gaussian of radius `ceil(4 sigma)`, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, ImageError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ImageError::NonPositiveSigma(sigma));
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, ImageError> {
    let kernel = gaussian_kernel(sigma)?;
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xs = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * row[xs];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let ys = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &tmp[ys * w..(ys + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        data: out,
    })
}

/// Nearest-neighbour decimation by two: `out(x, y) = in(2x, 2y)`.
pub fn half_sample(img: &GrayImage) -> Result<GrayImage, ImageError> {
    if img.width < 2 || img.height < 2 {
        return Err(ImageError::TooSmall {
            width: img.width,
            height: img.height,
        });
    }
    let (w, h) = (img.width / 2, img.height / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(2 * x, 2 * y));
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        data,
    })
}
