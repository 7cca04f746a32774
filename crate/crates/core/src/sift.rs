//! SIFT keypoints and descriptors.
//!
//! Scale space: `layers_per_octave + 3` Gaussian images per octave at
//! `sigma_i = base_sigma * k^i`, `k = 2^(1/layers_per_octave)`, and their
//! pairwise differences. The next octave starts from the Gaussian at
//! `2 * base_sigma`, decimated by two. The input is not upsampled.
//!
//! Gradients for orientation and descriptors come from 3x3 Sobel filters.

use alloc::vec::Vec;
use core::f64::consts::PI;

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::image::{gaussian_blur, half_sample, GrayImage, ImageError};

const TWO_PI: f64 = 2.0 * PI;
const ORIENTATION_BINS: usize = 36;
const ORIENTATION_PEAK_RATIO: f64 = 0.8;
/// Gaussian window for the orientation histogram, in units of keypoint sigma.
const ORIENTATION_SIGMA_FACTOR: f64 = 1.5;
const DESCRIPTOR_CELLS: usize = 4;
const DESCRIPTOR_BINS: usize = 8;
/// Width of one descriptor cell in units of keypoint sigma.
const DESCRIPTOR_CELL_FACTOR: f64 = 3.0;
const DESCRIPTOR_CLAMP: f64 = 0.2;
const MAX_REFINE_STEPS: usize = 5;

pub const DESCRIPTOR_LEN: usize = DESCRIPTOR_CELLS * DESCRIPTOR_CELLS * DESCRIPTOR_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SiftError {
    #[error("image {width}x{height} is too small for a single octave")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid SIFT parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SiftParams {
    /// Number of Gaussian intervals per octave (searchable DoG layers).
    pub layers_per_octave: usize,
    /// Threshold on `|D|` at the refined extremum, divided by `layers_per_octave`.
    pub contrast_threshold: f64,
    /// Principal curvature ratio bound `r` for the edge test.
    pub edge_threshold: f64,
    /// Blur of the first Gaussian level of every octave.
    pub base_sigma: f64,
    /// Upper bound on the octave count; `None` uses `floor(log2(min(w, h))) - 2`.
    pub max_octaves: Option<usize>,
    /// Blur assumed already present in the input image.
    pub assumed_blur: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            layers_per_octave: 3,
            contrast_threshold: 0.04,
            edge_threshold: 10.0,
            base_sigma: 1.6,
            max_octaves: None,
            assumed_blur: 0.5,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<(), SiftError> {
        if self.layers_per_octave < 1 {
            return Err(SiftError::InvalidParams("layers_per_octave must be >= 1"));
        }
        if !(self.contrast_threshold > 0.0) || !(self.edge_threshold > 0.0) {
            return Err(SiftError::InvalidParams("thresholds must be positive"));
        }
        if !(self.base_sigma > 0.0) || !(self.assumed_blur >= 0.0) {
            return Err(SiftError::InvalidParams("sigmas must be positive"));
        }
        if self.max_octaves == Some(0) {
            return Err(SiftError::InvalidParams("max_octaves must be >= 1"));
        }
        Ok(())
    }

    /// Multiplicative step between consecutive Gaussian levels.
    pub fn k(&self) -> f64 {
        2.0f64.powf(1.0 / self.layers_per_octave as f64)
    }

    /// Number of octaves for an image of the given size.
    pub fn octave_count(&self, width: usize, height: usize) -> Result<usize, SiftError> {
        let min_dim = width.min(height);
        let n = if min_dim == 0 {
            0
        } else {
            (usize::BITS - 1 - min_dim.leading_zeros()) as i64 - 2
        };
        if n < 1 {
            return Err(SiftError::ImageTooSmall { width, height });
        }
        let n = n as usize;
        Ok(self.max_octaves.map_or(n, |m| m.min(n)))
    }
}

#[derive(Debug, Clone)]
pub struct Octave {
    pub gaussians: Vec<GrayImage>,
    pub dogs: Vec<GrayImage>,
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    pub base_sigma: f64,
    pub layers_per_octave: usize,
    pub k: f64,
}

impl ScaleSpace {
    /// Blur (in octave pixels) of Gaussian level `layer`, fractional layers allowed.
    pub fn sigma_at(&self, layer: f64) -> f64 {
        self.base_sigma * 2.0f64.powf(layer / self.layers_per_octave as f64)
    }
}

/// Discrete scale-space extremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub octave: usize,
    pub layer: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Sub-pixel position in the input image frame.
    pub x: f64,
    pub y: f64,
    /// Scale in input image pixels.
    pub sigma: f64,
    pub octave: usize,
    /// DoG layer (integer part of the refined scale coordinate).
    pub layer: usize,
    /// Dominant gradient direction in `[0, 2 pi)`, image axes (y down).
    pub orientation: f64,
    /// Interpolated DoG value at the extremum.
    pub response: f64,
}

impl Keypoint {
    fn octave_scale(&self) -> f64 {
        (1u64 << self.octave) as f64
    }

    /// Scale expressed in pixels of the keypoint's octave.
    pub fn octave_sigma(&self) -> f64 {
        self.sigma / self.octave_scale()
    }
}

/// Unit-norm 128-bin gradient histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn values(&self) -> &[f32; DESCRIPTOR_LEN] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn distance_squared(&self, other: &Descriptor) -> f32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        (self.distance_squared(other) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("descriptor window has no gradient energy")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorOutput {
    pub descriptor: Descriptor,
    /// Set when part of the sampling window fell outside the image.
    pub truncated: bool,
}

/// Counts of candidates removed by each refinement filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefineStats {
    pub unstable: usize,
    pub low_contrast: usize,
    pub edge: usize,
}

pub fn build_scale_space(img: &GrayImage, params: &SiftParams) -> Result<ScaleSpace, SiftError> {
    params.validate()?;
    let n_octaves = params.octave_count(img.width(), img.height())?;
    let s = params.layers_per_octave;
    let k = params.k();
    let n_gauss = s + 3;

    let sig: Vec<f64> = (0..n_gauss).map(|i| params.base_sigma * k.powi(i as i32)).collect();
    let increments: Vec<f64> = (1..n_gauss)
        .map(|i| (sig[i] * sig[i] - sig[i - 1] * sig[i - 1]).sqrt())
        .collect();

    let pre = params.base_sigma * params.base_sigma - params.assumed_blur * params.assumed_blur;
    let mut base = if pre > 0.0 {
        gaussian_blur(img, pre.sqrt())?
    } else {
        img.clone()
    };

    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        if o > 0 {
            let prev: &Octave = &octaves[o - 1];
            base = half_sample(&prev.gaussians[s])?;
        }
        let mut gaussians = Vec::with_capacity(n_gauss);
        gaussians.push(base.clone());
        for inc in &increments {
            let next = gaussian_blur(gaussians.last().unwrap(), *inc)?;
            gaussians.push(next);
        }
        let dogs = gaussians
            .windows(2)
            .map(|w| w[1].difference(&w[0]))
            .collect();
        octaves.push(Octave { gaussians, dogs });
    }
    Ok(ScaleSpace {
        octaves,
        base_sigma: params.base_sigma,
        layers_per_octave: s,
        k,
    })
}

/// Strict 26-neighbour extrema over interior DoG layers and pixels,
/// ordered by `(octave, layer, y, x)`.
pub fn detect_extrema(ss: &ScaleSpace) -> Vec<Candidate> {
    detect_extrema_above(ss, 0.0)
}

/// [`detect_extrema`] restricted to samples with `|D| > min_abs`.
pub fn detect_extrema_above(ss: &ScaleSpace, min_abs: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (o, oct) in ss.octaves.iter().enumerate() {
        let dogs = &oct.dogs;
        if dogs.len() < 3 {
            continue;
        }
        let (w, h) = (dogs[0].width(), dogs[0].height());
        if w < 3 || h < 3 {
            continue;
        }
        for l in 1..dogs.len() - 1 {
            let (below, cur, above) = (&dogs[l - 1], &dogs[l], &dogs[l + 1]);
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = cur.get(x, y);
                    if !(v.abs() > min_abs) {
                        continue;
                    }
                    if is_strict_extremum(v, x, y, below, cur, above) {
                        out.push(Candidate {
                            octave: o,
                            layer: l,
                            x,
                            y,
                        });
                    }
                }
            }
        }
    }
    out
}

fn is_strict_extremum(
    v: f64,
    x: usize,
    y: usize,
    below: &GrayImage,
    cur: &GrayImage,
    above: &GrayImage,
) -> bool {
    let mut is_max = true;
    let mut is_min = true;
    for (idx, img) in [below, cur, above].into_iter().enumerate() {
        for dy in 0..3 {
            for dx in 0..3 {
                if idx == 1 && dx == 1 && dy == 1 {
                    continue;
                }
                let n = img.get(x + dx - 1, y + dy - 1);
                is_max &= n < v;
                is_min &= n > v;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

struct DogDerivatives {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
}

fn dog_derivatives(dogs: &[GrayImage], l: usize, x: usize, y: usize) -> DogDerivatives {
    let c = &dogs[l];
    let p = &dogs[l - 1];
    let n = &dogs[l + 1];
    let v = c.get(x, y);
    let dx = (c.get(x + 1, y) - c.get(x - 1, y)) * 0.5;
    let dy = (c.get(x, y + 1) - c.get(x, y - 1)) * 0.5;
    let ds = (n.get(x, y) - p.get(x, y)) * 0.5;
    let dxx = c.get(x + 1, y) + c.get(x - 1, y) - 2.0 * v;
    let dyy = c.get(x, y + 1) + c.get(x, y - 1) - 2.0 * v;
    let dss = n.get(x, y) + p.get(x, y) - 2.0 * v;
    let dxy = (c.get(x + 1, y + 1) - c.get(x - 1, y + 1) - c.get(x + 1, y - 1)
        + c.get(x - 1, y - 1))
        * 0.25;
    let dxs = (n.get(x + 1, y) - n.get(x - 1, y) - p.get(x + 1, y) + p.get(x - 1, y)) * 0.25;
    let dys = (n.get(x, y + 1) - n.get(x, y - 1) - p.get(x, y + 1) + p.get(x, y - 1)) * 0.25;
    DogDerivatives {
        value: v,
        grad: [dx, dy, ds],
        hess: [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]],
    }
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let m = crate::numerics::Mat3(*a);
    let inv = m.inverse()?;
    let r = inv * crate::numerics::Vec3::from_array(*b);
    Some(r.to_array())
}

/// Quadratic sub-pixel refinement, contrast and edge filtering.
pub fn refine_and_filter(
    candidates: &[Candidate],
    ss: &ScaleSpace,
    params: &SiftParams,
) -> (Vec<Keypoint>, RefineStats) {
    let mut stats = RefineStats::default();
    let mut out = Vec::with_capacity(candidates.len());
    let s = ss.layers_per_octave as f64;
    let contrast_floor = params.contrast_threshold / s;
    let r = params.edge_threshold;
    let edge_bound = (r + 1.0) * (r + 1.0) / r;

    'cands: for cand in candidates {
        let dogs = &ss.octaves[cand.octave].dogs;
        let (w, h) = (dogs[0].width(), dogs[0].height());
        let (mut x, mut y, mut l) = (cand.x, cand.y, cand.layer);
        let mut step = 0;
        let (deriv, offset) = loop {
            let d = dog_derivatives(dogs, l, x, y);
            let Some(off) = solve3(&d.hess, &d.grad).map(|v| [-v[0], -v[1], -v[2]]) else {
                stats.unstable += 1;
                continue 'cands;
            };
            if off.iter().all(|o| o.abs() < 0.5) {
                break (d, off);
            }
            step += 1;
            if step >= MAX_REFINE_STEPS || off.iter().any(|o| !o.is_finite() || o.abs() > 1e3) {
                stats.unstable += 1;
                continue 'cands;
            }
            let nx = x as f64 + off[0].round();
            let ny = y as f64 + off[1].round();
            let nl = l as f64 + off[2].round();
            if nx < 1.0
                || ny < 1.0
                || nl < 1.0
                || nx > (w - 2) as f64
                || ny > (h - 2) as f64
                || nl > (dogs.len() - 2) as f64
            {
                stats.unstable += 1;
                continue 'cands;
            }
            x = nx as usize;
            y = ny as usize;
            l = nl as usize;
        };

        let contrast = deriv.value
            + 0.5 * (deriv.grad[0] * offset[0] + deriv.grad[1] * offset[1] + deriv.grad[2] * offset[2]);
        if contrast.abs() < contrast_floor {
            stats.low_contrast += 1;
            continue;
        }
        let (dxx, dyy, dxy) = (deriv.hess[0][0], deriv.hess[1][1], deriv.hess[0][1]);
        let tr = dxx + dyy;
        let det = dxx * dyy - dxy * dxy;
        if det <= 0.0 || tr * tr >= edge_bound * det {
            stats.edge += 1;
            continue;
        }
        let scale = (1u64 << cand.octave) as f64;
        out.push(Keypoint {
            x: (x as f64 + offset[0]) * scale,
            y: (y as f64 + offset[1]) * scale,
            sigma: ss.sigma_at(l as f64 + offset[2]) * scale,
            octave: cand.octave,
            layer: l,
            orientation: 0.0,
            response: contrast,
        });
    }
    (out, stats)
}

/// Sobel gradient `(gx, gy)` at an interior pixel.
#[inline]
fn sobel(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let p = |dx: usize, dy: usize| img.get(x + dx - 1, y + dy - 1);
    let gx = (p(2, 0) + 2.0 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2.0 * p(0, 1) + p(0, 2));
    let gy = (p(0, 2) + 2.0 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2.0 * p(1, 0) + p(2, 0));
    (gx, gy)
}

fn wrap_angle(a: f64) -> f64 {
    let r = a % TWO_PI;
    let r = if r < 0.0 { r + TWO_PI } else { r };
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Orientation histogram around a keypoint (36 bins, smoothed).
pub fn orientation_histogram(kp: &Keypoint, ss: &ScaleSpace) -> [f64; ORIENTATION_BINS] {
    let img = &ss.octaves[kp.octave].gaussians[kp.layer];
    let scale = kp.octave_scale();
    let (cx, cy) = ((kp.x / scale).round() as isize, (kp.y / scale).round() as isize);
    let sigma_w = ORIENTATION_SIGMA_FACTOR * kp.octave_sigma();
    let radius = (3.0 * sigma_w).round() as isize;
    let inv = -1.0 / (2.0 * sigma_w * sigma_w);
    let (w, h) = (img.width() as isize, img.height() as isize);

    let mut raw = [0.0; ORIENTATION_BINS];
    for dy in -radius..=radius {
        let py = cy + dy;
        if py < 1 || py >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = cx + dx;
            if px < 1 || px >= w - 1 || dx * dx + dy * dy > radius * radius {
                continue;
            }
            let (gx, gy) = sobel(img, px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ang = wrap_angle(gy.atan2(gx));
            let bin = (ang * ORIENTATION_BINS as f64 / TWO_PI).round() as usize % ORIENTATION_BINS;
            raw[bin] += mag * (((dx * dx + dy * dy) as f64) * inv).exp();
        }
    }
    let mut hist = [0.0; ORIENTATION_BINS];
    for (i, hv) in hist.iter_mut().enumerate() {
        let at = |d: isize| raw[(i as isize + d).rem_euclid(ORIENTATION_BINS as isize) as usize];
        *hv = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
    }
    hist
}

/// Assigns dominant orientations; a keypoint is duplicated for every further
/// histogram peak reaching 80% of the maximum.
pub fn assign_orientations(kps: &[Keypoint], ss: &ScaleSpace) -> Vec<Keypoint> {
    let mut out = Vec::with_capacity(kps.len());
    for kp in kps {
        let hist = orientation_histogram(kp, ss);
        let max = hist.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) {
            continue;
        }
        for i in 0..ORIENTATION_BINS {
            let left = hist[(i + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
            let right = hist[(i + 1) % ORIENTATION_BINS];
            let c = hist[i];
            if c > left && c > right && c >= ORIENTATION_PEAK_RATIO * max {
                let denom = left - 2.0 * c + right;
                let shift = if denom != 0.0 { 0.5 * (left - right) / denom } else { 0.0 };
                let bin = i as f64 + shift;
                let mut k = *kp;
                k.orientation = wrap_angle(bin * TWO_PI / ORIENTATION_BINS as f64);
                out.push(k);
            }
        }
    }
    out
}

/// 4x4x8 gradient histogram in the keypoint's rotated, scaled frame.
pub fn compute_descriptor(kp: &Keypoint, ss: &ScaleSpace) -> Result<DescriptorOutput, DescriptorError> {
    let img = &ss.octaves[kp.octave].gaussians[kp.layer];
    let scale = kp.octave_scale();
    let (xo, yo) = (kp.x / scale, kp.y / scale);
    let cell = DESCRIPTOR_CELL_FACTOR * kp.octave_sigma();
    let d = DESCRIPTOR_CELLS as f64;
    let radius = (cell * core::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let (cos_t, sin_t) = (kp.orientation.cos(), kp.orientation.sin());
    let weight_scale = -1.0 / (0.5 * d * d);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (cx, cy) = (xo.round() as isize, yo.round() as isize);
    let bins_per_rad = DESCRIPTOR_BINS as f64 / TWO_PI;

    let mut hist = [0.0f64; DESCRIPTOR_LEN];
    let mut truncated = false;
    for py in (cy - radius)..=(cy + radius) {
        for px in (cx - radius)..=(cx + radius) {
            let (dx, dy) = (px as f64 - xo, py as f64 - yo);
            // Offsets in the keypoint frame, in cell units.
            let u = (cos_t * dx + sin_t * dy) / cell;
            let v = (-sin_t * dx + cos_t * dy) / cell;
            let cbin = u + d / 2.0 - 0.5;
            let rbin = v + d / 2.0 - 0.5;
            if !(cbin > -1.0 && cbin < d && rbin > -1.0 && rbin < d) {
                continue;
            }
            if px < 1 || py < 1 || px >= w - 1 || py >= h - 1 {
                truncated = true;
                continue;
            }
            let (gx, gy) = sobel(img, px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = ((u * u + v * v) * weight_scale).exp();
            let obin = wrap_angle(gy.atan2(gx) - kp.orientation) * bins_per_rad;
            accumulate_trilinear(&mut hist, rbin, cbin, obin, mag * weight);
        }
    }

    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(DescriptorError::Degenerate);
    }
    hist.iter_mut().for_each(|v| *v = (*v / norm).min(DESCRIPTOR_CLAMP));
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut values = [0.0f32; DESCRIPTOR_LEN];
    for (dst, src) in values.iter_mut().zip(hist.iter()) {
        *dst = (*src / norm) as f32;
    }
    Ok(DescriptorOutput {
        descriptor: Descriptor(values),
        truncated,
    })
}

fn accumulate_trilinear(hist: &mut [f64; DESCRIPTOR_LEN], rbin: f64, cbin: f64, obin: f64, value: f64) {
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
    let (r0, c0, o0) = (r0 as isize, c0 as isize, o0 as isize);
    let n = DESCRIPTOR_CELLS as isize;
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        let r = r0 + dr;
        if r < 0 || r >= n {
            continue;
        }
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let c = c0 + dc;
            if c < 0 || c >= n {
                continue;
            }
            for (dor, wo) in [(0, 1.0 - fo), (1, fo)] {
                let o = (o0 + dor).rem_euclid(DESCRIPTOR_BINS as isize);
                let idx = ((r * n + c) as usize) * DESCRIPTOR_BINS + o as usize;
                hist[idx] += value * wr * wc * wo;
            }
        }
    }
}

/// Keypoints with parallel descriptors.
#[derive(Debug, Clone, Default)]
pub struct Features {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Full detector and descriptor. Output order follows `(octave, layer, y, x)`
/// of the discrete extremum, with orientation duplicates adjacent.
pub fn detect_features(img: &GrayImage, params: &SiftParams) -> Result<Features, SiftError> {
    let ss = build_scale_space(img, params)?;
    // Samples this far below the contrast floor cannot pass it after refinement.
    let prefilter = 0.5 * params.contrast_threshold / params.layers_per_octave as f64;
    let candidates = detect_extrema_above(&ss, prefilter);
    let (refined, _) = refine_and_filter(&candidates, &ss, params);
    let oriented = assign_orientations(&refined, &ss);
    let mut features = Features::default();
    for kp in oriented {
        if let Ok(out) = compute_descriptor(&kp, &ss) {
            features.keypoints.push(kp);
            features.descriptors.push(out.descriptor);
        }
    }
    Ok(features)
}
