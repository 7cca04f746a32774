//! Descriptor matching and fundamental-matrix geometric verification.
//!
//! Convention: for a left/right correspondence `(x_L, x_R)` in homogeneous
//! pixels, `x_R^T F x_L = 0`.

use alloc::vec::Vec;

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::numerics::{smallest_singular_vector, svd3, Mat, Mat3, Vec2};
use crate::sift::Descriptor;

/// Minimum RANSAC consensus for a fundamental matrix to be accepted.
pub const MIN_F_INLIERS: usize = 15;
/// `sigma_8 / sigma_1` of the 8-point system below which it is degenerate.
pub const DEGENERATE_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("cannot match against an empty descriptor set")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EpipolarError {
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("points are coincident; normalization is undefined")]
    DegeneratePoints,
    #[error("correspondences do not determine a unique fundamental matrix")]
    DegenerateConfiguration,
    #[error("RANSAC found no consensus (best inlier count {best})")]
    NoConsensus { best: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub idx_left: usize,
    pub idx_right: usize,
    /// Euclidean descriptor distance.
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// Ratio-test survivors that are also mutual nearest neighbours,
    /// ordered by `idx_left`.
    pub matches: Vec<Match>,
    /// Number of left descriptors passing the ratio test before the
    /// mutual-best cross-check.
    pub ratio_passed: usize,
}

/// Exhaustive nearest-neighbour matching with Lowe's ratio test
/// (`d1 < ratio * d2`) and a mutual-best cross-check.
pub fn match_descriptors(
    left: &[Descriptor],
    right: &[Descriptor],
    ratio: f64,
) -> Result<MatchResult, MatchError> {
    if left.is_empty() || right.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let mut best_l = alloc::vec![(f32::INFINITY, usize::MAX, f32::INFINITY); left.len()];
    let mut best_r = alloc::vec![(f32::INFINITY, usize::MAX); right.len()];
    for (i, dl) in left.iter().enumerate() {
        let bl = &mut best_l[i];
        for (j, dr) in right.iter().enumerate() {
            let d = dl.distance_squared(dr);
            if d < bl.0 {
                bl.2 = bl.0;
                bl.0 = d;
                bl.1 = j;
            } else if d < bl.2 {
                bl.2 = d;
            }
            if d < best_r[j].0 {
                best_r[j] = (d, i);
            }
        }
    }
    let ratio2 = (ratio * ratio) as f32;
    let mut out = MatchResult::default();
    for (i, &(d1, j, d2)) in best_l.iter().enumerate() {
        if !(d1 < ratio2 * d2) {
            continue;
        }
        out.ratio_passed += 1;
        if best_r[j].1 == i {
            out.matches.push(Match {
                idx_left: i,
                idx_right: j,
                distance: (d1 as f64).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Similarity `T = [[s, 0, -s*mx], [0, s, -s*my], [0, 0, 1]]` mapping a point
/// set to zero mean and mean distance `sqrt(2)` from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub mean: Vec2,
}

impl NormalizationTransform {
    pub fn matrix(&self) -> Mat3 {
        let s = self.scale;
        Mat3([
            [s, 0.0, -s * self.mean.x],
            [0.0, s, -s * self.mean.y],
            [0.0, 0.0, 1.0],
        ])
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        (p - self.mean) * self.scale
    }
}

pub fn normalization_transform(points: &[Vec2]) -> Result<NormalizationTransform, EpipolarError> {
    if points.len() < 2 {
        return Err(EpipolarError::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean = Vec2::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let mean_dist = points.iter().map(|p| p.dist(&mean)).sum::<f64>() / n;
    let extent = 1.0 + mean.x.abs().max(mean.y.abs());
    if !(mean_dist > 1e-12 * extent) {
        return Err(EpipolarError::DegeneratePoints);
    }
    Ok(NormalizationTransform {
        scale: core::f64::consts::SQRT_2 / mean_dist,
        mean,
    })
}

/// Rank-2, unit-Frobenius fundamental matrix with `x_R^T F x_L = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FundamentalMatrix(Mat3);

impl FundamentalMatrix {
    /// Wraps an arbitrary matrix after rank-2 projection, scaling and sign
    /// canonicalization.
    pub fn from_matrix(m: &Mat3) -> FundamentalMatrix {
        let (u, s, v) = svd3(m);
        let f = u * Mat3::diag([s[0], s[1], 0.0]) * v.transpose();
        FundamentalMatrix(canonical_unit(&f))
    }

    /// Wraps a matrix that is already in canonical form, e.g. one read back
    /// from disk. No projection is applied.
    pub fn from_canonical(m: Mat3) -> FundamentalMatrix {
        FundamentalMatrix(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Algebraic residual `x_R^T F x_L`.
    pub fn residual(&self, left: Vec2, right: Vec2) -> f64 {
        right.to_homogeneous().dot(&(self.0 * left.to_homogeneous()))
    }

    /// First-order geometric (Sampson) distance in pixels.
    pub fn sampson_distance(&self, left: Vec2, right: Vec2) -> f64 {
        let xl = left.to_homogeneous();
        let xr = right.to_homogeneous();
        let fx = self.0 * xl;
        let ftx = self.0.transpose() * xr;
        let e = xr.dot(&fx);
        let denom = fx.x * fx.x + fx.y * fx.y + ftx.x * ftx.x + ftx.y * ftx.y;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        (e * e / denom).sqrt()
    }
}

/// Unit Frobenius norm with the largest-magnitude entry made positive.
fn canonical_unit(m: &Mat3) -> Mat3 {
    let n = m.frobenius_norm();
    let mut f = m.scale(1.0 / n);
    let mut pivot = 0.0f64;
    for v in f.0.iter().flatten() {
        if v.abs() > pivot.abs() {
            pivot = *v;
        }
    }
    if pivot < 0.0 {
        f = f.scale(-1.0);
    }
    f
}

/// Normalized 8-point algorithm on `(left, right)` pixel pairs.
pub fn estimate_fundamental_8pt(pairs: &[(Vec2, Vec2)]) -> Result<FundamentalMatrix, EpipolarError> {
    if pairs.len() < 8 {
        return Err(EpipolarError::InsufficientPoints {
            needed: 8,
            got: pairs.len(),
        });
    }
    let lefts: Vec<Vec2> = pairs.iter().map(|p| p.0).collect();
    let rights: Vec<Vec2> = pairs.iter().map(|p| p.1).collect();
    let t1 = normalization_transform(&lefts)?;
    let t2 = normalization_transform(&rights)?;

    let mut g = Mat::zeros(pairs.len(), 9);
    for (row, (l, r)) in pairs.iter().enumerate() {
        let (l, r) = (t1.apply(*l), t2.apply(*r));
        let vals = [r.x * l.x, r.x * l.y, r.x, r.y * l.x, r.y * l.y, r.y, l.x, l.y, 1.0];
        for (c, v) in vals.iter().enumerate() {
            g[(row, c)] = *v;
        }
    }
    let nv = smallest_singular_vector(&g);
    if nv.ambiguous || nv.conditioning() < DEGENERATE_RATIO {
        return Err(EpipolarError::DegenerateConfiguration);
    }
    let f_norm = Mat3::from_slice(&nv.vector);
    let (u, s, v) = svd3(&f_norm);
    let f_rank2 = u * Mat3::diag([s[0], s[1], 0.0]) * v.transpose();
    let f = t2.matrix().transpose() * f_rank2 * t1.matrix();
    if !f.is_finite() || f.frobenius_norm() == 0.0 {
        return Err(EpipolarError::DegenerateConfiguration);
    }
    Ok(FundamentalMatrix(canonical_unit(&f)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Inlier threshold in pixels (Sampson distance for F, reprojection
    /// error for PnP).
    pub inlier_threshold_px: f64,
    pub confidence: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            inlier_threshold_px: 1.5,
            confidence: 0.999,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn with_threshold(self, px: f64) -> Self {
        Self {
            inlier_threshold_px: px,
            ..self
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }

    /// Iterations needed to draw an all-inlier sample of `sample_size` with
    /// the configured confidence, capped at `max_iterations`.
    pub fn required_iterations(&self, inlier_ratio: f64, sample_size: usize) -> usize {
        let good = inlier_ratio.powi(sample_size as i32);
        if good >= 1.0 {
            return 1;
        }
        if good <= 0.0 {
            return self.max_iterations;
        }
        let n = (1.0 - self.confidence).ln() / (1.0 - good).ln();
        if !n.is_finite() || n >= self.max_iterations as f64 {
            self.max_iterations
        } else {
            (n.ceil() as usize).max(1)
        }
    }
}

/// Draws `k` distinct indices from `0..n` (partial Fisher-Yates).
pub fn sample_indices<R: RngCore>(rng: &mut R, n: usize, k: usize, buf: &mut Vec<usize>) {
    debug_assert!(k <= n);
    buf.clear();
    buf.extend(0..n);
    for i in 0..k {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        buf.swap(i, j);
    }
    buf.truncate(k);
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFundamental {
    pub model: FundamentalMatrix,
    /// Sorted indices into the input correspondences.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

fn fundamental_inliers(f: &FundamentalMatrix, pairs: &[(Vec2, Vec2)], thresh: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, (l, r))| f.sampson_distance(*l, *r) < thresh)
        .map(|(i, _)| i)
        .collect()
}

/// RANSAC over minimal 8-point samples, scored by Sampson distance, with a
/// final least-squares refit on the consensus set.
pub fn ransac_fundamental_points(
    pairs: &[(Vec2, Vec2)],
    cfg: &RansacConfig,
) -> Result<RansacFundamental, EpipolarError> {
    if pairs.len() < 8 {
        return Err(EpipolarError::InsufficientPoints {
            needed: 8,
            got: pairs.len(),
        });
    }
    let mut rng = cfg.rng();
    let mut idx = Vec::with_capacity(pairs.len());
    let mut sample = Vec::with_capacity(8);
    let mut best: Option<(FundamentalMatrix, Vec<usize>)> = None;
    let mut needed = cfg.max_iterations;
    let mut it = 0;
    while it < needed.min(cfg.max_iterations) {
        it += 1;
        sample_indices(&mut rng, pairs.len(), 8, &mut idx);
        sample.clear();
        sample.extend(idx.iter().map(|&i| pairs[i]));
        let Ok(f) = estimate_fundamental_8pt(&sample) else {
            continue;
        };
        let inliers = fundamental_inliers(&f, pairs, cfg.inlier_threshold_px);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            let ratio = inliers.len() as f64 / pairs.len() as f64;
            needed = cfg.required_iterations(ratio, 8);
            best = Some((f, inliers));
        }
    }
    let Some((mut model, mut inliers)) = best else {
        return Err(EpipolarError::NoConsensus { best: 0 });
    };
    if inliers.len() < MIN_F_INLIERS {
        return Err(EpipolarError::NoConsensus { best: inliers.len() });
    }
    for _ in 0..3 {
        let subset: Vec<(Vec2, Vec2)> = inliers.iter().map(|&i| pairs[i]).collect();
        let Ok(refit) = estimate_fundamental_8pt(&subset) else {
            break;
        };
        let refit_inliers = fundamental_inliers(&refit, pairs, cfg.inlier_threshold_px);
        if refit_inliers.len() < inliers.len() {
            break;
        }
        let grew = refit_inliers.len() > inliers.len();
        model = refit;
        inliers = refit_inliers;
        if !grew {
            break;
        }
    }
    Ok(RansacFundamental {
        model,
        inliers,
        iterations: it,
    })
}

/// [`ransac_fundamental_points`] on descriptor matches; returned inlier
/// indices refer to `matches`.
pub fn ransac_fundamental(
    matches: &[Match],
    kps_left: &[Vec2],
    kps_right: &[Vec2],
    cfg: &RansacConfig,
) -> Result<RansacFundamental, EpipolarError> {
    let pairs: Vec<(Vec2, Vec2)> = matches
        .iter()
        .map(|m| (kps_left[m.idx_left], kps_right[m.idx_right]))
        .collect();
    ransac_fundamental_points(&pairs, cfg)
}
