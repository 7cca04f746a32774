//! Camera resection: DLT projection matrices, their factorization and
//! RANSAC-wrapped PnP with known intrinsics.

use alloc::vec::Vec;

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::matching::{normalization_transform, sample_indices, RansacConfig, DEGENERATE_RATIO};
use crate::numerics::{rq_decompose, skew, smallest_singular_vector, solve_spd, svd3, Mat, Mat3, Rotation, Vec2, Vec3};
use crate::two_view::{CameraIntrinsics, CameraPose, Mat34};

/// Minimum correspondences for the linear projection-matrix estimate.
pub const MIN_DLT_POINTS: usize = 6;
pub const PNP_MAX_REFINE_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ResectionError {
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("3D points are coplanar or otherwise degenerate")]
    Degenerate,
    #[error("left 3x3 block of the projection matrix is singular")]
    SingularH,
    #[error("RANSAC found no consensus (best inlier count {best})")]
    NoConsensus { best: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence2D3D {
    pub point3d: Vec3,
    pub point2d: Vec2,
}

impl Correspondence2D3D {
    pub fn new(point3d: Vec3, point2d: Vec2) -> Self {
        Self { point3d, point2d }
    }
}

/// A 3x4 projection `M = [H | h]`, stored with unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(Mat34);

impl ProjectionMatrix {
    pub fn new(m: Mat34) -> ProjectionMatrix {
        let n = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let mut out = m;
        out.iter_mut().flatten().for_each(|v| *v /= n);
        ProjectionMatrix(out)
    }

    /// `K [R | t]`.
    pub fn compose(k: &CameraIntrinsics, pose: &CameraPose) -> ProjectionMatrix {
        Self::new(k.projection_matrix(pose))
    }

    pub fn matrix(&self) -> &Mat34 {
        &self.0
    }

    pub fn h(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ])
    }

    pub fn h_col(&self) -> Vec3 {
        Vec3::new(self.0[0][3], self.0[1][3], self.0[2][3])
    }

    /// Homogeneous projection; `None` when the point maps to infinity.
    pub fn project(&self, p: Vec3) -> Option<Vec2> {
        let x = self.h() * p + self.h_col();
        (x.z != 0.0).then(|| Vec2::new(x.x / x.z, x.y / x.z))
    }

    /// Frobenius distance to `other` after sign alignment.
    pub fn distance(&self, other: &ProjectionMatrix) -> f64 {
        let diff = |s: f64| {
            self.0
                .iter()
                .flatten()
                .zip(other.0.iter().flatten())
                .map(|(a, b)| (a - s * b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        diff(1.0).min(diff(-1.0))
    }
}

/// Similarity moving 3D points to zero mean and mean distance `sqrt(3)`.
fn normalize_3d(points: &[Vec3]) -> Result<(f64, Vec3), ResectionError> {
    let n = points.len() as f64;
    let mut mean = Vec3::ZERO;
    for p in points {
        mean += *p;
    }
    let mean = mean * (1.0 / n);
    let d = points.iter().map(|p| (*p - mean).norm()).sum::<f64>() / n;
    if !(d > 1e-12 * (1.0 + mean.max_abs())) {
        return Err(ResectionError::Degenerate);
    }
    Ok((3f64.sqrt() / d, mean))
}

/// Linear (DLT) estimate of the projection matrix from at least six
/// correspondences, with both point sets normalized first.
pub fn dlt_projection_matrix(corrs: &[Correspondence2D3D]) -> Result<ProjectionMatrix, ResectionError> {
    if corrs.len() < MIN_DLT_POINTS {
        return Err(ResectionError::InsufficientPoints {
            needed: MIN_DLT_POINTS,
            got: corrs.len(),
        });
    }
    let pts2: Vec<Vec2> = corrs.iter().map(|c| c.point2d).collect();
    let pts3: Vec<Vec3> = corrs.iter().map(|c| c.point3d).collect();
    let t2 = normalization_transform(&pts2).map_err(|_| ResectionError::Degenerate)?;
    let (s3, m3) = normalize_3d(&pts3)?;

    let mut a = Mat::zeros(2 * corrs.len(), 12);
    for (i, c) in corrs.iter().enumerate() {
        let p = (c.point3d - m3) * s3;
        let x = t2.apply(c.point2d);
        let xh = [p.x, p.y, p.z, 1.0];
        for k in 0..4 {
            // [0, -X, y X] and [X, 0, -x X]
            a[(2 * i, 4 + k)] = -xh[k];
            a[(2 * i, 8 + k)] = x.y * xh[k];
            a[(2 * i + 1, k)] = xh[k];
            a[(2 * i + 1, 8 + k)] = -x.x * xh[k];
        }
    }
    let nv = smallest_singular_vector(&a);
    if nv.ambiguous || nv.conditioning() < DEGENERATE_RATIO {
        return Err(ResectionError::Degenerate);
    }
    let mn: Vec<&[f64]> = nv.vector.chunks(4).collect();

    // M = T2^-1 Mn U with U = [[s I, -s m], [0, 1]].
    let t2inv = t2
        .matrix()
        .inverse()
        .expect("normalization transform is invertible");
    let mut mu = [[0.0; 4]; 3];
    for r in 0..3 {
        for c in 0..3 {
            mu[r][c] = mn[r][c] * s3;
        }
        mu[r][3] = mn[r][3] - s3 * (mn[r][0] * m3.x + mn[r][1] * m3.y + mn[r][2] * m3.z);
    }
    let mut m = [[0.0; 4]; 3];
    for r in 0..3 {
        for c in 0..4 {
            m[r][c] = (0..3).map(|k| t2inv.0[r][k] * mu[k][c]).sum();
        }
    }
    // Fix the overall sign so most points lie in front of the camera.
    let front = corrs
        .iter()
        .map(|c| {
            let w = m[2][0] * c.point3d.x + m[2][1] * c.point3d.y + m[2][2] * c.point3d.z + m[2][3];
            w.signum()
        })
        .sum::<f64>();
    if front < 0.0 {
        m.iter_mut().flatten().for_each(|v| *v = -*v);
    }
    Ok(ProjectionMatrix::new(m))
}

/// Factors `M` into intrinsics (with `K[2][2] = 1`) and a world-to-camera pose.
pub fn decompose_projection(m: &ProjectionMatrix) -> Result<(CameraIntrinsics, CameraPose), ResectionError> {
    let mut h = m.h();
    let mut hc = m.h_col();
    if h.det() < 0.0 {
        h = h.scale(-1.0);
        hc = -hc;
    }
    let (k, r) = rq_decompose(&h).map_err(|_| ResectionError::SingularH)?;
    let hinv = h.inverse().ok_or(ResectionError::SingularH)?;
    let k = k.scale(1.0 / k.0[2][2]);
    let center = -(hinv * hc);
    let intr = CameraIntrinsics {
        fx: k.0[0][0],
        fy: k.0[1][1],
        cx: k.0[0][2],
        cy: k.0[1][2],
        skew: k.0[0][1],
    };
    let pose = CameraPose::new(r, -(r * center));
    Ok((intr, pose))
}

/// Pose from a projection matrix when `K` is known: `[R | t] ~ K^-1 M`,
/// with the rotation snapped to SO(3).
pub fn pose_from_projection(m: &ProjectionMatrix, k: &CameraIntrinsics) -> Result<CameraPose, ResectionError> {
    let kinv = k.matrix().inverse().ok_or(ResectionError::SingularH)?;
    let a = kinv * m.h();
    let b = kinv * m.h_col();
    let (_, s, _) = svd3(&a);
    let mean_s = (s[0] + s[1] + s[2]) / 3.0;
    if !(s[2] > 1e-12 * s[0]) {
        return Err(ResectionError::SingularH);
    }
    let scale = if a.det() < 0.0 { -mean_s } else { mean_s };
    let r = Rotation::nearest(&a.scale(1.0 / scale));
    Ok(CameraPose::new(r, b * (1.0 / scale)))
}

fn reprojection_error(k: &CameraIntrinsics, pose: &CameraPose, c: &Correspondence2D3D) -> f64 {
    match k.project(pose, c.point3d) {
        Some(p) => p.dist(&c.point2d),
        None => f64::INFINITY,
    }
}

fn inlier_set(k: &CameraIntrinsics, pose: &CameraPose, corrs: &[Correspondence2D3D], thresh: f64) -> Vec<usize> {
    (0..corrs.len())
        .filter(|&i| reprojection_error(k, pose, &corrs[i]) < thresh)
        .collect()
}

fn pose_cost(k: &CameraIntrinsics, pose: &CameraPose, corrs: &[Correspondence2D3D]) -> f64 {
    corrs
        .iter()
        .map(|c| match k.project(pose, c.point3d) {
            Some(p) => {
                let d = p - c.point2d;
                d.x * d.x + d.y * d.y
            }
            None => f64::INFINITY,
        })
        .sum()
}

/// Levenberg-Marquardt on `sum |p_i - pi(R P_i + t)|^2` over a left
/// axis-angle increment and the translation. Only cost-reducing steps are
/// taken, so the returned pose is never worse than `init`.
pub fn refine_pose(
    k: &CameraIntrinsics,
    init: &CameraPose,
    corrs: &[Correspondence2D3D],
    max_iterations: usize,
) -> CameraPose {
    let mut pose = *init;
    let mut cost = pose_cost(k, &pose, corrs);
    if !cost.is_finite() {
        return pose;
    }
    let mut lambda = 1e-3;
    for _ in 0..max_iterations {
        let mut jtj = [0.0; 36];
        let mut jtr = [0.0; 6];
        for c in corrs {
            let rp = pose.rotation * c.point3d;
            let cam = rp + pose.translation;
            let (px, jp) = k.project_with_jacobian(cam);
            let r = [px.x - c.point2d.x, px.y - c.point2d.y];
            // d cam / d omega = -[R P]x, d cam / d t = I
            let sk = skew(rp);
            let mut j = [[0.0; 6]; 2];
            for row in 0..2 {
                for col in 0..3 {
                    j[row][col] = -(0..3).map(|m| jp[row][m] * sk.0[m][col]).sum::<f64>();
                    j[row][3 + col] = jp[row][col];
                }
            }
            for row in 0..2 {
                for a in 0..6 {
                    jtr[a] += j[row][a] * r[row];
                    for b in 0..6 {
                        jtj[a * 6 + b] += j[row][a] * j[row][b];
                    }
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut aug = jtj;
            for d in 0..6 {
                aug[d * 6 + d] += lambda * jtj[d * 6 + d].max(1e-12);
            }
            let neg: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(delta) = solve_spd(&aug, 6, &neg) else {
                lambda *= 10.0;
                continue;
            };
            let dw = Vec3::new(delta[0], delta[1], delta[2]);
            let cand = CameraPose::new(
                (Rotation::exp(dw) * pose.rotation).renormalized(),
                pose.translation + Vec3::new(delta[3], delta[4], delta[5]),
            );
            let c_cost = pose_cost(k, &cand, corrs);
            if c_cost < cost {
                let rel = (cost - c_cost) / cost.max(f64::MIN_POSITIVE);
                pose = cand;
                cost = c_cost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    return pose;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    pose
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub pose: CameraPose,
    /// Sorted indices into the input correspondences.
    pub inliers: Vec<usize>,
    pub iterations: usize,
    /// Mean reprojection error over the inliers, in pixels.
    pub mean_reproj_px: f64,
}

/// RANSAC over six-point DLT samples with known intrinsics, followed by
/// nonlinear refinement on the consensus set. `cfg.inlier_threshold_px` is
/// the reprojection threshold.
pub fn pnp_ransac(
    corrs: &[Correspondence2D3D],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<PnpResult, ResectionError> {
    if corrs.len() < MIN_DLT_POINTS {
        return Err(ResectionError::InsufficientPoints {
            needed: MIN_DLT_POINTS,
            got: corrs.len(),
        });
    }
    let thresh = cfg.inlier_threshold_px;
    let mut rng = cfg.rng();
    let mut idx = Vec::with_capacity(corrs.len());
    let mut sample = Vec::with_capacity(MIN_DLT_POINTS);
    let mut best: Option<(CameraPose, Vec<usize>)> = None;
    let mut needed = cfg.max_iterations;
    let mut it = 0;
    while it < needed.min(cfg.max_iterations) {
        it += 1;
        sample_indices(&mut rng, corrs.len(), MIN_DLT_POINTS, &mut idx);
        sample.clear();
        sample.extend(idx.iter().map(|&i| corrs[i]));
        let Ok(m) = dlt_projection_matrix(&sample) else {
            continue;
        };
        let Ok(pose) = pose_from_projection(&m, k) else {
            continue;
        };
        let inliers = inlier_set(k, &pose, corrs, thresh);
        if best.as_ref().is_none_or(|(_, b)| inliers.len() > b.len()) {
            needed = cfg.required_iterations(inliers.len() as f64 / corrs.len() as f64, MIN_DLT_POINTS);
            best = Some((pose, inliers));
        }
    }
    let (pose, inliers) = best.ok_or(ResectionError::NoConsensus { best: 0 })?;
    if inliers.len() < MIN_DLT_POINTS {
        return Err(ResectionError::NoConsensus { best: inliers.len() });
    }

    // Linear refit on the consensus set, kept only if it does not lose inliers.
    let subset: Vec<Correspondence2D3D> = inliers.iter().map(|&i| corrs[i]).collect();
    let mut pose = pose;
    if let Some(refit) = dlt_projection_matrix(&subset)
        .ok()
        .and_then(|m| pose_from_projection(&m, k).ok())
    {
        if pose_cost(k, &refit, &subset) < pose_cost(k, &pose, &subset) {
            pose = refit;
        }
    }
    let pose = refine_pose(k, &pose, &subset, PNP_MAX_REFINE_ITERATIONS);
    let mut inliers = inlier_set(k, &pose, corrs, thresh);
    if inliers.len() < MIN_DLT_POINTS {
        return Err(ResectionError::NoConsensus { best: inliers.len() });
    }
    inliers.sort_unstable();
    let mean_reproj_px =
        inliers.iter().map(|&i| reprojection_error(k, &pose, &corrs[i])).sum::<f64>() / inliers.len() as f64;
    Ok(PnpResult {
        pose,
        inliers,
        iterations: it,
        mean_reproj_px,
    })
}
