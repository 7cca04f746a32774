//! Bundle adjustment: Levenberg-Marquardt over camera poses and points.
//!
//! Poses are parameterized by an axis-angle vector and a translation. The
//! first pose is held fixed to remove the rigid gauge freedom; global scale
//! is left free and handled by the damping.

use alloc::vec;
use alloc::vec::Vec;

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::numerics::{skew, solve_spd, Mat3, Rotation, Vec2, Vec3};
use crate::two_view::{CameraIntrinsics, CameraPose};

/// Residual magnitude (per component) used for observations behind a camera.
pub const BEHIND_CAMERA_RESIDUAL: f64 = 1e4;
/// Minimum camera-frame depth for a valid projection.
pub const MIN_DEPTH: f64 = 1e-9;
/// Above this many free poses the point blocks are eliminated by Schur complement.
pub const DENSE_MAX_POSES: usize = 50;
/// Above this many unknowns the dense solve is skipped even for few poses.
pub const DENSE_MAX_UNKNOWNS: usize = 900;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BAError {
    #[error("point lies behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("observation {0} references a missing pose or point")]
    InvalidIndex(usize),
    #[error("point {point} has {count} observations, need at least 2")]
    TooFewObservations { point: usize, count: usize },
    #[error("problem has no free parameters")]
    NoFreeParameters,
    #[error("damping exceeded 1e12 without an accepted step")]
    Diverged,
}

/// `pi(M, P)`: pinhole projection of a world point.
pub fn project_point(pose: &CameraPose, k: &CameraIntrinsics, p: Vec3) -> Result<Vec2, BAError> {
    let c = pose.transform(p);
    if !(c.z > MIN_DEPTH) {
        return Err(BAError::BehindCamera(c.z));
    }
    Ok(k.denormalize(Vec2::new(c.x / c.z, c.y / c.z)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pose: usize,
    pub point: usize,
    pub pixel: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BAProblem {
    pub poses: Vec<CameraPose>,
    pub points: Vec<Vec3>,
    pub intrinsics: CameraIntrinsics,
    pub observations: Vec<Observation>,
}

impl BAProblem {
    pub fn new(
        poses: Vec<CameraPose>,
        points: Vec<Vec3>,
        intrinsics: CameraIntrinsics,
        observations: Vec<Observation>,
    ) -> Result<Self, BAError> {
        let p = Self {
            poses,
            points,
            intrinsics,
            observations,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BAError> {
        let mut counts = vec![0usize; self.points.len()];
        for (i, o) in self.observations.iter().enumerate() {
            if o.pose >= self.poses.len() || o.point >= self.points.len() {
                return Err(BAError::InvalidIndex(i));
            }
            counts[o.point] += 1;
        }
        if let Some((point, &count)) = counts.iter().enumerate().find(|(_, c)| **c < 2) {
            return Err(BAError::TooFewObservations { point, count });
        }
        Ok(())
    }

    /// Per-observation residual `pi(M_j, P_i) - p_ij`; `None` if behind.
    pub fn residual(&self, obs: &Observation) -> Option<Vec2> {
        project_point(&self.poses[obs.pose], &self.intrinsics, self.points[obs.point])
            .ok()
            .map(|px| px - obs.pixel)
    }

    /// Total squared reprojection error with behind-camera residuals clamped.
    pub fn cost(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| match self.residual(o) {
                Some(r) => r.x * r.x + r.y * r.y,
                None => 2.0 * BEHIND_CAMERA_RESIDUAL * BEHIND_CAMERA_RESIDUAL,
            })
            .sum()
    }

    /// Root mean squared 2D reprojection error per observation, in pixels.
    pub fn rmse(&self) -> f64 {
        if self.observations.is_empty() {
            return 0.0;
        }
        (self.cost() / self.observations.len() as f64).sqrt()
    }

    /// Mean reprojection error per pose over its valid observations
    /// (`NaN` for poses without any).
    pub fn per_view_mean_error(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.poses.len()];
        let mut n = vec![0usize; self.poses.len()];
        for o in &self.observations {
            if let Some(r) = self.residual(o) {
                sum[o.pose] += r.norm();
                n[o.pose] += 1;
            }
        }
        sum.iter()
            .zip(&n)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect()
    }
}

/// `d(R(w) p)/dw` for the axis-angle map `R = exp(w)`.
pub fn rotate_jacobian(w: Vec3, r: &Rotation, p: Vec3) -> Mat3 {
    let rpx = *r.matrix() * skew(p);
    let theta2 = w.norm_squared();
    if theta2 < 1e-16 {
        return rpx.scale(-1.0);
    }
    let wwt = Mat3::from_cols(w * w.x, w * w.y, w * w.z);
    let inner = wwt + (r.matrix().transpose() - Mat3::IDENTITY) * skew(w);
    (rpx * inner).scale(-1.0 / theta2)
}

/// Residuals and Jacobian blocks of a problem, ordered by observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// `2 * |obs|` entries: `(dx, dy)` per observation.
    pub residuals: Vec<f64>,
    /// 2x6 block per observation w.r.t. `(w, t)` of its pose; zero for pose 0.
    pub pose_blocks: Vec<[[f64; 6]; 2]>,
    /// 2x3 block per observation w.r.t. its point.
    pub point_blocks: Vec<[[f64; 3]; 2]>,
    /// Set for observations behind their camera (residual clamped, blocks zero).
    pub behind: Vec<bool>,
}

impl Linearization {
    pub fn cost(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

/// Working copy of the parameters: axis-angle vectors alongside the rotations
/// they generate, so the fixed pose is never round-tripped through `log`.
#[derive(Clone)]
struct Params {
    omegas: Vec<Vec3>,
    rotations: Vec<Rotation>,
    translations: Vec<Vec3>,
    points: Vec<Vec3>,
}

impl Params {
    fn from_problem(p: &BAProblem) -> Self {
        Self {
            omegas: p.poses.iter().map(|c| c.rotation.log()).collect(),
            rotations: p.poses.iter().map(|c| c.rotation).collect(),
            translations: p.poses.iter().map(|c| c.translation).collect(),
            points: p.points.clone(),
        }
    }

    fn write_back(&self, p: &mut BAProblem) {
        for k in 1..p.poses.len() {
            p.poses[k] = CameraPose::new(self.rotations[k], self.translations[k]);
        }
        p.points.clone_from(&self.points);
    }
}

fn linearize(problem: &BAProblem, x: &Params, jacobian: bool) -> Linearization {
    let n = problem.observations.len();
    let mut lin = Linearization {
        residuals: Vec::with_capacity(2 * n),
        pose_blocks: Vec::with_capacity(if jacobian { n } else { 0 }),
        point_blocks: Vec::with_capacity(if jacobian { n } else { 0 }),
        behind: Vec::with_capacity(n),
    };
    let k = &problem.intrinsics;
    for o in &problem.observations {
        let r = &x.rotations[o.pose];
        let p = x.points[o.point];
        let cam = *r * p + x.translations[o.pose];
        if !(cam.z > MIN_DEPTH) {
            lin.residuals.push(BEHIND_CAMERA_RESIDUAL);
            lin.residuals.push(BEHIND_CAMERA_RESIDUAL);
            lin.behind.push(true);
            if jacobian {
                lin.pose_blocks.push([[0.0; 6]; 2]);
                lin.point_blocks.push([[0.0; 3]; 2]);
            }
            continue;
        }
        let (px, jp) = k.project_with_jacobian(cam);
        lin.residuals.push(px.x - o.pixel.x);
        lin.residuals.push(px.y - o.pixel.y);
        lin.behind.push(false);
        if !jacobian {
            continue;
        }
        let mut pb = [[0.0; 6]; 2];
        if o.pose != 0 {
            let dw = rotate_jacobian(x.omegas[o.pose], r, p);
            for row in 0..2 {
                for c in 0..3 {
                    pb[row][c] = (0..3).map(|m| jp[row][m] * dw.0[m][c]).sum();
                    pb[row][3 + c] = jp[row][c];
                }
            }
        }
        let rm = r.matrix();
        let mut qb = [[0.0; 3]; 2];
        for row in 0..2 {
            for c in 0..3 {
                qb[row][c] = (0..3).map(|m| jp[row][m] * rm.0[m][c]).sum();
            }
        }
        lin.pose_blocks.push(pb);
        lin.point_blocks.push(qb);
    }
    lin
}

/// Residuals and analytic Jacobian blocks at the problem's current state.
pub fn residuals_and_jacobian(problem: &BAProblem) -> Linearization {
    linearize(problem, &Params::from_problem(problem), true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BAOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the run.
    pub tolerance: f64,
    pub gradient_tolerance: f64,
    /// Relative step size below which the iterate is considered stationary.
    pub step_tolerance: f64,
}

impl Default for BAOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BAReport {
    pub initial_rmse_px: f64,
    pub final_rmse_px: f64,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    pub per_view_before: Vec<f64>,
    pub per_view_after: Vec<f64>,
    /// Observations behind their camera at the end of the run.
    pub behind_camera: usize,
}

/// Normal-equation pieces accumulated from one linearization.
struct Normal {
    /// 6x6 per free pose (pose k lives at index k - 1).
    u: Vec<[f64; 36]>,
    /// 3x3 per point.
    v: Vec<[f64; 9]>,
    /// 6x3 per observation (zero for pose 0).
    w: Vec<[f64; 18]>,
    gc: Vec<[f64; 6]>,
    gp: Vec<[f64; 3]>,
}

fn accumulate(problem: &BAProblem, lin: &Linearization) -> Normal {
    let nfree = problem.poses.len() - 1;
    let mut ne = Normal {
        u: vec![[0.0; 36]; nfree],
        v: vec![[0.0; 9]; problem.points.len()],
        w: vec![[0.0; 18]; problem.observations.len()],
        gc: vec![[0.0; 6]; nfree],
        gp: vec![[0.0; 3]; problem.points.len()],
    };
    for (i, o) in problem.observations.iter().enumerate() {
        if lin.behind[i] {
            continue;
        }
        let r = [lin.residuals[2 * i], lin.residuals[2 * i + 1]];
        let jc = &lin.pose_blocks[i];
        let jp = &lin.point_blocks[i];
        let v = &mut ne.v[o.point];
        for a in 0..3 {
            for b in 0..3 {
                v[a * 3 + b] += jp[0][a] * jp[0][b] + jp[1][a] * jp[1][b];
            }
            ne.gp[o.point][a] += jp[0][a] * r[0] + jp[1][a] * r[1];
        }
        if o.pose == 0 {
            continue;
        }
        let f = o.pose - 1;
        for a in 0..6 {
            for b in 0..6 {
                ne.u[f][a * 6 + b] += jc[0][a] * jc[0][b] + jc[1][a] * jc[1][b];
            }
            for b in 0..3 {
                ne.w[i][a * 3 + b] = jc[0][a] * jp[0][b] + jc[1][a] * jp[1][b];
            }
            ne.gc[f][a] += jc[0][a] * r[0] + jc[1][a] * r[1];
        }
    }
    ne
}

fn damp(d: f64, lambda: f64) -> f64 {
    d + lambda * d.max(1e-9)
}

fn inv3(m: &[f64; 9]) -> Option<Mat3> {
    Mat3([[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]]).inverse()
}

/// Solves the damped system; returns `(pose steps, point steps)`.
fn solve_schur(problem: &BAProblem, ne: &Normal, lambda: f64) -> Option<(Vec<[f64; 6]>, Vec<Vec3>)> {
    let nfree = ne.u.len();
    let nc = 6 * nfree;
    let mut vinv = Vec::with_capacity(ne.v.len());
    for v in &ne.v {
        let mut d = *v;
        for a in 0..3 {
            d[a * 4] = damp(d[a * 4], lambda);
        }
        vinv.push(inv3(&d)?);
    }
    let mut s = vec![0.0; nc * nc];
    let mut rhs = vec![0.0; nc];
    for (f, u) in ne.u.iter().enumerate() {
        for a in 0..6 {
            for b in 0..6 {
                let mut val = u[a * 6 + b];
                if a == b {
                    val = damp(val, lambda);
                }
                s[(6 * f + a) * nc + 6 * f + b] = val;
            }
            rhs[6 * f + a] = -ne.gc[f][a];
        }
    }
    // Observations grouped by point for the elimination.
    let mut by_point: Vec<Vec<usize>> = vec![Vec::new(); problem.points.len()];
    for (i, o) in problem.observations.iter().enumerate() {
        if o.pose != 0 {
            by_point[o.point].push(i);
        }
    }
    let mut y = vec![[0.0; 18]; problem.observations.len()];
    for (pt, obs) in by_point.iter().enumerate() {
        let vi = &vinv[pt];
        let gp = Vec3::new(ne.gp[pt][0], ne.gp[pt][1], ne.gp[pt][2]);
        let vg = *vi * gp;
        for &i in obs {
            // Y = W V^-1
            let w = &ne.w[i];
            for a in 0..6 {
                for b in 0..3 {
                    y[i][a * 3 + b] = (0..3).map(|m| w[a * 3 + m] * vi.0[m][b]).sum();
                }
            }
            let f = problem.observations[i].pose - 1;
            for a in 0..6 {
                rhs[6 * f + a] += (0..3).map(|m| w[a * 3 + m] * vg[m]).sum::<f64>();
            }
        }
        for &i in obs {
            let fi = problem.observations[i].pose - 1;
            for &j in obs {
                let fj = problem.observations[j].pose - 1;
                let wj = &ne.w[j];
                for a in 0..6 {
                    for b in 0..6 {
                        let v: f64 = (0..3).map(|m| y[i][a * 3 + m] * wj[b * 3 + m]).sum();
                        s[(6 * fi + a) * nc + 6 * fj + b] -= v;
                    }
                }
            }
        }
    }
    let dc = if nc > 0 { solve_spd(&s, nc, &rhs)? } else { Vec::new() };
    let pose_steps: Vec<[f64; 6]> = dc
        .chunks(6)
        .map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]])
        .collect();
    let mut point_steps = Vec::with_capacity(problem.points.len());
    for (pt, obs) in by_point.iter().enumerate() {
        let mut b = Vec3::new(-ne.gp[pt][0], -ne.gp[pt][1], -ne.gp[pt][2]);
        for &i in obs {
            let f = problem.observations[i].pose - 1;
            for m in 0..3 {
                b[m] -= (0..6).map(|a| ne.w[i][a * 3 + m] * dc[6 * f + a]).sum::<f64>();
            }
        }
        point_steps.push(vinv[pt] * b);
    }
    Some((pose_steps, point_steps))
}

fn solve_dense(problem: &BAProblem, ne: &Normal, lambda: f64) -> Option<(Vec<[f64; 6]>, Vec<Vec3>)> {
    let nfree = ne.u.len();
    let nc = 6 * nfree;
    let n = nc + 3 * problem.points.len();
    let mut h = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for (f, u) in ne.u.iter().enumerate() {
        for a in 0..6 {
            for b in 0..6 {
                h[(6 * f + a) * n + 6 * f + b] = u[a * 6 + b];
            }
            g[6 * f + a] = ne.gc[f][a];
        }
    }
    for (pt, v) in ne.v.iter().enumerate() {
        let o = nc + 3 * pt;
        for a in 0..3 {
            for b in 0..3 {
                h[(o + a) * n + o + b] = v[a * 3 + b];
            }
            g[o + a] = ne.gp[pt][a];
        }
    }
    for (i, ob) in problem.observations.iter().enumerate() {
        if ob.pose == 0 {
            continue;
        }
        let (c0, p0) = (6 * (ob.pose - 1), nc + 3 * ob.point);
        for a in 0..6 {
            for b in 0..3 {
                let w = ne.w[i][a * 3 + b];
                h[(c0 + a) * n + p0 + b] += w;
                h[(p0 + b) * n + c0 + a] += w;
            }
        }
    }
    for d in 0..n {
        h[d * n + d] = damp(h[d * n + d], lambda);
    }
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let delta = solve_spd(&h, n, &neg)?;
    let pose_steps = delta[..nc]
        .chunks(6)
        .map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]])
        .collect();
    let point_steps = delta[nc..]
        .chunks(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect();
    Some((pose_steps, point_steps))
}

fn uses_dense(problem: &BAProblem) -> bool {
    let nfree = problem.poses.len().saturating_sub(1);
    nfree <= DENSE_MAX_POSES && 6 * nfree + 3 * problem.points.len() <= DENSE_MAX_UNKNOWNS
}

fn apply_step(x: &Params, pose_steps: &[[f64; 6]], point_steps: &[Vec3]) -> Params {
    let mut out = x.clone();
    for (f, d) in pose_steps.iter().enumerate() {
        let k = f + 1;
        out.omegas[k] = x.omegas[k] + Vec3::new(d[0], d[1], d[2]);
        out.rotations[k] = Rotation::exp(out.omegas[k]);
        out.translations[k] = x.translations[k] + Vec3::new(d[3], d[4], d[5]);
    }
    for (p, d) in out.points.iter_mut().zip(point_steps) {
        *p += *d;
    }
    out
}

fn step_is_negligible(x: &Params, pose_steps: &[[f64; 6]], point_steps: &[Vec3], tol: f64) -> bool {
    let mut step = 0.0;
    let mut size = 0.0;
    for (f, d) in pose_steps.iter().enumerate() {
        step += d.iter().map(|v| v * v).sum::<f64>();
        size += x.omegas[f + 1].norm_squared() + x.translations[f + 1].norm_squared();
    }
    for (p, d) in x.points.iter().zip(point_steps) {
        step += d.norm_squared();
        size += p.norm_squared();
    }
    step.sqrt() <= tol * (size.sqrt() + tol)
}

/// Damped Gauss-Newton on the total squared reprojection error.
///
/// Solves `(J^T J + lambda diag(J^T J)) delta = -J^T r`, accepting a step only
/// when it strictly lowers the cost. Pose 0 is never modified.
pub fn optimize(problem: &BAProblem, opts: &BAOptions) -> Result<(BAProblem, BAReport), BAError> {
    problem.validate()?;
    if problem.poses.len() <= 1 && problem.points.is_empty() {
        return Err(BAError::NoFreeParameters);
    }
    let dense = uses_dense(problem);
    let mut x = Params::from_problem(problem);
    let mut lin = linearize(problem, &x, true);
    let initial_cost = lin.cost();
    let mut cost = initial_cost;
    let mut lambda = LAMBDA_INIT;
    let mut accepted = 0usize;
    let mut converged = false;
    let mut iter = 0;
    while iter < opts.max_iterations {
        iter += 1;
        let ne = accumulate(problem, &lin);
        let gmax = ne
            .gc
            .iter()
            .flat_map(|g| g.iter())
            .chain(ne.gp.iter().flat_map(|g| g.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < opts.gradient_tolerance {
            converged = true;
            break;
        }
        let mut step_taken = false;
        while lambda <= LAMBDA_MAX {
            let solved = if dense {
                solve_dense(problem, &ne, lambda)
            } else {
                solve_schur(problem, &ne, lambda)
            };
            let Some((dc, dp)) = solved else {
                lambda *= 10.0;
                continue;
            };
            if step_is_negligible(&x, &dc, &dp, opts.step_tolerance) {
                converged = true;
                break;
            }
            let cand = apply_step(&x, &dc, &dp);
            let cand_lin = linearize(problem, &cand, false);
            let new_cost = cand_lin.cost();
            if new_cost < cost {
                let rel = (cost - new_cost) / cost;
                x = cand;
                for k in 1..x.omegas.len() {
                    x.omegas[k] = x.rotations[k].log();
                    x.rotations[k] = x.rotations[k].renormalized();
                }
                cost = new_cost;
                lambda = (lambda * 0.1).max(1e-15);
                accepted += 1;
                step_taken = true;
                if rel < opts.tolerance || new_cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !step_taken {
            if accepted == 0 {
                return Err(BAError::Diverged);
            }
            // No further decrease available at any damping: a local minimum.
            converged = true;
            break;
        }
        lin = linearize(problem, &x, true);
    }
    let mut out = problem.clone();
    x.write_back(&mut out);
    let final_lin = linearize(&out, &Params::from_problem(&out), false);
    let nobs = problem.observations.len().max(1) as f64;
    let final_cost = final_lin.cost().min(cost);
    let report = BAReport {
        initial_rmse_px: (initial_cost / nobs).sqrt(),
        final_rmse_px: (final_cost / nobs).sqrt(),
        initial_cost,
        final_cost,
        iterations: accepted,
        converged,
        per_view_before: problem.per_view_mean_error(),
        per_view_after: out.per_view_mean_error(),
        behind_camera: final_lin.behind.iter().filter(|b| **b).count(),
    };
    Ok((out, report))
}
