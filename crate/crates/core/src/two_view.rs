//! Essential matrices, relative pose recovery and linear triangulation.

use alloc::vec::Vec;

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::matching::FundamentalMatrix;
use crate::numerics::{from_homogeneous, skew, smallest_singular_vector, svd3, Mat, Mat3, Rotation, Vec2, Vec3};

/// A 3x4 camera matrix, row-major.
pub type Mat34 = [[f64; 4]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TwoViewError {
    #[error("intrinsics must have finite, positive focal lengths")]
    InvalidIntrinsics,
    #[error("cheirality vote is ambiguous (best {best}, runner-up {second} of {total})")]
    CheiralityAmbiguous { best: usize, second: usize, total: usize },
    #[error("no correspondences given")]
    NoCorrespondences,
    #[error("triangulated point lies at infinity")]
    PointAtInfinity,
    #[error("camera centres coincide")]
    ZeroBaseline,
    #[error("point coincides with a camera centre")]
    CoincidentPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, TwoViewError> {
        let k = Self { fx, fy, cx, cy, skew };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), TwoViewError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.skew]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.fx > 0.0 && self.fy > 0.0 {
            Ok(())
        } else {
            Err(TwoViewError::InvalidIntrinsics)
        }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3([
            [self.fx, self.skew, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])
    }

    /// Pixel to normalized image coordinates (`K^-1 x`).
    pub fn normalize(&self, p: Vec2) -> Vec2 {
        let y = (p.y - self.cy) / self.fy;
        let x = (p.x - self.cx - self.skew * y) / self.fx;
        Vec2::new(x, y)
    }

    /// Normalized image coordinates to pixels.
    pub fn denormalize(&self, q: Vec2) -> Vec2 {
        Vec2::new(
            self.fx * q.x + self.skew * q.y + self.cx,
            self.fy * q.y + self.cy,
        )
    }

    /// Projects a world point; `None` unless it has positive depth.
    pub fn project(&self, pose: &CameraPose, p: Vec3) -> Option<Vec2> {
        let c = pose.transform(p);
        if !(c.z > 0.0) {
            return None;
        }
        Some(self.denormalize(Vec2::new(c.x / c.z, c.y / c.z)))
    }

    /// Projects a camera-frame point and returns `d(pixel)/d(point)`.
    pub fn project_with_jacobian(&self, c: Vec3) -> (Vec2, [[f64; 3]; 2]) {
        let iz = 1.0 / c.z;
        let (x, y) = (c.x * iz, c.y * iz);
        let px = self.denormalize(Vec2::new(x, y));
        let j = [
            [self.fx * iz, self.skew * iz, -(self.fx * x + self.skew * y) * iz],
            [0.0, self.fy * iz, -self.fy * y * iz],
        ];
        (px, j)
    }

    pub fn projection_matrix(&self, pose: &CameraPose) -> Mat34 {
        let rt = pose.matrix34();
        let k = self.matrix();
        let mut out = [[0.0; 4]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|m| k.0[i][m] * rt[m][j]).sum();
            }
        }
        out
    }
}

/// World-to-camera transform: `x_cam = R x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraPose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl CameraPose {
    pub const IDENTITY: CameraPose = CameraPose {
        rotation: Rotation::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn transform(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Depth (camera-frame z) of a world point.
    pub fn depth(&self, p: Vec3) -> f64 {
        self.transform(p).z
    }

    pub fn center(&self) -> Vec3 {
        camera_center(self)
    }

    /// `[R | t]`.
    pub fn matrix34(&self) -> Mat34 {
        let r = self.rotation.matrix();
        let t = self.translation;
        [
            [r.0[0][0], r.0[0][1], r.0[0][2], t.x],
            [r.0[1][0], r.0[1][1], r.0[1][2], t.y],
            [r.0[2][0], r.0[2][1], r.0[2][2], t.z],
        ]
    }
}

/// `C = -R^T t`.
pub fn camera_center(pose: &CameraPose) -> Vec3 {
    -(pose.rotation.transpose() * pose.translation)
}

/// Essential matrix with singular values `(s, s, 0)` and unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Mat3);

impl EssentialMatrix {
    /// Projects an arbitrary 3x3 matrix onto the essential manifold.
    pub fn project(m: &Mat3) -> EssentialMatrix {
        let (u, s, v) = svd3(m);
        let avg = 0.5 * (s[0] + s[1]);
        let e = u * Mat3::diag([avg, avg, 0.0]) * v.transpose();
        let n = e.frobenius_norm();
        EssentialMatrix(e.scale(1.0 / n))
    }

    /// `[t]x R` for a known relative pose.
    pub fn from_pose(rotation: &Rotation, translation: Vec3) -> EssentialMatrix {
        Self::project(&(skew(translation) * *rotation.matrix()))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

/// `E = K^T F K` (both views share `K`), projected onto the essential manifold.
pub fn essential_from_fundamental(f: &FundamentalMatrix, k: &CameraIntrinsics) -> EssentialMatrix {
    let km = k.matrix();
    EssentialMatrix::project(&(km.transpose() * *f.matrix() * km))
}

/// The four `(R, t)` factorizations of `E`; `t` has unit norm.
pub fn decompose_essential(e: &EssentialMatrix) -> [(Rotation, Vec3); 4] {
    let (mut u, _, mut v) = svd3(e.matrix());
    if u.det() < 0.0 {
        u = u.scale(-1.0);
    }
    if v.det() < 0.0 {
        v = v.scale(-1.0);
    }
    let w = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    let ra = Rotation::nearest(&(u * w * v.transpose()));
    let rb = Rotation::nearest(&(u * w.transpose() * v.transpose()));
    let t = u.col(2).normalized();
    [(ra, t), (ra, -t), (rb, t), (rb, -t)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheiralityResult {
    pub pose: CameraPose,
    /// Index of the winning candidate.
    pub candidate: usize,
    /// Points in front of both cameras, per candidate.
    pub scores: [usize; 4],
}

/// Relative margin within which two candidate scores count as tied.
pub const CHEIRALITY_MARGIN: f64 = 0.05;
/// Fraction of correspondences the winning candidate must place in front.
pub const CHEIRALITY_MIN_FRACTION: f64 = 0.5;

/// Picks the candidate that places most correspondences (normalized
/// coordinates) in front of both `[I | 0]` and `[R | t]`.
pub fn select_pose_cheirality(
    candidates: &[(Rotation, Vec3); 4],
    corrs: &[(Vec2, Vec2)],
) -> Result<CheiralityResult, TwoViewError> {
    if corrs.is_empty() {
        return Err(TwoViewError::NoCorrespondences);
    }
    let ml = CameraPose::IDENTITY.matrix34();
    let mut scores = [0usize; 4];
    for (score, (r, t)) in scores.iter_mut().zip(candidates) {
        let pose = CameraPose::new(*r, *t);
        let mr = pose.matrix34();
        if same_center(&ml, &mr) {
            continue;
        }
        *score = corrs
            .iter()
            .filter(|(l, rr)| match triangulate_pair(*l, *rr, &ml, &mr) {
                Ok(p) => p.z > 0.0 && pose.depth(p) > 0.0,
                Err(_) => false,
            })
            .count();
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|a, b| scores[*b].cmp(&scores[*a]).then(a.cmp(b)));
    let (best, second) = (scores[order[0]], scores[order[1]]);
    let total = corrs.len();
    let tied = second as f64 >= (1.0 - CHEIRALITY_MARGIN) * best as f64;
    if tied || (best as f64) < CHEIRALITY_MIN_FRACTION * total as f64 {
        return Err(TwoViewError::CheiralityAmbiguous { best, second, total });
    }
    let (r, t) = candidates[order[0]];
    Ok(CheiralityResult {
        pose: CameraPose::new(r, t),
        candidate: order[0],
        scores,
    })
}

/// Homogeneous camera centre (unit 4-vector) of a 3x4 projection.
fn homogeneous_center(m: &Mat34) -> Vec<f64> {
    let a = Mat::from_rows(m);
    smallest_singular_vector(&a).vector
}

fn same_center(a: &Mat34, b: &Mat34) -> bool {
    let ca = homogeneous_center(a);
    let cb = homogeneous_center(b);
    let d: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let resid: f64 = ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (x - d * y) * (x - d * y))
        .sum::<f64>()
        .sqrt();
    resid < 1e-9
}

/// Appends the three rows of `[p~]x M`, each scaled to unit norm.
fn push_cross_rows(rows: &mut Vec<[f64; 4]>, p: Vec2, m: &Mat34) {
    let ph = [p.x, p.y, 1.0];
    let s = skew(Vec3::new(ph[0], ph[1], ph[2]));
    for i in 0..3 {
        let mut row = [0.0; 4];
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| s.0[i][k] * m[k][j]).sum();
        }
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
            rows.push(row);
        }
    }
}

fn solve_rows(rows: &[[f64; 4]]) -> Result<Vec3, TwoViewError> {
    let nv = smallest_singular_vector(&Mat::from_rows(rows));
    let p = from_homogeneous(&nv.vector).map_err(|_| TwoViewError::PointAtInfinity)?;
    let p = Vec3::new(p[0], p[1], p[2]);
    if !p.is_finite() {
        return Err(TwoViewError::PointAtInfinity);
    }
    Ok(p)
}

/// Linear two-view triangulation from the stacked `[p~]x M` constraints.
pub fn triangulate_dlt(p_l: Vec2, p_r: Vec2, m_l: &Mat34, m_r: &Mat34) -> Result<Vec3, TwoViewError> {
    if same_center(m_l, m_r) {
        return Err(TwoViewError::ZeroBaseline);
    }
    triangulate_pair(p_l, p_r, m_l, m_r)
}

fn triangulate_pair(p_l: Vec2, p_r: Vec2, m_l: &Mat34, m_r: &Mat34) -> Result<Vec3, TwoViewError> {
    let mut rows = Vec::with_capacity(6);
    push_cross_rows(&mut rows, p_l, m_l);
    push_cross_rows(&mut rows, p_r, m_r);
    solve_rows(&rows)
}

/// Linear triangulation from any number of views (at least two).
pub fn triangulate_multiview(obs: &[(Vec2, Mat34)]) -> Result<Vec3, TwoViewError> {
    if obs.len() < 2 {
        return Err(TwoViewError::NoCorrespondences);
    }
    if obs[1..].iter().all(|(_, m)| same_center(&obs[0].1, m)) {
        return Err(TwoViewError::ZeroBaseline);
    }
    let mut rows = Vec::with_capacity(3 * obs.len());
    for (p, m) in obs {
        push_cross_rows(&mut rows, *p, m);
    }
    solve_rows(&rows)
}

/// Angle between the rays `P - C1` and `P - C2`, in radians.
///
/// Evaluated as `atan2(|a x b|, a . b)`, which equals the arccos form but
/// keeps full precision near 0 and pi.
pub fn triangulation_angle(p: Vec3, c1: Vec3, c2: Vec3) -> Result<f64, TwoViewError> {
    let a = p - c1;
    let b = p - c2;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(TwoViewError::CoincidentPoint);
    }
    Ok(a.cross(&b).norm().atan2(a.dot(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    fn pose(w: [f64; 3], t: [f64; 3]) -> CameraPose {
        CameraPose::new(Rotation::exp(Vec3::from_array(w)), Vec3::from_array(t))
    }

    fn scene() -> Vec<Vec3> {
        (0..50)
            .map(|i| {
                let f = i as f64;
                Vec3::new((f * 0.37).sin() * 1.5, (f * 0.71).cos() * 1.2, 5.0 + (f * 0.13).sin())
            })
            .collect()
    }

    fn normalized_obs(pose: &CameraPose, p: Vec3) -> Vec2 {
        let c = pose.transform(p);
        Vec2::new(c.x / c.z, c.y / c.z)
    }

    #[test]
    fn camera_center_examples() {
        assert_eq!(camera_center(&CameraPose::IDENTITY), Vec3::ZERO);
        let c = camera_center(&pose([0.0; 3], [1.0, 2.0, 3.0]));
        assert_eq!(c, Vec3::new(-1.0, -2.0, -3.0));
        // Ry(90deg) maps (1, 0, 0) to (0, 0, -1), which t = (0, 0, 1) cancels.
        let p = pose([0.0, FRAC_PI_2, 0.0], [0.0, 0.0, 1.0]);
        let c = camera_center(&p);
        assert!((c - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        assert!(p.transform(c).norm() < 1e-12);
    }

    #[test]
    fn triangulation_angle_examples() {
        let c1 = Vec3::new(-1.0, 0.0, 0.0);
        let c2 = Vec3::new(1.0, 0.0, 0.0);
        let a = triangulation_angle(Vec3::new(0.0, 0.0, 1.0), c1, c2).unwrap();
        assert!((a - 2.0 * 1f64.atan()).abs() < 1e-12);
        assert_eq!(triangulation_angle(Vec3::new(0.0, 0.0, 1.0), c1, c1).unwrap(), 0.0);
        assert!((triangulation_angle(Vec3::ZERO, c1, c2).unwrap() - PI).abs() < 1e-12);
        assert_eq!(triangulation_angle(c1, c1, c2), Err(TwoViewError::CoincidentPoint));
    }

    #[test]
    fn essential_identity_intrinsics() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let rel = pose([0.1, -0.2, 0.05], [1.0, 0.2, -0.1]);
        let f = FundamentalMatrix::from_matrix(&(skew(rel.translation) * *rel.rotation.matrix()));
        let e = essential_from_fundamental(&f, &k);
        let (_, s, _) = svd3(e.matrix());
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((s[0] - h).abs() < 1e-9 && (s[1] - h).abs() < 1e-9 && s[2].abs() < 1e-9);
        let direct = EssentialMatrix::from_pose(&rel.rotation, rel.translation);
        let d1 = e.matrix().max_abs_diff(direct.matrix());
        let d2 = e.matrix().max_abs_diff(&direct.matrix().scale(-1.0));
        assert!(d1.min(d2) < 1e-9);
    }

    #[test]
    fn pure_translation_decomposition() {
        let e = EssentialMatrix::project(&skew(Vec3::new(0.0, 0.0, 1.0)));
        let cands = decompose_essential(&e);
        let z = Vec3::new(0.0, 0.0, 1.0);
        let has = |t: Vec3| {
            cands
                .iter()
                .any(|(r, u)| r.matrix().max_abs_diff(&Mat3::IDENTITY) < 1e-9 && (*u - t).norm() < 1e-9)
        };
        assert!(has(z) && has(-z));
        for (r, _) in &cands {
            assert!((r.matrix().det() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_recovers_pose() {
        let truth = pose([0.05, 0.3, -0.1], [-2.0, 0.3, 0.4]);
        let e = EssentialMatrix::from_pose(&truth.rotation, truth.translation);
        let unit_t = truth.translation.normalized();
        let cands = decompose_essential(&e);
        let hits = cands
            .iter()
            .filter(|(r, t)| r.matrix().max_abs_diff(truth.rotation.matrix()) < 1e-6 && (*t - unit_t).norm() < 1e-6)
            .count();
        assert_eq!(hits, 1);

        let corrs: Vec<(Vec2, Vec2)> = scene()
            .into_iter()
            .map(|p| (normalized_obs(&CameraPose::IDENTITY, p), normalized_obs(&truth, p)))
            .collect();
        let res = select_pose_cheirality(&cands, &corrs).unwrap();
        assert_eq!(res.scores[res.candidate], 50);
        assert!(res.scores.iter().enumerate().all(|(i, s)| i == res.candidate || *s < 25));
        assert!(res.pose.rotation.matrix().max_abs_diff(truth.rotation.matrix()) < 1e-6);
        assert!((res.pose.translation - unit_t).norm() < 1e-6);

        let ex = skew(res.pose.translation) * *res.pose.rotation.matrix();
        for (l, r) in &corrs {
            let v = r.to_homogeneous().dot(&(ex * l.to_homogeneous()));
            assert!(v.abs() < 1e-6);
        }

        let one = select_pose_cheirality(&cands, &corrs[..1]).unwrap();
        assert_eq!(one.scores[one.candidate], 1);
        assert_eq!(one.candidate, res.candidate);
    }

    #[test]
    fn split_scene_is_ambiguous() {
        let truth = pose([0.0, 0.1, 0.0], [-1.0, 0.0, 0.0]);
        let cands = decompose_essential(&EssentialMatrix::from_pose(&truth.rotation, truth.translation));
        // Half the points in front of both cameras, half behind both: the
        // true pose and its twisted pair each see exactly one half.
        let mut corrs = Vec::new();
        for (i, p) in scene().into_iter().enumerate() {
            let p = if i % 2 == 0 { p } else { -p };
            corrs.push((normalized_obs(&CameraPose::IDENTITY, p), normalized_obs(&truth, p)));
        }
        assert!(matches!(
            select_pose_cheirality(&cands, &corrs),
            Err(TwoViewError::CheiralityAmbiguous { .. })
        ));
    }

    #[test]
    fn triangulation_examples() {
        let k = CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 0.0).unwrap();
        let left = CameraPose::IDENTITY;
        let right = pose([0.0, -0.15, 0.02], [-1.0, 0.05, 0.1]);
        let (ml, mr) = (k.projection_matrix(&left), k.projection_matrix(&right));
        let p = Vec3::new(0.3, -0.2, 4.0);
        let (pl, pr) = (k.project(&left, p).unwrap(), k.project(&right, p).unwrap());
        let est = triangulate_dlt(pl, pr, &ml, &mr).unwrap();
        assert!((est - p).norm() < 1e-9);
        let reproj = k.project(&right, est).unwrap();
        assert!(reproj.dist(&pr) < 1e-9);

        assert_eq!(triangulate_dlt(pl, pl, &ml, &ml), Err(TwoViewError::ZeroBaseline));
        let rotated = k.projection_matrix(&pose([0.0, 0.2, 0.0], [0.0; 3]));
        assert_eq!(triangulate_dlt(pl, pr, &ml, &rotated), Err(TwoViewError::ZeroBaseline));

        // A direction seen by two translated cameras: the rays are parallel.
        let translated = pose([0.0; 3], [-1.0, 0.0, 0.0]);
        let dir = Vec3::new(0.1, 0.05, 1.0);
        let far_l = k.denormalize(Vec2::new(dir.x / dir.z, dir.y / dir.z));
        let r_dir = translated.rotation * dir;
        let far_r = k.denormalize(Vec2::new(r_dir.x / r_dir.z, r_dir.y / r_dir.z));
        assert_eq!(
            triangulate_dlt(far_l, far_r, &ml, &k.projection_matrix(&translated)),
            Err(TwoViewError::PointAtInfinity)
        );
    }

    #[test]
    fn multiview_matches_two_view() {
        let k = CameraIntrinsics::new(500.0, 510.0, 300.0, 200.0, 0.0).unwrap();
        let poses = [
            CameraPose::IDENTITY,
            pose([0.0, -0.1, 0.0], [-0.5, 0.0, 0.0]),
            pose([0.02, -0.2, 0.0], [-1.0, 0.1, 0.05]),
        ];
        let p = Vec3::new(-0.4, 0.3, 6.0);
        let obs: Vec<(Vec2, Mat34)> = poses
            .iter()
            .map(|c| (k.project(c, p).unwrap(), k.projection_matrix(c)))
            .collect();
        assert!((triangulate_multiview(&obs).unwrap() - p).norm() < 1e-9);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, f64::NAN, 0.0, 0.0, 0.0).is_err());
        let k = CameraIntrinsics::new(700.0, 650.0, 310.0, 250.0, 2.0).unwrap();
        let p = Vec2::new(123.0, 456.0);
        assert!(k.denormalize(k.normalize(p)).dist(&p) < 1e-12);
    }
}
