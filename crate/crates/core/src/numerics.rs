//! Small dense linear algebra and rotation kernels.
//!
//! Everything here works on `f64`. Fixed-size 3-vectors and 3x3 matrices get
//! their own types; larger systems (DLT, 8-point, triangulation) go through the
//! row-major [`Mat`] and the one-sided Jacobi [`svd`].

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

// Float supplies libm-backed math when std is not linked.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

/// Relative tolerance used for singularity and nullspace ambiguity tests.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Maximum number of Jacobi sweeps before the SVD gives up refining.
const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("matrix has a negative determinant")]
    NegativeDeterminant,
    #[error("homogeneous point lies at infinity")]
    AtInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn dist(&self, other: &Vec2) -> f64 {
        (*self - *other).norm()
    }

    /// Homogeneous lift `(x, y, 1)`.
    pub fn to_homogeneous(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, o: &Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            *self * (1.0 / n)
        } else {
            *self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3([r0.to_array(), r1.to_array(), r2.to_array()])
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3::from_rows(c0, c1, c2).transpose()
    }

    pub fn diag(d: [f64; 3]) -> Mat3 {
        Mat3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    /// Builds from a row-major slice of 9 values.
    pub fn from_slice(s: &[f64]) -> Mat3 {
        assert_eq!(s.len(), 9, "Mat3::from_slice needs 9 values");
        Mat3([[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.0[i])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// Inverse via the adjugate; `None` when `|det| <= SINGULAR_TOL * ||M||_F^3`.
    pub fn inverse(&self) -> Option<Mat3> {
        let det = self.det();
        let scale = self.frobenius_norm();
        if !(det.abs() > SINGULAR_TOL * scale * scale * scale) {
            return None;
        }
        let m = &self.0;
        let inv_det = 1.0 / det;
        let mut out = [[0.0; 3]; 3];
        out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
        out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
        out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
        out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
        out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
        out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
        out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
        out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
        out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
        Some(Mat3(out))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs_diff(&self, o: &Mat3) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(o.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_slice(3, 3, &self.to_row_major())
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(&v), self.row(1).dot(&v), self.row(2).dot(&v))
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += o.0[i][j];
            }
        }
        out
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        self + o.scale(-1.0)
    }
}

/// Skew-symmetric cross-product matrix `[v]x`, so that `skew(a) * b = a x b`.
pub fn skew(v: Vec3) -> Mat3 {
    Mat3([[0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0]])
}

/// Dense row-major matrix used for the stacked linear systems.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        assert!(rows >= 1 && cols >= 1, "Mat dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Mat {
        assert!(rows >= 1 && cols >= 1, "Mat dimensions must be positive");
        assert_eq!(data.len(), rows * cols, "entry count must equal rows * cols");
        Mat {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    /// Builds a matrix by stacking equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Mat {
        assert!(!rows.is_empty(), "need at least one row");
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Mat::from_row_slice(rows.len(), cols, &data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows, "dimension mismatch in matmul");
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..o.cols {
                    out[(i, j)] += a * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in mul_vec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Singular values (descending) and right singular vectors of a matrix.
#[derive(Debug, Clone)]
pub struct Svd {
    pub singular_values: Vec<f64>,
    /// `cols x cols`; column `k` pairs with `singular_values[k]`.
    pub v: Mat,
    /// Columns `A v_k` before normalization (`rows' x cols`, where `rows'`
    /// is `min(rows, cols)` after QR preprocessing, or `rows` otherwise).
    work: Mat,
    qr_applied: bool,
}

impl Svd {
    pub fn smallest(&self) -> f64 {
        *self.singular_values.last().unwrap()
    }

    pub fn largest(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn v_col(&self, k: usize) -> Vec<f64> {
        self.v.col(k)
    }
}

/// Householder QR returning only the `n x n` upper-triangular factor.
fn householder_r(a: &Mat) -> Mat {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.clone();
    for k in 0..n.min(m) {
        let norm: f64 = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i - k];
            }
        }
    }
    let mut out = Mat::zeros(n, n);
    for i in 0..n.min(m) {
        for j in i..n {
            out[(i, j)] = r[(i, j)];
        }
    }
    out
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Tall matrices are first reduced to their `n x n` triangular QR factor,
/// which shares singular values and right singular vectors with `A`.
pub fn svd(a: &Mat) -> Svd {
    let n = a.cols();
    let qr_applied = a.rows() > n;
    let mut w = if qr_applied { householder_r(a) } else { a.clone() };
    let m = w.rows();
    let mut v = Mat::identity(n);

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ties in column order, which keeps results deterministic.
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(core::cmp::Ordering::Equal));

    let mut v_sorted = Mat::zeros(n, n);
    let mut w_sorted = Mat::zeros(m, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            v_sorted[(i, dst)] = v[(i, src)];
        }
        for i in 0..m {
            w_sorted[(i, dst)] = w[(i, src)];
        }
    }
    Svd {
        singular_values: order.iter().map(|&k| norms[k]).collect(),
        v: v_sorted,
        work: w_sorted,
        qr_applied,
    }
}

/// Full SVD of a 3x3 matrix, `M = U diag(s) V^T`, with `s` descending.
///
/// Left vectors for vanishing singular values are completed to an orthonormal
/// basis, so `U` and `V` are always orthogonal (their determinants may be -1).
pub fn svd3(m: &Mat3) -> (Mat3, [f64; 3], Mat3) {
    let dec = svd(&m.to_mat());
    debug_assert!(!dec.qr_applied);
    let s = [
        dec.singular_values[0],
        dec.singular_values[1],
        dec.singular_values[2],
    ];
    let v = Mat3::from_slice(dec.v.data());
    let tiny = s[0] * 1e-14;
    let col = |k: usize| Vec3::new(dec.work[(0, k)], dec.work[(1, k)], dec.work[(2, k)]);

    let u0 = if s[0] > 0.0 {
        col(0) * (1.0 / s[0])
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    let u1 = if s[1] > tiny {
        col(1) * (1.0 / s[1])
    } else {
        any_orthogonal(&u0)
    };
    let u2 = if s[2] > tiny {
        col(2) * (1.0 / s[2])
    } else {
        u0.cross(&u1).normalized()
    };
    (Mat3::from_cols(u0, u1, u2), s, v)
}

fn any_orthogonal(u: &Vec3) -> Vec3 {
    let a = if u.x.abs() <= u.y.abs() && u.x.abs() <= u.z.abs() {
        Vec3::new(1.0, 0.0, 0.0)
    } else if u.y.abs() <= u.z.abs() {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    u.cross(&a).normalized()
}

/// Right singular vector belonging to the smallest singular value.
#[derive(Debug, Clone)]
pub struct NullVector {
    /// Unit-norm vector of length `cols(A)`.
    pub vector: Vec<f64>,
    pub sigma_min: f64,
    /// Second-smallest singular value (equal to `sigma_min` for one column).
    pub sigma_next: f64,
    pub sigma_max: f64,
    /// Set when the two smallest singular values coincide within
    /// `SINGULAR_TOL` relative to the largest one.
    pub ambiguous: bool,
}

impl NullVector {
    /// `sigma_next / sigma_max`; near zero means the nullspace is at least 2-D.
    pub fn conditioning(&self) -> f64 {
        if self.sigma_max > 0.0 {
            self.sigma_next / self.sigma_max
        } else {
            0.0
        }
    }
}

/// Solves `A x = 0` in the least-squares sense, `||x|| = 1`.
pub fn smallest_singular_vector(a: &Mat) -> NullVector {
    let dec = svd(a);
    let n = a.cols();
    let sigma_min = dec.singular_values[n - 1];
    let sigma_next = if n >= 2 {
        dec.singular_values[n - 2]
    } else {
        sigma_min
    };
    let sigma_max = dec.singular_values[0];
    let ambiguous = n >= 2 && (sigma_next - sigma_min) <= SINGULAR_TOL * sigma_max.max(f64::MIN_POSITIVE);
    let mut vector = dec.v_col(n - 1);
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    vector.iter_mut().for_each(|x| *x /= norm);
    NullVector {
        vector,
        sigma_min,
        sigma_next,
        sigma_max,
        ambiguous,
    }
}

/// A proper rotation matrix (`R^T R = I`, `det R = +1`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rotation(Mat3);

impl Rotation {
    pub const IDENTITY: Rotation = Rotation(Mat3::IDENTITY);

    /// Accepts `m` if it is orthonormal with positive determinant within `tol`.
    pub fn from_matrix(m: Mat3, tol: f64) -> Option<Rotation> {
        let err = (m.transpose() * m).max_abs_diff(&Mat3::IDENTITY);
        (err <= tol && (m.det() - 1.0).abs() <= tol).then_some(Rotation(m))
    }

    /// Closest rotation in the Frobenius sense (polar factor, det fixed to +1).
    pub fn nearest(m: &Mat3) -> Rotation {
        let (u, _, v) = svd3(m);
        let mut r = u * v.transpose();
        if r.det() < 0.0 {
            let u_fixed = u * Mat3::diag([1.0, 1.0, -1.0]);
            r = u_fixed * v.transpose();
        }
        Rotation(r)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Rodrigues' formula.
    pub fn exp(w: Vec3) -> Rotation {
        let theta2 = w.norm_squared();
        let k = skew(w);
        let k2 = k * k;
        let (a, b) = if theta2 < 1e-12 {
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
        } else {
            let theta = theta2.sqrt();
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        Rotation(Mat3::IDENTITY + k.scale(a) + k2.scale(b))
    }

    /// Axis-angle vector with norm in `[0, pi]`.
    pub fn log(&self) -> Vec3 {
        let r = &self.0 .0;
        let vee = Vec3::new(r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]);
        let sin2 = vee.norm(); // 2 sin(theta)
        let cos2 = self.0.trace() - 1.0; // 2 cos(theta)
        let theta = sin2.atan2(cos2);
        if theta < 1e-6 {
            // R - R^T = 2 sin(theta) [axis]x, first order in theta.
            return vee * (0.5 + theta * theta / 12.0);
        }
        if theta < core::f64::consts::PI - 1e-3 {
            return vee * (theta / sin2);
        }
        // Near pi the antisymmetric part vanishes; recover the axis from the
        // symmetric part (R + I) / 2 ~ a a^T using its dominant diagonal entry.
        let b = [
            [(r[0][0] + 1.0) * 0.5, (r[0][1] + r[1][0]) * 0.25, (r[0][2] + r[2][0]) * 0.25],
            [(r[1][0] + r[0][1]) * 0.25, (r[1][1] + 1.0) * 0.5, (r[1][2] + r[2][1]) * 0.25],
            [(r[2][0] + r[0][2]) * 0.25, (r[2][1] + r[1][2]) * 0.25, (r[2][2] + 1.0) * 0.5],
        ];
        let k = (0..3)
            .max_by(|&i, &j| b[i][i].partial_cmp(&b[j][j]).unwrap())
            .unwrap();
        let mut axis = Vec3::from_array(b[k]).normalized();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        axis * theta
    }

    /// Re-projects onto SO(3); used after accumulating floating point drift.
    pub fn renormalized(&self) -> Rotation {
        Rotation::nearest(&self.0)
    }

    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).log().norm()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, o: Rotation) -> Rotation {
        Rotation(self.0 * o.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.0 * v
    }
}

/// RQ factorization `H = K R` with `K` upper triangular (positive diagonal)
/// and `R` a proper rotation. Requires `det(H) > 0`.
pub fn rq_decompose(h: &Mat3) -> Result<(Mat3, Rotation), NumericsError> {
    let det = h.det();
    let scale = h.frobenius_norm();
    if !(det.abs() > SINGULAR_TOL * scale * scale * scale) {
        return Err(NumericsError::Singular(det));
    }
    if det < 0.0 {
        return Err(NumericsError::NegativeDeterminant);
    }
    // Row i of H is sum_{j >= i} K_ij r_j: Gram-Schmidt from the last row up.
    let h2 = h.row(2);
    let h1 = h.row(1);
    let h0 = h.row(0);
    let k22 = h2.norm();
    let r2 = h2 * (1.0 / k22);
    let k12 = h1.dot(&r2);
    let mut q1 = h1 - r2 * k12;
    // Second pass of Gram-Schmidt restores orthogonality lost to cancellation.
    let c = q1.dot(&r2);
    q1 = q1 - r2 * c;
    let k12 = k12 + c;
    let k11 = q1.norm();
    let r1 = q1 * (1.0 / k11);
    let k02 = h0.dot(&r2);
    let k01 = h0.dot(&r1);
    let mut q0 = h0 - r2 * k02 - r1 * k01;
    let c2 = q0.dot(&r2);
    let c1 = q0.dot(&r1);
    q0 = q0 - r2 * c2 - r1 * c1;
    let (k02, k01) = (k02 + c2, k01 + c1);
    let k00 = q0.norm();
    let r0 = q0 * (1.0 / k00);

    let k = Mat3([[k00, k01, k02], [0.0, k11, k12], [0.0, 0.0, k22]]);
    let r = Mat3::from_rows(r0, r1, r2);
    Ok((k, Rotation(r)))
}

/// Divides by the last component: `(x_1..x_n, w) -> (x_1/w .. x_n/w)`.
pub fn from_homogeneous(p: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let (w, rest) = p.split_last().expect("homogeneous vector must be non-empty");
    if !(w.abs() > SINGULAR_TOL) {
        return Err(NumericsError::AtInfinity);
    }
    Ok(rest.iter().map(|x| x / w).collect())
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n x n`)
/// with a Cholesky factorization. `None` if `A` is not positive definite.
pub fn solve_spd(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn skew_examples() {
        assert_eq!(
            skew(Vec3::new(0.0, 0.0, 1.0)),
            Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        );
        assert_eq!(
            skew(Vec3::new(1.0, 2.0, 3.0)),
            Mat3([[0.0, -3.0, 2.0], [3.0, 0.0, -1.0], [-2.0, 1.0, 0.0]])
        );
        let v = Vec3::new(0.3, -1.1, 2.5);
        assert_eq!(skew(v) * v, Vec3::ZERO);
    }

    #[test]
    fn nullspace_of_padded_diagonal() {
        let a = Mat::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let nv = smallest_singular_vector(&a);
        assert!(close(nv.vector[2].abs(), 1.0, 1e-15));
        assert!(close(nv.vector[0], 0.0, 1e-15) && close(nv.vector[1], 0.0, 1e-15));
        assert!(!nv.ambiguous);
    }

    #[test]
    fn nullspace_of_rank_one_outer_product() {
        let u = [0.3, -1.2, 0.7];
        let w = [1.5, 0.4, -0.9];
        let rows: Vec<[f64; 3]> = u.iter().map(|ui| [ui * w[0], ui * w[1], ui * w[2]]).collect();
        let a = Mat::from_rows(&rows);
        let nv = smallest_singular_vector(&a);
        let av = a.mul_vec(&nv.vector);
        assert!(av.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-12);
        let dot: f64 = nv.vector.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
        // Rank one in 3-D leaves a 2-D nullspace.
        assert!(nv.ambiguous);
    }

    #[test]
    fn identity_is_ambiguous() {
        let nv = smallest_singular_vector(&Mat::identity(3));
        let av = Mat::identity(3).mul_vec(&nv.vector);
        assert!(close(av.iter().map(|x| x * x).sum::<f64>().sqrt(), 1.0, 1e-15));
        assert!(nv.ambiguous);
    }

    #[test]
    fn wide_matrix_gets_full_right_basis() {
        // 2 x 4: nullspace is 2-D, V must still be a full orthonormal basis.
        let a = Mat::from_rows(&[[1.0, 2.0, 0.0, -1.0], [0.5, 0.0, 3.0, 1.0]]);
        let dec = svd(&a);
        let vtv = dec.v.transpose().matmul(&dec.v);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!(close(vtv[(i, j)], e, 1e-14));
            }
        }
        assert!(dec.singular_values[2] < 1e-14 && dec.singular_values[3] < 1e-14);
    }

    #[test]
    fn tall_matrix_singular_values_match_gram_eigenvalues() {
        let a = Mat::from_rows(&[[2.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let dec = svd(&a);
        assert!(close(dec.singular_values[0], 2.0, 1e-15));
        assert!(close(dec.singular_values[1], 1.0, 1e-15));
    }

    #[test]
    fn svd3_reconstructs() {
        let m = Mat3([[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0], [0.3, 0.1, -1.0]]);
        let (u, s, v) = svd3(&m);
        let back = u * Mat3::diag(s) * v.transpose();
        assert!(back.max_abs_diff(&m) < 1e-13);
        assert!((u.transpose() * u).max_abs_diff(&Mat3::IDENTITY) < 1e-13);
        // Rank-deficient input still yields an orthogonal U.
        let r1 = Mat3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 0.0]]);
        let (u, s, v) = svd3(&r1);
        assert!((u.transpose() * u).max_abs_diff(&Mat3::IDENTITY) < 1e-13);
        assert!((u * Mat3::diag(s) * v.transpose()).max_abs_diff(&r1) < 1e-13);
    }

    #[test]
    fn rq_identity() {
        let (k, r) = rq_decompose(&Mat3::IDENTITY).unwrap();
        assert!(k.max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        assert!(r.matrix().max_abs_diff(&Mat3::IDENTITY) < 1e-15);
    }

    #[test]
    fn rq_round_trip() {
        let k0 = Mat3([[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]]);
        let r0 = Rotation::exp(Vec3::new(0.1, 0.2, 0.3));
        let h = k0 * *r0.matrix();
        let (k, r) = rq_decompose(&h).unwrap();
        assert!(k.max_abs_diff(&k0) < 1e-8, "{k:?}");
        assert!(r.matrix().max_abs_diff(r0.matrix()) < 1e-8);
    }

    #[test]
    fn rq_singular() {
        let h = Mat3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]);
        assert!(matches!(rq_decompose(&h), Err(NumericsError::Singular(_))));
    }

    #[test]
    fn rotation_exp_examples() {
        assert_eq!(Rotation::exp(Vec3::ZERO).matrix(), &Mat3::IDENTITY);
        let rz = Rotation::exp(Vec3::new(0.0, 0.0, FRAC_PI_2));
        let expect = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(rz.matrix().max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn rotation_log_near_pi() {
        for &angle in &[PI, PI - 1e-9, PI - 1e-5, PI - 2e-3] {
            let w = Vec3::new(0.48, -0.6, 0.64).normalized() * angle;
            let back = Rotation::exp(Rotation::exp(w).log());
            assert!(back.matrix().max_abs_diff(Rotation::exp(w).matrix()) < 1e-9);
        }
        let w = Vec3::new(0.0, 0.0, PI);
        assert!(close(Rotation::exp(w).log().norm(), PI, 1e-12));
    }

    #[test]
    fn from_homogeneous_examples() {
        assert_eq!(from_homogeneous(&[2.0, 4.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(from_homogeneous(&[3.0, 6.0, 9.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(from_homogeneous(&[1.0, 1.0, 0.0]), Err(NumericsError::AtInfinity));
    }

    #[test]
    fn spd_solve() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0];
        let x = solve_spd(&a, 3, &[1.0, 2.0, 3.0]).unwrap();
        let ax = Mat::from_row_slice(3, 3, &a).mul_vec(&x);
        assert!(ax.iter().zip([1.0, 2.0, 3.0]).all(|(p, q)| close(*p, q, 1e-14)));
        assert!(solve_spd(&[1.0, 2.0, 2.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }
}
