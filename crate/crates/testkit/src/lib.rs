//! Independent test oracles for sfmkit.
//!
//! Everything here is written against nalgebra and `rand` and returns plain
//! arrays, so tests can compare the toolkit against code that shares nothing
//! with it.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, UnitSphere};

pub type Arr3 = [f64; 3];
pub type Mat3x3 = [[f64; 3]; 3];

fn to_arr(m: &Matrix3<f64>) -> Mat3x3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

fn v3(a: &Arr3) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// World-to-camera rotation for a camera at `center` looking at `target`,
/// with image y pointing along `down` as far as possible.
pub fn look_at(center: Arr3, target: Arr3, down: Arr3) -> Mat3x3 {
    let z = (v3(&target) - v3(&center)).normalize();
    let d = v3(&down);
    let y = (d - z * z.dot(&d)).normalize();
    let x = y.cross(&z);
    to_arr(&Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]))
}

#[derive(Debug, Clone)]
pub struct Camera {
    /// World-to-camera rotation.
    pub rotation: Mat3x3,
    /// World-to-camera translation, `x_cam = R x + t`.
    pub translation: Arr3,
    pub center: Arr3,
}

impl Camera {
    pub fn from_center(rotation: Mat3x3, center: Arr3) -> Self {
        let r = Matrix3::from_row_slice(&rotation.concat());
        let t = -(r * v3(&center));
        Self {
            rotation,
            translation: [t.x, t.y, t.z],
            center,
        }
    }

    /// Pinhole projection with `k = [fx, fy, cx, cy]`; `None` behind the camera.
    pub fn project(&self, k: &[f64; 4], p: &Arr3) -> Option<[f64; 2]> {
        let r = Matrix3::from_row_slice(&self.rotation.concat());
        let c = r * v3(p) + v3(&self.translation);
        (c.z > 1e-9).then(|| [k[0] * c.x / c.z + k[2], k[1] * c.y / c.z + k[3]])
    }
}

/// Cameras on a horizontal circle around a cloud of points.
#[derive(Debug, Clone)]
pub struct RingScene {
    /// `[fx, fy, cx, cy]`.
    pub k: [f64; 4],
    pub width: usize,
    pub height: usize,
    pub cameras: Vec<Camera>,
    pub points: Vec<Arr3>,
    /// Unit-norm random descriptor per point.
    pub descriptors: Vec<[f32; 128]>,
    /// Per camera: `(point index, pixel)` for every point inside the frame.
    pub observations: Vec<Vec<(usize, [f64; 2])>>,
}

/// `n_cams` cameras evenly spaced on a circle of radius 3 in the `xz` plane,
/// all looking at the origin, and `n_points` points uniform in the unit ball.
/// Intrinsics are `(800, 800, 320, 240)` on a 640x480 frame.
pub fn ring_scene(n_cams: usize, n_points: usize, seed: u64) -> RingScene {
    ring_scene_with(n_cams, n_points, 3.0, 1.0, seed)
}

pub fn ring_scene_with(n_cams: usize, n_points: usize, radius: f64, ball: f64, seed: u64) -> RingScene {
    let mut rng = StdRng::seed_from_u64(seed);
    let k = [800.0, 800.0, 320.0, 240.0];
    let (width, height) = (640, 480);
    let cameras: Vec<Camera> = (0..n_cams)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n_cams as f64;
            let c = [radius * a.cos(), 0.0, radius * a.sin()];
            Camera::from_center(look_at(c, [0.0; 3], [0.0, -1.0, 0.0]), c)
        })
        .collect();
    let points: Vec<Arr3> = (0..n_points)
        .map(|_| {
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let r = ball * rng.random::<f64>().cbrt();
            [dir[0] * r, dir[1] * r, dir[2] * r]
        })
        .collect();
    let descriptors = (0..n_points).map(|_| random_descriptor(&mut rng)).collect();
    let observations = cameras
        .iter()
        .map(|cam| {
            points
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let px = cam.project(&k, p)?;
                    let inside = px[0] >= 0.0 && px[0] < width as f64 && px[1] >= 0.0 && px[1] < height as f64;
                    inside.then_some((i, px))
                })
                .collect()
        })
        .collect();
    RingScene {
        k,
        width,
        height,
        cameras,
        points,
        descriptors,
        observations,
    }
}

/// Non-negative random vector of unit norm, as SIFT descriptors are.
pub fn random_descriptor<R: Rng>(rng: &mut R) -> [f32; 128] {
    let mut d = [0f32; 128];
    for v in d.iter_mut() {
        *v = rng.random::<f32>();
    }
    let n = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    d.iter_mut().for_each(|v| *v /= n);
    d
}

/// Adds isotropic Gaussian pixel noise to every observation.
pub fn perturb_observations(scene: &mut RingScene, sigma: f64, seed: u64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    for cam in scene.observations.iter_mut() {
        for (_, px) in cam.iter_mut() {
            px[0] += n.sample(&mut rng);
            px[1] += n.sample(&mut rng);
        }
    }
}

/// `dst ~ s R src + t`.
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3x3,
    pub translation: Arr3,
}

impl Similarity {
    pub fn apply(&self, p: &Arr3) -> Arr3 {
        let r = Matrix3::from_row_slice(&self.rotation.concat());
        let q = r * v3(p) * self.scale + v3(&self.translation);
        [q.x, q.y, q.z]
    }
}

/// Least-squares similarity (Umeyama) mapping `src` onto `dst`.
pub fn umeyama(src: &[Arr3], dst: &[Arr3]) -> Similarity {
    assert_eq!(src.len(), dst.len());
    assert!(src.len() >= 3);
    let n = src.len() as f64;
    let ms = src.iter().map(v3).sum::<Vector3<f64>>() / n;
    let md = dst.iter().map(v3).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (v3(s) - ms, v3(d) - md);
        cov += b * a.transpose();
        var += a.norm_squared();
    }
    cov /= n;
    var /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * vt;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * sign[(i, i)]).sum();
    let scale = trace / var;
    let t = md - r * ms * scale;
    Similarity {
        scale,
        rotation: to_arr(&r),
        translation: [t.x, t.y, t.z],
    }
}

/// RMSE between `dst` and `src` after the best similarity alignment.
pub fn aligned_rmse(src: &[Arr3], dst: &[Arr3]) -> f64 {
    let sim = umeyama(src, dst);
    let sse: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (v3(&sim.apply(s)) - v3(d)).norm_squared())
        .sum();
    (sse / src.len() as f64).sqrt()
}

/// Best-fit plane then algebraic circle fit in that plane. Returns
/// `(radius, rms radial residual)`.
pub fn circle_fit(points: &[Arr3]) -> (f64, f64) {
    assert!(points.len() >= 3);
    let n = points.len() as f64;
    let mean = points.iter().map(v3).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = v3(p) - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let e1 = eig.eigenvectors.column(idx[0]).into_owned();
    let e2 = eig.eigenvectors.column(idx[1]).into_owned();
    let uv: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = v3(p) - mean;
            (d.dot(&e1), d.dot(&e2))
        })
        .collect();
    // x^2 + y^2 + D x + E y + F = 0 in least squares.
    let mut a = nalgebra::DMatrix::zeros(uv.len(), 3);
    let mut b = nalgebra::DVector::zeros(uv.len());
    for (i, (x, y)) in uv.iter().enumerate() {
        a[(i, 0)] = *x;
        a[(i, 1)] = *y;
        a[(i, 2)] = 1.0;
        b[i] = -(x * x + y * y);
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).expect("circle fit solve");
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let radius = (cx * cx + cy * cy - sol[2]).max(0.0).sqrt();
    let resid = uv
        .iter()
        .map(|(x, y)| {
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            (r - radius).powi(2)
        })
        .sum::<f64>()
        / n;
    (radius, resid.sqrt())
}

/// Angle in radians between two rotation matrices.
pub fn rotation_angle_between(a: &Mat3x3, b: &Mat3x3) -> f64 {
    let ra = Rotation3::from_matrix_unchecked(Matrix3::from_row_slice(&a.concat()));
    let rb = Rotation3::from_matrix_unchecked(Matrix3::from_row_slice(&b.concat()));
    ra.rotation_to(&rb).angle()
}

/// Axis-angle vector to rotation matrix (nalgebra).
pub fn rotation_from_axis_angle(w: Arr3) -> Mat3x3 {
    to_arr(Rotation3::new(v3(&w)).matrix())
}

/// Value-noise texture in `[0, 1]`: a sum of random Gaussian blobs.
pub struct BlobTexture {
    blobs: Vec<(f64, f64, f64, f64)>,
}

impl BlobTexture {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let blobs = (0..n)
            .map(|_| {
                (
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    0.015 + 0.05 * rng.random::<f64>(),
                    if rng.random::<bool>() { 1.0 } else { -1.0 },
                )
            })
            .collect();
        Self { blobs }
    }

    /// Sample at `(u, v)` in the unit square.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let mut s = 0.0;
        for &(bx, by, r, a) in &self.blobs {
            let d2 = (u - bx).powi(2) + (v - by).powi(2);
            if d2 < 16.0 * r * r {
                s += a * (-d2 / (2.0 * r * r)).exp();
            }
        }
        (0.5 + 0.35 * s.tanh()).clamp(0.0, 1.0)
    }
}

/// Grayscale renders of a textured cube `[-1, 1]^3` seen from cameras on an
/// arc of radius `radius` slightly above the cube.
#[derive(Debug, Clone)]
pub struct RenderedSet {
    pub width: usize,
    pub height: usize,
    /// `[fx, fy, cx, cy]`.
    pub k: [f64; 4],
    pub cameras: Vec<Camera>,
    /// Row-major 8-bit gray images.
    pub images: Vec<Vec<u8>>,
}

pub fn render_textured_cube(n_views: usize, width: usize, height: usize, arc_deg: f64, seed: u64) -> RenderedSet {
    let textures: Vec<BlobTexture> = (0..6).map(|f| BlobTexture::new(220, seed * 31 + f)).collect();
    let f = 0.9 * width as f64;
    let k = [f, f, width as f64 / 2.0, height as f64 / 2.0];
    let radius = 5.0;
    let cameras: Vec<Camera> = (0..n_views)
        .map(|i| {
            let t = if n_views > 1 { i as f64 / (n_views - 1) as f64 } else { 0.0 };
            let a = (30.0 + arc_deg * t).to_radians();
            let c = [radius * a.cos(), -1.8, radius * a.sin()];
            Camera::from_center(look_at(c, [0.0; 3], [0.0, 1.0, 0.0]), c)
        })
        .collect();
    let images = cameras
        .iter()
        .map(|cam| render_view(cam, &k, width, height, &textures))
        .collect();
    RenderedSet {
        width,
        height,
        k,
        cameras,
        images,
    }
}

fn render_view(cam: &Camera, k: &[f64; 4], w: usize, h: usize, tex: &[BlobTexture]) -> Vec<u8> {
    let r = Matrix3::from_row_slice(&cam.rotation.concat());
    let rt = r.transpose();
    let origin = v3(&cam.center);
    let mut out = vec![0u8; w * h];
    // 2x2 supersampling keeps edges from aliasing into spurious features.
    let offs = [0.25, 0.75];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for oy in offs {
                for ox in offs {
                    let px = x as f64 + ox - 0.5;
                    let py = y as f64 + oy - 0.5;
                    let d_cam = Vector3::new((px - k[2]) / k[0], (py - k[3]) / k[1], 1.0);
                    let d = rt * d_cam;
                    acc += shade(&origin, &d, tex);
                }
            }
            out[y * w + x] = (acc / 4.0 * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Slab intersection with the cube; background is a flat 0.3.
fn shade(o: &Vector3<f64>, d: &Vector3<f64>, tex: &[BlobTexture]) -> f64 {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    let mut axis = 0;
    for i in 0..3 {
        if d[i].abs() < 1e-12 {
            if o[i].abs() > 1.0 {
                return 0.3;
            }
            continue;
        }
        let t1 = (-1.0 - o[i]) / d[i];
        let t2 = (1.0 - o[i]) / d[i];
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if lo > tmin {
            tmin = lo;
            axis = i;
        }
        tmax = tmax.min(hi);
    }
    if tmin > tmax || tmin <= 0.0 {
        return 0.3;
    }
    let p = o + d * tmin;
    let face = 2 * axis + usize::from(p[axis] > 0.0);
    let (a, b) = match axis {
        0 => (p.y, p.z),
        1 => (p.x, p.z),
        _ => (p.x, p.y),
    };
    let shade = [0.85, 1.0, 0.7][axis];
    tex[face].sample((a + 1.0) / 2.0, (b + 1.0) / 2.0) * shade
}

/// Writes an 8-bit binary PGM (P5).
pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> std::io::Result<()> {
    assert_eq!(data.len(), width * height);
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn umeyama_recovers_similarity() {
        let src: Vec<Arr3> = (0..20).map(|i| [i as f64, (i * i) as f64 * 0.1, (i as f64).sin()]).collect();
        let r = rotation_from_axis_angle([0.2, -0.5, 0.1]);
        let sim = Similarity {
            scale: 2.5,
            rotation: r,
            translation: [1.0, -2.0, 3.0],
        };
        let dst: Vec<Arr3> = src.iter().map(|p| sim.apply(p)).collect();
        let est = umeyama(&src, &dst);
        assert!((est.scale - 2.5).abs() < 1e-9);
        assert!(aligned_rmse(&src, &dst) < 1e-9);
    }

    #[test]
    fn circle_fit_on_circle() {
        let pts: Vec<Arr3> = (0..30)
            .map(|i| {
                let a = i as f64 * 0.2;
                [2.0 * a.cos() + 1.0, 0.5, 2.0 * a.sin()]
            })
            .collect();
        let (r, res) = circle_fit(&pts);
        assert!((r - 2.0).abs() < 1e-9 && res < 1e-9);
    }

    #[test]
    fn ring_cameras_face_origin() {
        let s = ring_scene(10, 50, 1);
        for cam in &s.cameras {
            let px = cam.project(&s.k, &[0.0; 3]).unwrap();
            assert!((px[0] - 320.0).abs() < 1e-9 && (px[1] - 240.0).abs() < 1e-9);
        }
    }
}
