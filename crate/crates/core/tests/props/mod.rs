//! Randomized invariants for every module, written against proptest's
//! runner API so the same suite backs both the per-crate tests and the
//! workspace acceptance run with an explicit case count.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use sfmkit_core::bundle::{optimize, residuals_and_jacobian, BAOptions, BAProblem, Observation};
use sfmkit_core::image::{gaussian_blur, gaussian_kernel, GrayImage};
use sfmkit_core::matching::{
    estimate_fundamental_8pt, match_descriptors, normalization_transform, sample_indices, FundamentalMatrix,
    RansacConfig,
};
use sfmkit_core::numerics::{rq_decompose, svd, svd3, Mat};
use sfmkit_core::pipeline::{build_tracks, PairGeometry, TrackStatus};
use sfmkit_core::resection::{decompose_projection, dlt_projection_matrix, Correspondence2D3D};
use sfmkit_core::sift::{detect_features, Descriptor, SiftParams, DESCRIPTOR_LEN};
use sfmkit_core::two_view::{
    decompose_essential, select_pose_cheirality, triangulate_dlt, CameraIntrinsics, CameraPose, EssentialMatrix,
};
use sfmkit_core::{Mat3, Rotation, Vec2, Vec3};

pub type Property = fn(u32) -> Result<(), String>;

/// Every property with its name, in module order.
pub const ALL: &[(&str, Property)] = &[
    ("svd_factors_are_consistent", svd_factors_are_consistent),
    ("rotation_exp_is_orthonormal_and_log_inverts", rotation_exp_is_orthonormal_and_log_inverts),
    ("rq_recovers_triangular_times_rotation", rq_recovers_triangular_times_rotation),
    ("gaussian_blur_is_a_convex_combination", gaussian_blur_is_a_convex_combination),
    ("sift_descriptors_are_unit_norm", sift_descriptors_are_unit_norm),
    ("mutual_matches_are_one_to_one", mutual_matches_are_one_to_one),
    ("normalization_centres_and_scales", normalization_centres_and_scales),
    ("fundamental_is_rank_two_and_exact", fundamental_is_rank_two_and_exact),
    ("ransac_samples_are_distinct", ransac_samples_are_distinct),
    ("essential_decomposition_contains_truth", essential_decomposition_contains_truth),
    ("triangulation_is_exact", triangulation_is_exact),
    ("resection_round_trips", resection_round_trips),
    ("ba_cost_is_monotone", ba_cost_is_monotone),
    ("tracks_are_valid", tracks_are_valid),
];

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        max_global_rejects: cases * 4,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Fails a property whose cases mostly skipped the interesting path.
fn require_coverage(name: &str, hits: usize, cases: u32, min_fraction: f64) -> Result<(), String> {
    if (hits as f64) < min_fraction * cases as f64 {
        return Err(format!("{name}: only {hits} of {cases} cases exercised the property"));
    }
    Ok(())
}

fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
    (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn k0() -> CameraIntrinsics {
    CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 0.0).unwrap()
}

fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * *r).max_abs_diff(&Mat3::IDENTITY)
}

/// A second camera with a moderate rotation and a non-trivial baseline.
fn second_pose() -> impl Strategy<Value = CameraPose> {
    (vec3(-0.3, 0.3), vec3(-1.0, 1.0))
        .prop_filter("baseline", |(_, t)| t.norm() > 0.2)
        .prop_map(|(w, t)| CameraPose::new(Rotation::exp(w), t))
}

/// Points in front of the identity camera and of any `second_pose`.
fn scene_points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(
        (-2.0..2.0, -2.0..2.0, 4.0..8.0).prop_map(|(x, y, z)| Vec3::new(x, y, z)),
        n,
    )
}

pub fn svd_factors_are_consistent(cases: u32) -> Result<(), String> {
    let mat = (1usize..7, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0..10.0f64, r * c).prop_map(move |d| Mat::from_row_slice(r, c, &d))
    });
    run(cases, mat, |a| {
        let s = svd(&a);
        let sv = &s.singular_values;
        prop_assert_eq!(sv.len(), a.cols());
        prop_assert!(sv.windows(2).all(|w| w[0] >= w[1]) && sv.iter().all(|&x| x >= 0.0));
        let vtv = s.v.transpose().matmul(&s.v);
        let scale = sv[0].max(1.0);
        for i in 0..a.cols() {
            for j in 0..a.cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((vtv[(i, j)] - want).abs() < 1e-10);
            }
            let av = a.mul_vec(&s.v_col(i));
            let n = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - sv[i]).abs() < 1e-9 * scale, "|A v_{}| = {} vs {}", i, n, sv[i]);
        }
        let energy: f64 = sv.iter().map(|x| x * x).sum();
        prop_assert!((energy.sqrt() - a.frobenius_norm()).abs() < 1e-9 * scale);
        Ok(())
    })
}

pub fn rotation_exp_is_orthonormal_and_log_inverts(cases: u32) -> Result<(), String> {
    let w = vec3(-1.8, 1.8).prop_filter("inside the log's principal range", |w| w.norm() < 3.1);
    run(cases, w, |w| {
        let r = Rotation::exp(w);
        prop_assert!(orthonormality_error(r.matrix()) < 1e-12);
        prop_assert!((r.matrix().det() - 1.0).abs() < 1e-12);
        prop_assert!((r.log() - w).norm() < 1e-9, "log(exp({:?})) = {:?}", w, r.log());
        let noisy = *r.matrix() + Mat3::diag([1e-3, -2e-3, 5e-4]);
        let back = Rotation::nearest(&noisy);
        prop_assert!(orthonormality_error(back.matrix()) < 1e-12);
        prop_assert!(back.angle_to(&r) < 1e-2);
        Ok(())
    })
}

pub fn rq_recovers_triangular_times_rotation(cases: u32) -> Result<(), String> {
    let k = (0.5..5.0f64, 0.5..5.0f64, 0.5..5.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64);
    run(cases, (k, vec3(-3.0, 3.0)), |((a, b, c, d, e, f), w)| {
        let k = Mat3([[a, d, e], [0.0, b, f], [0.0, 0.0, c]]);
        let h = k * *Rotation::exp(w).matrix();
        let (k2, r2) = rq_decompose(&h).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(k2.0[1][0] == 0.0 && k2.0[2][0] == 0.0 && k2.0[2][1] == 0.0);
        prop_assert!(k2.0[0][0] > 0.0 && k2.0[1][1] > 0.0 && k2.0[2][2] > 0.0);
        prop_assert!(orthonormality_error(r2.matrix()) < 1e-10);
        prop_assert!((k2 * *r2.matrix()).max_abs_diff(&h) < 1e-10 * h.frobenius_norm());
        prop_assert!(k2.max_abs_diff(&k) < 1e-9 * k.frobenius_norm());
        Ok(())
    })
}

pub fn gaussian_blur_is_a_convex_combination(cases: u32) -> Result<(), String> {
    let img = (2usize..24, 2usize..24, 0.3..4.0f64).prop_flat_map(|(w, h, s)| {
        prop::collection::vec(0.0..1.0f64, w * h).prop_map(move |d| (GrayImage::new(w, h, d).unwrap(), s))
    });
    run(cases, img, |(img, sigma)| {
        let k = gaussian_kernel(sigma).unwrap();
        prop_assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(k.iter().all(|&v| v > 0.0));
        let out = gaussian_blur(&img, sigma).unwrap();
        let (lo, hi) = img.min_max();
        prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        let mean_in = img.data().iter().sum::<f64>();
        prop_assert!(out.data().iter().all(|v| v.is_finite()) && mean_in.is_finite());
        Ok(())
    })
}

/// A small image made of Gaussian blobs on a flat background.
fn blob_image(size: usize, blobs: &[(f64, f64, f64, f64)]) -> GrayImage {
    let mut data = vec![0.5; size * size];
    for (i, v) in data.iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64, (i / size) as f64);
        for &(bx, by, s, a) in blobs {
            let d2 = (x - bx * size as f64).powi(2) + (y - by * size as f64).powi(2);
            *v += a * (-d2 / (2.0 * s * s)).exp();
        }
        *v = v.clamp(0.0, 1.0);
    }
    GrayImage::new(size, size, data).unwrap()
}

pub fn sift_descriptors_are_unit_norm(cases: u32) -> Result<(), String> {
    let blobs = prop::collection::vec((0.15..0.85f64, 0.15..0.85f64, 1.5..4.0f64, -0.45..0.45f64), 1..6);
    let params = SiftParams::default();
    let hits = std::cell::Cell::new(0usize);
    run(cases, (24usize..48, blobs), |(size, blobs)| {
        let img = blob_image(size, &blobs);
        let f = detect_features(&img, &params).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(f.keypoints.len(), f.descriptors.len());
        hits.set(hits.get() + usize::from(!f.is_empty()));
        for (kp, d) in f.keypoints.iter().zip(&f.descriptors) {
            prop_assert!((d.norm() - 1.0).abs() < 1e-5, "descriptor norm {}", d.norm());
            prop_assert!(d.values().iter().all(|&v| v >= 0.0 && v.is_finite()));
            prop_assert!(kp.x >= 0.0 && kp.y >= 0.0 && kp.x < size as f64 && kp.y < size as f64);
            prop_assert!(kp.sigma > 0.0 && kp.orientation.is_finite());
        }
        Ok(())
    })?;
    require_coverage("sift", hits.get(), cases, 0.5)
}

fn descriptor_set(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Descriptor>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f32, 16), n).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                // Spread 16 random values over the 128 entries.
                let mut d = [0f32; DESCRIPTOR_LEN];
                for (i, v) in d.iter_mut().enumerate() {
                    *v = r[i % 16] * ((i / 16) as f32 + 1.0);
                }
                let n = d.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-6);
                d.iter_mut().for_each(|v| *v /= n);
                Descriptor(d)
            })
            .collect()
    })
}

pub fn mutual_matches_are_one_to_one(cases: u32) -> Result<(), String> {
    let hits = std::cell::Cell::new(0usize);
    let input = (descriptor_set(1..25), descriptor_set(0..10), 0usize..25, 0.5..1.0f64);
    run(cases, input, |(l, extra, keep, ratio)| {
        // Slightly distorted copies of a prefix of `l`, rotated, plus
        // unrelated descriptors.
        let mut r: Vec<Descriptor> = l
            .iter()
            .take(keep)
            .enumerate()
            .map(|(i, d)| {
                let mut v = d.0;
                v.iter_mut().enumerate().for_each(|(j, x)| *x += 0.01 * ((i * 7 + j) as f32).sin().abs());
                Descriptor(v)
            })
            .collect();
        let shift = r.len() / 2;
        r.rotate_left(shift);
        r.extend(extra);
        if r.is_empty() {
            return Ok(());
        }
        let m = match_descriptors(&l, &r, ratio).unwrap();
        hits.set(hits.get() + usize::from(!m.matches.is_empty()));
        prop_assert!(m.matches.len() <= m.ratio_passed);
        let mut seen_l = vec![false; l.len()];
        let mut seen_r = vec![false; r.len()];
        for mm in &m.matches {
            prop_assert!(!seen_l[mm.idx_left] && !seen_r[mm.idx_right]);
            seen_l[mm.idx_left] = true;
            seen_r[mm.idx_right] = true;
            let d = l[mm.idx_left].distance(&r[mm.idx_right]);
            prop_assert!((d - mm.distance).abs() < 1e-5);
            // Nothing on the right is strictly closer to this left descriptor.
            prop_assert!(r.iter().all(|x| l[mm.idx_left].distance(x) >= mm.distance - 1e-5));
        }
        Ok(())
    })?;
    require_coverage("matching", hits.get(), cases, 0.5)
}

pub fn normalization_centres_and_scales(cases: u32) -> Result<(), String> {
    let pts = prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| Vec2::new(x, y)), 2..50)
        .prop_filter("not all coincident", |p| p.iter().any(|q| q.dist(&p[0]) > 1e-3));
    run(cases, pts, |pts| {
        let t = normalization_transform(&pts).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let q: Vec<Vec2> = pts.iter().map(|p| t.apply(*p)).collect();
        let n = q.len() as f64;
        let mean = q.iter().fold(Vec2::new(0.0, 0.0), |a, b| a + *b) * (1.0 / n);
        prop_assert!(mean.norm() < 1e-9);
        let spread = q.iter().map(|p| p.norm()).sum::<f64>() / n;
        prop_assert!((spread - 2f64.sqrt()).abs() < 1e-9);
        Ok(())
    })
}

pub fn fundamental_is_rank_two_and_exact(cases: u32) -> Result<(), String> {
    run(cases, (second_pose(), scene_points(12..40)), |(pose, pts)| {
        let k = k0();
        let pairs: Vec<(Vec2, Vec2)> = pts
            .iter()
            .map(|p| (k.project(&CameraPose::IDENTITY, *p).unwrap(), k.project(&pose, *p).unwrap()))
            .collect();
        let f = estimate_fundamental_8pt(&pairs).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (_, s, _) = svd3(f.matrix());
        prop_assert!(s[2] < 1e-12 * s[0], "singular values {:?}", s);
        prop_assert!((f.matrix().frobenius_norm() - 1.0).abs() < 1e-12);
        let max = f.matrix().0.iter().flatten().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
        prop_assert!(max > 0.0);
        for (l, r) in &pairs {
            prop_assert!(f.residual(*l, *r).abs() < 1e-9, "residual {}", f.residual(*l, *r));
        }
        // Canonicalizing again is a no-op up to rounding.
        let again = FundamentalMatrix::from_matrix(f.matrix());
        prop_assert!(again.matrix().max_abs_diff(f.matrix()) < 1e-12);
        Ok(())
    })
}

pub fn ransac_samples_are_distinct(cases: u32) -> Result<(), String> {
    let nk = (1usize..200).prop_flat_map(|n| (Just(n), 1..=n.min(12), any::<u64>()));
    run(cases, nk, |(n, k, seed)| {
        let cfg = RansacConfig {
            rng_seed: seed,
            ..RansacConfig::default()
        };
        let mut rng = cfg.rng();
        let mut buf = Vec::new();
        for _ in 0..5 {
            sample_indices(&mut rng, n, k, &mut buf);
            prop_assert_eq!(buf.len(), k);
            let mut sorted = buf.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), k);
            prop_assert!(buf.iter().all(|&i| i < n));
        }
        Ok(())
    })
}

pub fn essential_decomposition_contains_truth(cases: u32) -> Result<(), String> {
    run(cases, (second_pose(), scene_points(5..30)), |(pose, pts)| {
        let t = pose.translation.normalized();
        let e = EssentialMatrix::from_pose(&pose.rotation, t);
        let (_, s, _) = svd3(e.matrix());
        prop_assert!((s[0] - s[1]).abs() < 1e-9 && s[2] < 1e-9);
        let cands = decompose_essential(&e);
        for (r, tc) in &cands {
            prop_assert!(orthonormality_error(r.matrix()) < 1e-10 && (r.matrix().det() - 1.0).abs() < 1e-10);
            prop_assert!((tc.norm() - 1.0).abs() < 1e-10);
        }
        let corrs: Vec<(Vec2, Vec2)> = pts
            .iter()
            .map(|p| {
                let q = pose.transform(*p);
                (Vec2::new(p.x / p.z, p.y / p.z), Vec2::new(q.x / q.z, q.y / q.z))
            })
            .collect();
        let sel = select_pose_cheirality(&cands, &corrs).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(sel.pose.rotation.angle_to(&pose.rotation) < 1e-8);
        prop_assert!((sel.pose.translation - t).norm() < 1e-8);
        prop_assert_eq!(sel.scores[sel.candidate], corrs.len());
        Ok(())
    })
}

pub fn triangulation_is_exact(cases: u32) -> Result<(), String> {
    run(cases, (second_pose(), scene_points(1..2)), |(pose, pts)| {
        let p = pts[0];
        let ml = CameraPose::IDENTITY.matrix34();
        let mr = pose.matrix34();
        let q = pose.transform(p);
        let x = triangulate_dlt(Vec2::new(p.x / p.z, p.y / p.z), Vec2::new(q.x / q.z, q.y / q.z), &ml, &mr)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((x - p).norm() < 1e-9 * p.norm().max(1.0), "{:?} vs {:?}", x, p);
        Ok(())
    })
}

pub fn resection_round_trips(cases: u32) -> Result<(), String> {
    let k = (600.0..1200.0f64, 600.0..1200.0f64, 250.0..400.0f64, 200.0..300.0f64);
    let hits = std::cell::Cell::new(0usize);
    run(cases, (k, second_pose(), scene_points(6..30)), |((fx, fy, cx, cy), pose, pts)| {
        let k = CameraIntrinsics::new(fx, fy, cx, cy, 0.0).unwrap();
        let corrs: Vec<Correspondence2D3D> =
            pts.iter().map(|p| Correspondence2D3D::new(*p, k.project(&pose, *p).unwrap())).collect();
        let m = match dlt_projection_matrix(&corrs) {
            Ok(m) => m,
            // Six random points can be nearly coplanar; a degeneracy report is
            // acceptable, a wrong answer is not.
            Err(sfmkit_core::resection::ResectionError::Degenerate) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for c in &corrs {
            let px = m.project(c.point3d).unwrap();
            prop_assert!(px.dist(&c.point2d) < 1e-6, "reprojection {}", px.dist(&c.point2d));
        }
        let (k2, pose2) = decompose_projection(&m).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((k2.fx - fx).abs() < 1e-5 * fx && (k2.cy - cy).abs() < 1e-5 * fx);
        prop_assert!(pose2.rotation.angle_to(&pose.rotation) < 1e-7);
        prop_assert!((pose2.center() - pose.center()).norm() < 1e-6);
        hits.set(hits.get() + 1);
        Ok(())
    })?;
    require_coverage("resection", hits.get(), cases, 0.9)
}

/// Three cameras looking at the unit cube with perturbed starting values.
fn ba_problem() -> impl Strategy<Value = (BAProblem, BAProblem)> {
    let pts = prop::collection::vec(vec3(-1.0, 1.0), 8..16);
    let pose_noise = prop::collection::vec((vec3(-0.02, 0.02), vec3(-0.05, 0.05)), 3);
    let pt_noise = prop::collection::vec(vec3(-0.05, 0.05), 16);
    (pts, pose_noise, pt_noise).prop_map(|(pts, pn, qn)| {
        let k = k0();
        let poses: Vec<CameraPose> = (0..3)
            .map(|i| {
                let a = 0.3 * i as f64;
                let r = Rotation::exp(Vec3::new(0.0, a, 0.0));
                let c = Vec3::new(5.0 * a.sin(), 0.0, -5.0 * a.cos());
                CameraPose::new(r, -(*r.matrix() * c))
            })
            .collect();
        let mut obs = Vec::new();
        for (j, pose) in poses.iter().enumerate() {
            for (i, p) in pts.iter().enumerate() {
                obs.push(Observation {
                    pose: j,
                    point: i,
                    pixel: k.project(pose, *p).unwrap(),
                });
            }
        }
        let truth = BAProblem::new(poses.clone(), pts.clone(), k, obs.clone()).unwrap();
        let start_poses = poses
            .iter()
            .enumerate()
            .map(|(j, p)| {
                if j == 0 {
                    *p
                } else {
                    CameraPose::new(Rotation::exp(pn[j].0) * p.rotation, p.translation + pn[j].1)
                }
            })
            .collect();
        let start_pts = pts.iter().zip(&qn).map(|(p, n)| *p + *n).collect();
        (truth, BAProblem::new(start_poses, start_pts, k, obs).unwrap())
    })
}

pub fn ba_cost_is_monotone(cases: u32) -> Result<(), String> {
    run(cases, ba_problem(), |(truth, start)| {
        prop_assert!(residuals_and_jacobian(&truth).cost() < 1e-18);
        let mut last = start.cost();
        for iters in 1..=4 {
            let opts = BAOptions {
                max_iterations: iters,
                ..BAOptions::default()
            };
            let (out, report) = optimize(&start, &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(report.final_cost <= report.initial_cost);
            prop_assert!(report.final_cost <= last * (1.0 + 1e-12), "cost rose at {} iterations", iters);
            prop_assert!(report.iterations <= iters);
            prop_assert_eq!(out.poses[0], start.poses[0]);
            for p in &out.poses {
                prop_assert!(orthonormality_error(p.rotation.matrix()) < 1e-9);
            }
            last = report.final_cost;
        }
        Ok(())
    })
}

fn pair_graph() -> impl Strategy<Value = Vec<PairGeometry>> {
    (2usize..6).prop_flat_map(|n| {
        let keys: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let per_pair = prop::collection::vec((0usize..8, 0usize..8), 0..6);
        prop::collection::vec(per_pair, keys.len()).prop_map(move |lists| {
            keys.iter()
                .zip(lists)
                .map(|(&(i, j), raw)| {
                    // Mutual matching never reuses a keypoint within one pair.
                    let mut inliers: Vec<(usize, usize)> = Vec::new();
                    for (a, b) in raw {
                        if inliers.iter().all(|&(x, y)| x != a && y != b) {
                            inliers.push((a, b));
                        }
                    }
                    PairGeometry {
                        i,
                        j,
                        ratio_passed: inliers.len(),
                        putative: inliers.len(),
                        inliers,
                        fundamental: None,
                    }
                })
                .collect()
        })
    })
}

pub fn tracks_are_valid(cases: u32) -> Result<(), String> {
    let hits = std::cell::Cell::new(0usize);
    run(cases, pair_graph(), |pairs| {
        let tracks = build_tracks(&pairs);
        hits.set(hits.get() + usize::from(tracks.iter().any(|t| t.observations.len() > 2)));
        let mut owner = std::collections::BTreeMap::new();
        for (ti, t) in tracks.iter().enumerate() {
            prop_assert!(t.observations.len() >= 2 && t.point3d.is_none());
            prop_assert!(t.observations.windows(2).all(|w| w[0] < w[1]));
            let dup = t.observations.windows(2).any(|w| w[0].0 == w[1].0);
            let want = if dup { TrackStatus::Rejected } else { TrackStatus::Candidate };
            prop_assert_eq!(t.status, want);
            for o in &t.observations {
                prop_assert!(owner.insert(*o, ti).is_none(), "keypoint {:?} in two tracks", o);
            }
        }
        for p in &pairs {
            for &(a, b) in &p.inliers {
                prop_assert_eq!(owner.get(&(p.i, a)), owner.get(&(p.j, b)));
                prop_assert!(owner.contains_key(&(p.i, a)));
            }
        }
        Ok(())
    })?;
    require_coverage("tracks", hits.get(), cases, 0.3)
}
