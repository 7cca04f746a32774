//! The incremental reconstruction driver: pairwise verification, tracks,
//! two-view bootstrap, greedy PnP registration and bundle adjustment.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::bundle::{optimize, BAError, BAOptions, BAProblem, BAReport, Observation};
use crate::image::GrayImage;
use crate::matching::{match_descriptors, ransac_fundamental_points, FundamentalMatrix, RansacConfig};
use crate::numerics::{Vec2, Vec3};
use crate::resection::{pnp_ransac, Correspondence2D3D, ResectionError};
use crate::sift::{detect_features, Descriptor, Features, SiftError, SiftParams};
use crate::two_view::{
    decompose_essential, essential_from_fundamental, select_pose_cheirality, triangulate_dlt, triangulate_multiview,
    triangulation_angle, CameraIntrinsics, CameraPose, Mat34, TwoViewError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("need at least two images, got {0}")]
    TooFewImages(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no image pair has enough inliers and baseline to bootstrap")]
    NoValidPair,
    #[error("two-view bootstrap failed: {0}")]
    Bootstrap(#[from] TwoViewError),
    #[error("feature detection failed on image {index}: {source}")]
    Features { index: usize, source: SiftError },
    #[error("bundle adjustment failed: {0}")]
    Bundle(#[from] BAError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PipelineConfig {
    pub sift: SiftParams,
    pub ransac: RansacConfig,
    /// Lowe ratio for descriptor matching.
    pub ratio: f64,
    pub min_init_inliers: usize,
    pub min_triangulation_angle_deg: f64,
    /// Reprojection threshold for tracks and for PnP inliers.
    pub max_reproj_px: f64,
    /// Run bundle adjustment after every this many registered views (0 disables).
    pub local_ba_interval: usize,
    pub min_pnp_correspondences: usize,
    pub local_ba_max_iterations: usize,
    pub final_ba_max_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sift: SiftParams::default(),
            ransac: RansacConfig::default(),
            ratio: 0.75,
            min_init_inliers: 100,
            min_triangulation_angle_deg: 2.0,
            max_reproj_px: 4.0,
            local_ba_interval: 3,
            min_pnp_correspondences: 12,
            local_ba_max_iterations: 25,
            final_ba_max_iterations: 100,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m| Err(PipelineError::InvalidConfig(m));
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad("ratio must lie in (0, 1]");
        }
        if !(self.ransac.inlier_threshold_px > 0.0) || self.ransac.max_iterations == 0 {
            return bad("RANSAC threshold and iteration cap must be positive");
        }
        if !(self.ransac.confidence > 0.0 && self.ransac.confidence < 1.0) {
            return bad("RANSAC confidence must lie in (0, 1)");
        }
        if self.min_init_inliers == 0 || self.min_pnp_correspondences == 0 {
            return bad("inlier floors must be positive");
        }
        if !(self.min_triangulation_angle_deg > 0.0) || !(self.max_reproj_px > 0.0) {
            return bad("triangulation angle and reprojection threshold must be positive");
        }
        if self.sift.validate().is_err() {
            return bad("invalid SIFT parameters");
        }
        Ok(())
    }
}

/// Keypoint positions and descriptors of one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageFeatures {
    pub keypoints: Vec<Vec2>,
    pub descriptors: Vec<Descriptor>,
}

impl ImageFeatures {
    pub fn from_sift(f: &Features) -> Self {
        Self {
            keypoints: f.keypoints.iter().map(|k| Vec2::new(k.x, k.y)).collect(),
            descriptors: f.descriptors.clone(),
        }
    }
}

/// Sequential SIFT detection over an image list.
pub fn detect_all(images: &[GrayImage], params: &SiftParams) -> Result<Vec<ImageFeatures>, PipelineError> {
    images
        .iter()
        .enumerate()
        .map(|(index, img)| {
            detect_features(img, params)
                .map(|f| ImageFeatures::from_sift(&f))
                .map_err(|source| PipelineError::Features { index, source })
        })
        .collect()
}

/// Verified matches between images `i < j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairGeometry {
    pub i: usize,
    pub j: usize,
    pub ratio_passed: usize,
    /// Mutual ratio-test matches before geometric verification.
    pub putative: usize,
    /// `(keypoint in i, keypoint in j)` pairs consistent with `fundamental`.
    pub inliers: Vec<(usize, usize)>,
    pub fundamental: Option<FundamentalMatrix>,
}

/// Ratio-test matching followed by fundamental-matrix RANSAC.
pub fn match_pair(i: usize, j: usize, a: &ImageFeatures, b: &ImageFeatures, cfg: &PipelineConfig) -> PairGeometry {
    let mut out = PairGeometry {
        i,
        j,
        ratio_passed: 0,
        putative: 0,
        inliers: Vec::new(),
        fundamental: None,
    };
    let Ok(m) = match_descriptors(&a.descriptors, &b.descriptors, cfg.ratio) else {
        return out;
    };
    out.ratio_passed = m.ratio_passed;
    out.putative = m.matches.len();
    let pts: Vec<(Vec2, Vec2)> = m
        .matches
        .iter()
        .map(|mm| (a.keypoints[mm.idx_left], b.keypoints[mm.idx_right]))
        .collect();
    if let Ok(r) = ransac_fundamental_points(&pts, &cfg.ransac) {
        out.inliers = r
            .inliers
            .iter()
            .map(|&k| (m.matches[k].idx_left, m.matches[k].idx_right))
            .collect();
        out.fundamental = Some(r.model);
    }
    out
}

/// Exhaustive pairwise matching, `i < j`, in lexicographic order.
pub fn match_all_pairs(features: &[ImageFeatures], cfg: &PipelineConfig) -> Vec<PairGeometry> {
    let mut out = Vec::new();
    for i in 0..features.len() {
        for j in (i + 1)..features.len() {
            out.push(match_pair(i, j, &features[i], &features[j], cfg));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TrackStatus {
    Candidate,
    Triangulated,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Track {
    pub point3d: Option<Vec3>,
    /// `(image, keypoint)`, sorted by image.
    pub observations: Vec<(usize, usize)>,
    pub status: TrackStatus,
}

impl Track {
    pub fn keypoint_in(&self, image: usize) -> Option<usize> {
        self.observations.iter().find(|o| o.0 == image).map(|o| o.1)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Connected components of `(image, keypoint)` nodes under the inlier
/// matches. Components holding two keypoints of one image are rejected.
pub fn build_tracks(pairs: &[PairGeometry]) -> Vec<Track> {
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for p in pairs {
        for &(a, b) in &p.inliers {
            ids.insert((p.i, a), 0);
            ids.insert((p.j, b), 0);
        }
    }
    let nodes: Vec<(usize, usize)> = ids.keys().copied().collect();
    for (n, v) in ids.values_mut().enumerate() {
        *v = n;
    }
    let mut uf = UnionFind((0..nodes.len()).collect());
    for p in pairs {
        for &(a, b) in &p.inliers {
            uf.union(ids[&(p.i, a)], ids[&(p.j, b)]);
        }
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (n, node) in nodes.iter().enumerate() {
        groups.entry(uf.find(n)).or_default().push(*node);
    }
    groups
        .into_values()
        .map(|observations| {
            let conflict = observations.windows(2).any(|w| w[0].0 == w[1].0);
            Track {
                point3d: None,
                observations,
                status: if conflict {
                    TrackStatus::Rejected
                } else {
                    TrackStatus::Candidate
                },
            }
        })
        .collect()
}

/// One line of progress per registered view.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProgressRecord {
    pub view: usize,
    pub inliers: usize,
    pub mean_reproj_px: f64,
    pub tracks: usize,
}

impl fmt::Display for ProgressRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "view={} inliers={} mean_reproj_px={:.3} tracks={}",
            self.view, self.inliers, self.mean_reproj_px, self.tracks
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BAKind {
    Periodic,
    Final,
}

/// A bundle adjustment pass; `views[k]` is the image behind BA pose `k`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BARun {
    pub kind: BAKind,
    pub views: Vec<usize>,
    pub report: BAReport,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReconstructionState {
    pub intrinsics: CameraIntrinsics,
    pub keypoints: Vec<Vec<Vec2>>,
    pub poses: BTreeMap<usize, CameraPose>,
    pub tracks: Vec<Track>,
    pub pairwise: BTreeMap<(usize, usize), PairGeometry>,
    /// Registration order; the first entry carries the identity pose.
    pub registered: Vec<usize>,
    pub failed: Vec<(usize, ResectionError)>,
    pub progress: Vec<ProgressRecord>,
    pub ba_runs: Vec<BARun>,
    pub completed: bool,
}

/// Result of checking a triangulated point against its registered views.
struct PointCheck {
    reproj_ok: bool,
    max_angle_rad: f64,
}

impl ReconstructionState {
    pub fn new(intrinsics: CameraIntrinsics, keypoints: Vec<Vec<Vec2>>, pairs: Vec<PairGeometry>) -> Self {
        let tracks = build_tracks(&pairs);
        Self {
            intrinsics,
            keypoints,
            poses: BTreeMap::new(),
            tracks,
            pairwise: pairs.into_iter().map(|p| ((p.i, p.j), p)).collect(),
            registered: Vec::new(),
            failed: Vec::new(),
            progress: Vec::new(),
            ba_runs: Vec::new(),
            completed: false,
        }
    }

    pub fn num_images(&self) -> usize {
        self.keypoints.len()
    }

    pub fn triangulated_count(&self) -> usize {
        self.tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Triangulated)
            .count()
    }

    fn is_registered(&self, image: usize) -> bool {
        self.poses.contains_key(&image)
    }

    fn has_failed(&self, image: usize) -> bool {
        self.failed.iter().any(|f| f.0 == image)
    }

    fn projection(&self, image: usize) -> Mat34 {
        self.intrinsics.projection_matrix(&self.poses[&image])
    }

    fn registered_observations<'a>(&'a self, t: &'a Track) -> impl Iterator<Item = (usize, usize)> + 'a {
        t.observations.iter().copied().filter(|o| self.is_registered(o.0))
    }

    fn check_point(&self, p: Vec3, obs: &[(usize, usize)], max_reproj: f64) -> PointCheck {
        let mut reproj_ok = true;
        for &(img, kp) in obs {
            match self.intrinsics.project(&self.poses[&img], p) {
                Some(px) if px.dist(&self.keypoints[img][kp]) <= max_reproj => {}
                _ => reproj_ok = false,
            }
        }
        let centers: Vec<Vec3> = obs.iter().map(|o| self.poses[&o.0].center()).collect();
        let mut max_angle_rad = 0.0f64;
        for a in 0..centers.len() {
            for b in (a + 1)..centers.len() {
                if let Ok(ang) = triangulation_angle(p, centers[a], centers[b]) {
                    max_angle_rad = max_angle_rad.max(ang);
                }
            }
        }
        PointCheck {
            reproj_ok,
            max_angle_rad,
        }
    }

    /// Triangulates a track from all of its registered observations and
    /// applies the depth, reprojection and angle filters.
    fn try_triangulate(&self, t: &Track, cfg: &PipelineConfig) -> Option<Vec3> {
        let obs: Vec<(usize, usize)> = self.registered_observations(t).collect();
        if obs.len() < 2 {
            return None;
        }
        let views: Vec<(Vec2, Mat34)> = obs
            .iter()
            .map(|&(img, kp)| (self.keypoints[img][kp], self.projection(img)))
            .collect();
        let p = triangulate_multiview(&views).ok()?;
        let check = self.check_point(p, &obs, cfg.max_reproj_px);
        (check.reproj_ok && check.max_angle_rad >= cfg.min_triangulation_angle_deg.to_radians()).then_some(p)
    }

    /// Triangulates candidate tracks seen by `view` (or by any registered
    /// view when `None`). Returns the number of new points.
    pub fn triangulate_pending(&mut self, view: Option<usize>, cfg: &PipelineConfig) -> usize {
        let mut added = 0;
        for tid in 0..self.tracks.len() {
            let t = &self.tracks[tid];
            if t.status != TrackStatus::Candidate {
                continue;
            }
            if let Some(v) = view {
                if t.keypoint_in(v).is_none() {
                    continue;
                }
            }
            if let Some(p) = self.try_triangulate(t, cfg) {
                let t = &mut self.tracks[tid];
                t.point3d = Some(p);
                t.status = TrackStatus::Triangulated;
                added += 1;
            }
        }
        added
    }

    /// Relative pose and median triangulation angle (degrees) of a pair,
    /// from its fundamental matrix and inliers.
    pub fn trial_bootstrap(&self, key: (usize, usize)) -> Option<(CameraPose, f64)> {
        let pair = self.pairwise.get(&key)?;
        let f = pair.fundamental.as_ref()?;
        let k = &self.intrinsics;
        let corrs: Vec<(Vec2, Vec2)> = pair
            .inliers
            .iter()
            .map(|&(a, b)| {
                (
                    k.normalize(self.keypoints[key.0][a]),
                    k.normalize(self.keypoints[key.1][b]),
                )
            })
            .collect();
        let e = essential_from_fundamental(f, k);
        let res = select_pose_cheirality(&decompose_essential(&e), &corrs).ok()?;
        let pose = res.pose;
        let (ml, mr) = (CameraPose::IDENTITY.matrix34(), pose.matrix34());
        let c2 = pose.center();
        let mut angles: Vec<f64> = corrs
            .iter()
            .map(|(l, r)| {
                triangulate_dlt(*l, *r, &ml, &mr)
                    .ok()
                    .and_then(|p| triangulation_angle(p, Vec3::ZERO, c2).ok())
                    .unwrap_or(0.0)
            })
            .collect();
        if angles.is_empty() {
            return None;
        }
        angles.sort_by(|a, b| a.total_cmp(b));
        Some((pose, angles[angles.len() / 2].to_degrees()))
    }

    /// Pairs meeting the inlier floor, scored by inliers times a 0/1 factor
    /// for a median triangulation angle above the minimum; best first, ties
    /// broken by the lower pair.
    pub fn rank_initial_pairs(&self, cfg: &PipelineConfig) -> Vec<((usize, usize), usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .pairwise
            .values()
            .filter(|p| p.inliers.len() >= cfg.min_init_inliers)
            .map(|p| (p.i, p.j))
            .collect();
        pairs.sort_by(|a, b| self.pairwise[b].inliers.len().cmp(&self.pairwise[a].inliers.len()).then(a.cmp(b)));
        let mut out: Vec<((usize, usize), usize)> = pairs
            .into_iter()
            .filter_map(|key| {
                let (_, angle) = self.trial_bootstrap(key)?;
                (angle >= cfg.min_triangulation_angle_deg).then(|| (key, self.pairwise[&key].inliers.len()))
            })
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn select_initial_pair(&self, cfg: &PipelineConfig) -> Result<(usize, usize), PipelineError> {
        self.rank_initial_pairs(cfg)
            .first()
            .map(|p| p.0)
            .ok_or(PipelineError::NoValidPair)
    }

    /// Fixes `pose_i = [I | 0]`, recovers `pose_j` with `|t| = 1` and
    /// triangulates every track seen by both.
    pub fn bootstrap(&mut self, key: (usize, usize), cfg: &PipelineConfig) -> Result<(), PipelineError> {
        let pair = self.pairwise.get(&key).ok_or(PipelineError::NoValidPair)?;
        let f = pair.fundamental.ok_or(PipelineError::NoValidPair)?;
        let k = self.intrinsics;
        let corrs: Vec<(Vec2, Vec2)> = pair
            .inliers
            .iter()
            .map(|&(a, b)| {
                (
                    k.normalize(self.keypoints[key.0][a]),
                    k.normalize(self.keypoints[key.1][b]),
                )
            })
            .collect();
        let e = essential_from_fundamental(&f, &k);
        let res = select_pose_cheirality(&decompose_essential(&e), &corrs)?;
        let pose_j = CameraPose::new(res.pose.rotation, res.pose.translation.normalized());
        let inliers = pair.inliers.len();
        self.poses.insert(key.0, CameraPose::IDENTITY);
        self.poses.insert(key.1, pose_j);
        self.registered = vec![key.0, key.1];
        self.triangulate_pending(None, cfg);
        let tracks = self.triangulated_count();
        for view in [key.0, key.1] {
            let rec = ProgressRecord {
                view,
                inliers,
                mean_reproj_px: self.mean_view_error(view),
                tracks,
            };
            log::info!("{rec}");
            self.progress.push(rec);
        }
        Ok(())
    }

    /// Mean reprojection error of the triangulated tracks seen by `view`.
    pub fn mean_view_error(&self, view: usize) -> f64 {
        let Some(pose) = self.poses.get(&view) else {
            return f64::NAN;
        };
        let (mut sum, mut n) = (0.0, 0usize);
        for t in &self.tracks {
            if let (TrackStatus::Triangulated, Some(p), Some(kp)) = (t.status, t.point3d, t.keypoint_in(view)) {
                if let Some(px) = self.intrinsics.project(pose, p) {
                    sum += px.dist(&self.keypoints[view][kp]);
                    n += 1;
                }
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    /// Per-image count of keypoints on triangulated tracks.
    pub fn visible_point_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_images()];
        for t in self.tracks.iter().filter(|t| t.status == TrackStatus::Triangulated) {
            for o in &t.observations {
                counts[o.0] += 1;
            }
        }
        counts
    }

    /// The unregistered image seeing the most triangulated points (lowest
    /// index on ties), provided it reaches the correspondence floor.
    pub fn select_next_view(&self, cfg: &PipelineConfig) -> Option<usize> {
        let counts = self.visible_point_counts();
        let mut best: Option<(usize, usize)> = None;
        for (img, &c) in counts.iter().enumerate() {
            if self.is_registered(img) || self.has_failed(img) || c < cfg.min_pnp_correspondences {
                continue;
            }
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((img, c));
            }
        }
        best.map(|b| b.0)
    }

    /// Registers `view` by PnP against the triangulated tracks, drops its
    /// outlier observations and triangulates newly visible tracks. On failure
    /// the view is recorded in `failed` and nothing else changes.
    pub fn register_view(&mut self, view: usize, cfg: &PipelineConfig) -> Result<ProgressRecord, ResectionError> {
        let mut corrs = Vec::new();
        let mut corr_tracks = Vec::new();
        for (tid, t) in self.tracks.iter().enumerate() {
            if let (TrackStatus::Triangulated, Some(p), Some(kp)) = (t.status, t.point3d, t.keypoint_in(view)) {
                corrs.push(Correspondence2D3D::new(p, self.keypoints[view][kp]));
                corr_tracks.push(tid);
            }
        }
        let result = if corrs.len() < cfg.min_pnp_correspondences {
            Err(ResectionError::InsufficientPoints {
                needed: cfg.min_pnp_correspondences,
                got: corrs.len(),
            })
        } else {
            pnp_ransac(&corrs, &self.intrinsics, &cfg.ransac.with_threshold(cfg.max_reproj_px))
        };
        let pnp = match result {
            Ok(r) => r,
            Err(e) => {
                log::warn!("view={view} registration failed: {e}");
                self.failed.push((view, e));
                return Err(e);
            }
        };
        self.poses.insert(view, pnp.pose);
        self.registered.push(view);
        let mut is_inlier = vec![false; corrs.len()];
        for &i in &pnp.inliers {
            is_inlier[i] = true;
        }
        for (c, &tid) in corr_tracks.iter().enumerate() {
            if !is_inlier[c] {
                self.tracks[tid].observations.retain(|o| o.0 != view);
            }
        }
        self.triangulate_pending(Some(view), cfg);
        let rec = ProgressRecord {
            view,
            inliers: pnp.inliers.len(),
            mean_reproj_px: pnp.mean_reproj_px,
            tracks: self.triangulated_count(),
        };
        log::info!("{rec}");
        self.progress.push(rec);
        Ok(rec)
    }

    /// Builds the BA problem over registered views and triangulated tracks.
    /// Returns the problem and the track id behind each BA point.
    pub fn ba_problem(&self) -> (BAProblem, Vec<usize>) {
        let mut pose_index = BTreeMap::new();
        for (k, &img) in self.registered.iter().enumerate() {
            pose_index.insert(img, k);
        }
        let mut points = Vec::new();
        let mut track_ids = Vec::new();
        let mut observations = Vec::new();
        for (tid, t) in self.tracks.iter().enumerate() {
            let (TrackStatus::Triangulated, Some(p)) = (t.status, t.point3d) else {
                continue;
            };
            let pi = points.len();
            points.push(p);
            track_ids.push(tid);
            for &(img, kp) in &t.observations {
                if let Some(&k) = pose_index.get(&img) {
                    observations.push(Observation {
                        pose: k,
                        point: pi,
                        pixel: self.keypoints[img][kp],
                    });
                }
            }
        }
        let problem = BAProblem {
            poses: self.registered.iter().map(|i| self.poses[i]).collect(),
            points,
            intrinsics: self.intrinsics,
            observations,
        };
        (problem, track_ids)
    }

    /// Joint refinement of all registered poses and triangulated points.
    pub fn bundle_adjust(&mut self, kind: BAKind, max_iterations: usize) -> Result<&BARun, BAError> {
        let (problem, track_ids) = self.ba_problem();
        let opts = BAOptions {
            max_iterations,
            ..BAOptions::default()
        };
        let (refined, report) = optimize(&problem, &opts)?;
        for (k, &img) in self.registered.iter().enumerate() {
            self.poses.insert(img, refined.poses[k]);
        }
        for (pi, &tid) in track_ids.iter().enumerate() {
            self.tracks[tid].point3d = Some(refined.points[pi]);
        }
        log::info!(
            "bundle adjustment ({kind:?}): rmse {:.4} -> {:.4} px over {} iterations",
            report.initial_rmse_px,
            report.final_rmse_px,
            report.iterations
        );
        self.ba_runs.push(BARun {
            kind,
            views: self.registered.clone(),
            report,
        });
        Ok(self.ba_runs.last().expect("just pushed"))
    }

    /// Drops registered observations that reproject beyond the threshold (or
    /// behind the camera) and rejects tracks left with fewer than two views or
    /// too small a triangulation angle. Returns the number of rejected tracks.
    pub fn refilter(&mut self, cfg: &PipelineConfig) -> usize {
        let mut rejected = 0;
        for tid in 0..self.tracks.len() {
            let t = &self.tracks[tid];
            let (TrackStatus::Triangulated, Some(p)) = (t.status, t.point3d) else {
                continue;
            };
            let bad: Vec<usize> = t
                .observations
                .iter()
                .filter(|o| self.is_registered(o.0))
                .filter(|&&(img, kp)| match self.intrinsics.project(&self.poses[&img], p) {
                    Some(px) => px.dist(&self.keypoints[img][kp]) > cfg.max_reproj_px,
                    None => true,
                })
                .map(|o| o.0)
                .collect();
            let remaining: Vec<(usize, usize)> = t
                .observations
                .iter()
                .copied()
                .filter(|o| self.is_registered(o.0) && !bad.contains(&o.0))
                .collect();
            let angle_ok = remaining.len() >= 2
                && self.check_point(p, &remaining, f64::INFINITY).max_angle_rad
                    >= cfg.min_triangulation_angle_deg.to_radians();
            let t = &mut self.tracks[tid];
            t.observations.retain(|o| !bad.contains(&o.0));
            if !angle_ok {
                t.status = TrackStatus::Rejected;
                t.point3d = None;
                rejected += 1;
            }
        }
        rejected
    }

    fn periodic_ba_due(&self, cfg: &PipelineConfig) -> bool {
        let added = self.registered.len().saturating_sub(2);
        cfg.local_ba_interval > 0 && added > 0 && added % cfg.local_ba_interval == 0
    }

    fn run_ba(&mut self, kind: BAKind, iters: usize, cfg: &PipelineConfig) {
        match self.bundle_adjust(kind, iters) {
            Ok(_) => {
                self.refilter(cfg);
            }
            Err(e) => log::warn!("bundle adjustment ({kind:?}) skipped: {e}"),
        }
    }
}

/// Runs (or resumes) the incremental loop on a prepared state: bootstrap if
/// nothing is registered, greedy registration with periodic bundle
/// adjustment, then a final global bundle adjustment and refilter.
pub fn reconstruct(mut state: ReconstructionState, cfg: &PipelineConfig) -> Result<ReconstructionState, PipelineError> {
    cfg.validate()?;
    if state.num_images() < 2 {
        return Err(PipelineError::TooFewImages(state.num_images()));
    }
    if state.completed {
        return Ok(state);
    }
    if state.registered.is_empty() {
        let ranked = state.rank_initial_pairs(cfg);
        let mut last_err = PipelineError::NoValidPair;
        for (key, _) in ranked {
            let mut trial = state.clone();
            match trial.bootstrap(key, cfg) {
                Ok(()) if trial.triangulated_count() > 0 => {
                    state = trial;
                    break;
                }
                Ok(()) => {}
                Err(e) => last_err = e,
            }
        }
        if state.registered.is_empty() {
            return Err(last_err);
        }
    }
    while let Some(view) = state.select_next_view(cfg) {
        if state.register_view(view, cfg).is_ok() && state.periodic_ba_due(cfg) {
            state.run_ba(BAKind::Periodic, cfg.local_ba_max_iterations, cfg);
        }
    }
    state.run_ba(BAKind::Final, cfg.final_ba_max_iterations, cfg);
    state.completed = true;
    Ok(state)
}

/// Matching through final bundle adjustment on precomputed features.
pub fn run_incremental_sfm(
    features: &[ImageFeatures],
    intrinsics: &CameraIntrinsics,
    cfg: &PipelineConfig,
) -> Result<ReconstructionState, PipelineError> {
    cfg.validate()?;
    if features.len() < 2 {
        return Err(PipelineError::TooFewImages(features.len()));
    }
    let pairs = match_all_pairs(features, cfg);
    let keypoints = features.iter().map(|f| f.keypoints.clone()).collect();
    reconstruct(ReconstructionState::new(*intrinsics, keypoints, pairs), cfg)
}
