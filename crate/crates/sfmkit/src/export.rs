//! Final artifacts: the PLY point cloud, camera poses as JSON and the CSV
//! diagnostics.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sfmkit_core::image::GrayImage;
use sfmkit_core::pipeline::{BAKind, PairGeometry, ReconstructionState, TrackStatus};

use crate::{io_err, Error, Result};

pub const CLOUD_FILE: &str = "cloud.ply";
pub const POSES_FILE: &str = "poses.json";
pub const KEYPOINTS_CSV: &str = "keypoints_per_image.csv";
pub const MATCHES_CSV: &str = "matches.csv";
pub const REPROJ_CSV: &str = "reproj_error.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub position: [f64; 3],
    pub gray: u8,
}

/// Maps a mean intensity in `[0, 1]` to `floor(255 * v)`.
pub fn intensity_to_u8(v: f64) -> u8 {
    (v * 255.0).floor().clamp(0.0, 255.0) as u8
}

/// One vertex per triangulated track, coloured by the mean image intensity
/// at its observations.
pub fn cloud_vertices(state: &ReconstructionState, images: &[GrayImage]) -> Vec<Vertex> {
    state
        .tracks
        .iter()
        .filter(|t| t.status == TrackStatus::Triangulated)
        .filter_map(|t| {
            let p = t.point3d?;
            let samples: Vec<f64> = t
                .observations
                .iter()
                .filter_map(|&(img, kp)| {
                    let px = state.keypoints.get(img)?.get(kp)?;
                    Some(images.get(img)?.sample_bilinear(px.x, px.y))
                })
                .collect();
            let mean = if samples.is_empty() {
                0.0
            } else {
                samples.iter().sum::<f64>() / samples.len() as f64
            };
            Some(Vertex {
                position: p.to_array(),
                gray: intensity_to_u8(mean),
            })
        })
        .collect()
}

/// ASCII PLY with float positions and replicated gray as RGB.
pub fn write_ply<W: Write>(w: &mut W, vertices: &[Vertex]) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        vertices.len()
    )?;
    for v in vertices {
        let [x, y, z] = v.position.map(|c| c as f32);
        writeln!(w, "{x} {y} {z} {g} {g} {g}", g = v.gray)?;
    }
    Ok(())
}

pub fn export_ply(path: &Path, vertices: &[Vertex]) -> Result<()> {
    if vertices.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_ply(&mut w, vertices).and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub image: String,
    /// Row-major world-to-camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub center: [f64; 3],
    /// `null` when the view has no triangulated observations.
    pub mean_reproj_px: Option<f64>,
}

/// Registered views ordered by image name.
pub fn pose_records(state: &ReconstructionState, names: &[String]) -> Vec<PoseRecord> {
    let mut out: Vec<PoseRecord> = state
        .poses
        .iter()
        .map(|(&view, pose)| {
            let err = state.mean_view_error(view);
            PoseRecord {
                image: names.get(view).cloned().unwrap_or_else(|| view.to_string()),
                rotation: pose.rotation.matrix().to_row_major(),
                translation: pose.translation.to_array(),
                center: pose.center().to_array(),
                mean_reproj_px: err.is_finite().then_some(err),
            }
        })
        .collect();
    out.sort_by(|a, b| a.image.cmp(&b.image));
    out
}

pub fn export_poses(path: &Path, records: &[PoseRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::NoRegisteredViews);
    }
    let text = serde_json::to_string_pretty(records).expect("pose records serialize");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn export_keypoint_counts(path: &Path, names: &[String], counts: &[usize]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["image", "count"])?;
        for (name, n) in names.iter().zip(counts) {
            w.write_record([name.as_str(), &n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(csv_err(path))
}

pub fn export_match_stats(path: &Path, pairs: &[PairGeometry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["i", "j", "putative", "inliers"])?;
        for p in pairs {
            w.write_record([p.i, p.j, p.putative, p.inliers.len()].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(csv_err(path))
}

/// Per-view mean reprojection error before and after bundle adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprojRow {
    pub image: String,
    pub before_px: f64,
    pub after_px: f64,
}

/// Rows for every registered view in image order, taken from the last final
/// bundle adjustment. Views it did not cover, or all views when it never
/// ran, report the current error in both columns.
pub fn reproj_rows(state: &ReconstructionState, names: &[String]) -> Vec<ReprojRow> {
    let last = state.ba_runs.iter().rev().find(|r| r.kind == BAKind::Final);
    state
        .poses
        .keys()
        .map(|&view| {
            let from_ba = last.and_then(|r| {
                let k = r.views.iter().position(|&v| v == view)?;
                Some((r.report.per_view_before[k], r.report.per_view_after[k]))
            });
            let (before_px, after_px) = from_ba.unwrap_or_else(|| {
                let e = state.mean_view_error(view);
                (e, e)
            });
            ReprojRow {
                image: names.get(view).cloned().unwrap_or_else(|| view.to_string()),
                before_px,
                after_px,
            }
        })
        .collect()
}

pub fn export_reproj(path: &Path, rows: &[ReprojRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["image", "before_px", "after_px"])?;
        for r in rows {
            w.write_record([r.image.clone(), r.before_px.to_string(), r.after_px.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(csv_err(path))
}
