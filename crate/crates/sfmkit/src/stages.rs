//! Parallel detection and matching, and persistence of the reconstruction
//! state between runs.

use std::path::Path;

use rayon::prelude::*;
use sfmkit_core::image::GrayImage;
use sfmkit_core::pipeline::{match_pair, ImageFeatures, PairGeometry, PipelineConfig, PipelineError, ReconstructionState};
use sfmkit_core::sift::{detect_features, SiftParams};

use crate::{format_err, io_err, Result};

/// SIFT on every image, in parallel, results in input order.
pub fn detect(images: &[GrayImage], params: &SiftParams) -> std::result::Result<Vec<ImageFeatures>, PipelineError> {
    images
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            detect_features(img, params)
                .map(|f| ImageFeatures::from_sift(&f))
                .map_err(|source| PipelineError::Features { index, source })
        })
        .collect()
}

/// All pairs `i < j` in lexicographic order, matched in parallel. Equal to the
/// sequential `match_all_pairs` for any thread count.
pub fn match_all(features: &[ImageFeatures], cfg: &PipelineConfig) -> Vec<PairGeometry> {
    let n = features.len();
    let keys: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    keys.par_iter()
        .map(|&(i, j)| {
            let p = match_pair(i, j, &features[i], &features[j], cfg);
            log::debug!("pair ({i}, {j}): putative={} inliers={}", p.putative, p.inliers.len());
            p
        })
        .collect()
}

pub fn save_state(path: &Path, state: &ReconstructionState) -> Result<()> {
    let text = ron::ser::to_string_pretty(state, ron::ser::PrettyConfig::default())
        .map_err(|e| format_err(path, e.to_string()))?;
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_state(path: &Path) -> Result<ReconstructionState> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    ron::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}
