//! Run configuration: intrinsics files, TOML/JSON config files and the
//! merged settings a CLI invocation runs with.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfmkit_core::pipeline::PipelineConfig;
use sfmkit_core::two_view::CameraIntrinsics;

use crate::{format_err, io_err, Error, Result};

/// On-disk intrinsics, `{"fx": .., "fy": .., "cx": .., "cy": .., "skew": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let k: IntrinsicsFile = serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
    CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.skew).map_err(|e| format_err(path, e.to_string()))
}

pub fn save_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    let file = IntrinsicsFile {
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        skew: k.skew,
    };
    let text = serde_json::to_string_pretty(&file).expect("intrinsics serialize");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Contents of a `--config` file. Every key is optional; command-line flags
/// take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub images: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub pipeline: PipelineConfig,
}

impl ConfigFile {
    /// Parses TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|m| format_err(path, m))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub image_dir: Option<PathBuf>,
    pub intrinsics_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub pipeline: PipelineConfig,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub log_level: Option<String>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.pipeline.validate()?;
        Ok(())
    }

    /// A rayon pool sized by `threads`.
    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("K.json");
        let k = CameraIntrinsics::new(1520.4, 1525.9, 302.32, 246.87, 0.0).unwrap();
        save_intrinsics(&path, &k).unwrap();
        assert_eq!(load_intrinsics(&path).unwrap(), k);
    }

    #[test]
    fn skew_defaults_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("K.json");
        std::fs::write(&path, r#"{"fx": 800, "fy": 800, "cx": 320, "cy": 240}"#).unwrap();
        assert_eq!(load_intrinsics(&path).unwrap().skew, 0.0);
    }

    #[test]
    fn invalid_intrinsics_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("K.json");
        std::fs::write(&path, r#"{"fx": -1, "fy": 800, "cx": 320, "cy": 240}"#).unwrap();
        assert!(matches!(load_intrinsics(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "threads = 2\n[pipeline]\nratio = 0.8\n[pipeline.sift]\ncontrast_threshold = 0.03\n").unwrap();
        let cfg = ConfigFile::load(&path).unwrap();
        assert_eq!(cfg.threads, Some(2));
        assert_eq!(cfg.pipeline.ratio, 0.8);
        assert_eq!(cfg.pipeline.sift.contrast_threshold, 0.03);
        assert_eq!(cfg.pipeline.max_reproj_px, PipelineConfig::default().max_reproj_px);
    }

    #[test]
    fn json_config_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 5, "pipeline": {"local_ba_interval": 4}}"#).unwrap();
        let cfg = ConfigFile::load(&path).unwrap();
        assert_eq!((cfg.seed, cfg.pipeline.local_ba_interval), (Some(5), 4));
        std::fs::write(&path, r#"{"sed": 5}"#).unwrap();
        assert!(ConfigFile::load(&path).is_err());
    }
}
