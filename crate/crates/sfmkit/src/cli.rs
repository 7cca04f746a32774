//! The `sfmkit` command line.
//!
//! Stage commands communicate through files in the output directory:
//! `detect` writes `features.bin`, `match` writes `matches.bin`,
//! `reconstruct` writes `state.ron` plus every artifact, and `export` /
//! `report` regenerate artifacts from those files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sfmkit_core::pipeline::{reconstruct, ReconstructionState};

use crate::config::{load_intrinsics, ConfigFile, RunConfig};
use crate::container::{read_features, read_matches, write_features, write_matches, FeatureSet, MatchSet};
use crate::export::{self, cloud_vertices, pose_records, reproj_rows};
use crate::imageio::Dataset;
use crate::stages::{detect, load_state, match_all, save_state};
use crate::{Error, Result};

pub const FEATURES_FILE: &str = "features.bin";
pub const MATCHES_FILE: &str = "matches.bin";
pub const STATE_FILE: &str = "state.ron";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sfmkit", version, about = "Incremental structure from motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect SIFT features (features.bin, keypoints_per_image.csv).
    Detect(Opts),
    /// Match all image pairs from features.bin (matches.bin, matches.csv).
    Match(Opts),
    /// Run the full pipeline and write every artifact.
    Reconstruct {
        #[command(flatten)]
        opts: Opts,
        /// Reuse features.bin, matches.bin and state.ron found in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Write cloud.ply and poses.json from state.ron.
    Export(Opts),
    /// Write the CSV diagnostics from the stage files.
    Report(Opts),
}

#[derive(Debug, Clone, Default, Args)]
struct Opts {
    /// Directory of PNG/PGM images, processed in file-name order.
    #[arg(long)]
    images: Option<PathBuf>,
    /// JSON file with fx, fy, cx, cy and optional skew.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for detection and matching (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Lowe ratio for descriptor matching.
    #[arg(long)]
    ratio: Option<f64>,
    /// Epipolar RANSAC inlier threshold in pixels
    #[arg(long = "ransac-thresh-px")]
    ransac_thresh_px: Option<f64>,
    /// Minimum triangulation angle in degrees
    #[arg(long = "min-tri-angle-deg")]
    min_tri_angle_deg: Option<f64>,
    /// Maximum reprojection error for accepted points and PnP inliers
    #[arg(long = "max-reproj-px")]
    max_reproj_px: Option<f64>,
    /// Run bundle adjustment after every this many registered views
    #[arg(long = "local-ba-interval")]
    local_ba_interval: Option<usize>,
    /// TOML (or .json) file with defaults for any of the above and a
    /// [pipeline] table.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failure of a CLI invocation, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Fatal(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Fatal(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Fatal(e) => write!(f, "error: {e}"),
        }
    }
}

fn usage<T>(msg: impl Into<String>) -> std::result::Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn resolve(opts: &Opts) -> std::result::Result<RunConfig, CliError> {
    let file = match &opts.config {
        Some(p) if !p.is_file() => return usage(format!("config file {} not found", p.display())),
        Some(p) => ConfigFile::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ConfigFile::default(),
    };
    let mut pipeline = file.pipeline;
    if let Some(s) = opts.seed.or(file.seed) {
        pipeline.ransac.rng_seed = s;
    }
    if let Some(r) = opts.ratio {
        pipeline.ratio = r;
    }
    if let Some(t) = opts.ransac_thresh_px {
        pipeline.ransac.inlier_threshold_px = t;
    }
    if let Some(a) = opts.min_tri_angle_deg {
        pipeline.min_triangulation_angle_deg = a;
    }
    if let Some(m) = opts.max_reproj_px {
        pipeline.max_reproj_px = m;
    }
    if let Some(n) = opts.local_ba_interval {
        pipeline.local_ba_interval = n;
    }
    let Some(output_dir) = opts.out.clone().or(file.out) else {
        return usage("--out is required");
    };
    let cfg = RunConfig {
        image_dir: opts.images.clone().or(file.images),
        intrinsics_file: opts.intrinsics.clone().or(file.intrinsics),
        output_dir,
        pipeline,
        threads: opts.threads.or(file.threads),
        log_level: file.log_level,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn image_dir(cfg: &RunConfig) -> std::result::Result<&Path, CliError> {
    match cfg.image_dir.as_deref() {
        None => usage("--images is required"),
        Some(d) if !d.is_dir() => usage(format!("image directory {} not found", d.display())),
        Some(d) => Ok(d),
    }
}

fn intrinsics_file(cfg: &RunConfig) -> std::result::Result<&Path, CliError> {
    match cfg.intrinsics_file.as_deref() {
        None => usage("--intrinsics is required"),
        Some(p) if !p.is_file() => usage(format!("intrinsics file {} not found", p.display())),
        Some(p) => Ok(p),
    }
}

/// Input stage file that a command cannot run without.
fn stage_file(cfg: &RunConfig, name: &str, producer: &str) -> std::result::Result<PathBuf, CliError> {
    let p = cfg.output_dir.join(name);
    if !p.is_file() {
        return usage(format!("{} not found; run `sfmkit {producer}` first", p.display()));
    }
    Ok(p)
}

fn create_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(crate::io_err(&cfg.output_dir))
}

fn detect_stage(cfg: &RunConfig, data: &Dataset) -> Result<FeatureSet> {
    let features = detect(&data.images, &cfg.pipeline.sift)?;
    for (name, f) in data.names.iter().zip(&features) {
        log::info!("{name}: {} keypoints", f.keypoints.len());
    }
    let set = FeatureSet {
        names: data.names.clone(),
        features,
    };
    write_features(&cfg.output_dir.join(FEATURES_FILE), &set)?;
    let counts: Vec<usize> = set.features.iter().map(|f| f.keypoints.len()).collect();
    export::export_keypoint_counts(&cfg.output_dir.join(export::KEYPOINTS_CSV), &set.names, &counts)?;
    Ok(set)
}

fn match_stage(cfg: &RunConfig, feats: &FeatureSet) -> Result<MatchSet> {
    let set = MatchSet {
        num_images: feats.features.len(),
        pairs: match_all(&feats.features, &cfg.pipeline),
    };
    write_matches(&cfg.output_dir.join(MATCHES_FILE), &set)?;
    export::export_match_stats(&cfg.output_dir.join(export::MATCHES_CSV), &set.pairs)?;
    Ok(set)
}

fn export_artifacts(cfg: &RunConfig, state: &ReconstructionState, names: &[String], data: &Dataset) -> Result<()> {
    let out = &cfg.output_dir;
    export::export_ply(&out.join(export::CLOUD_FILE), &cloud_vertices(state, &data.images))?;
    export::export_poses(&out.join(export::POSES_FILE), &pose_records(state, names))?;
    Ok(())
}

fn report_artifacts(cfg: &RunConfig, state: &ReconstructionState, feats: &FeatureSet, matches: &MatchSet) -> Result<()> {
    let out = &cfg.output_dir;
    let counts: Vec<usize> = feats.features.iter().map(|f| f.keypoints.len()).collect();
    export::export_keypoint_counts(&out.join(export::KEYPOINTS_CSV), &feats.names, &counts)?;
    export::export_match_stats(&out.join(export::MATCHES_CSV), &matches.pairs)?;
    export::export_reproj(&out.join(export::REPROJ_CSV), &reproj_rows(state, &feats.names))?;
    Ok(())
}

fn check_names(feats: &FeatureSet, data: &Dataset) -> Result<()> {
    if feats.names != data.names {
        return Err(Error::Config(format!(
            "{FEATURES_FILE} lists {} images that do not match the image directory ({} images)",
            feats.names.len(),
            data.names.len()
        )));
    }
    Ok(())
}

fn run_reconstruct(cfg: &RunConfig, resume: bool) -> std::result::Result<(), CliError> {
    let dir = image_dir(cfg)?;
    let k = load_intrinsics(intrinsics_file(cfg)?).map_err(|e| CliError::Usage(e.to_string()))?;
    create_out(cfg)?;
    let data = Dataset::load(dir)?;
    let existing = |name: &str| Some(cfg.output_dir.join(name)).filter(|p| resume && p.is_file());

    let feats = match existing(FEATURES_FILE) {
        Some(p) => {
            let f = read_features(&p)?;
            check_names(&f, &data)?;
            log::info!("resumed features for {} images", f.names.len());
            f
        }
        None => detect_stage(cfg, &data)?,
    };
    let matches = match existing(MATCHES_FILE) {
        Some(p) => read_matches(&p)?,
        None => match_stage(cfg, &feats)?,
    };
    let state = match existing(STATE_FILE) {
        Some(p) => load_state(&p)?,
        None => {
            let keypoints = feats.features.iter().map(|f| f.keypoints.clone()).collect();
            ReconstructionState::new(k, keypoints, matches.pairs.clone())
        }
    };
    let state = reconstruct(state, &cfg.pipeline).map_err(Error::from)?;
    log::info!(
        "registered {}/{} views, {} points",
        state.registered.len(),
        state.num_images(),
        state.triangulated_count()
    );
    save_state(&cfg.output_dir.join(STATE_FILE), &state)?;
    export_artifacts(cfg, &state, &feats.names, &data)?;
    report_artifacts(cfg, &state, &feats, &matches)?;
    Ok(())
}

fn dispatch(command: Command) -> std::result::Result<(), CliError> {
    let (opts, resume) = match &command {
        Command::Reconstruct { opts, resume } => (opts, *resume),
        Command::Detect(o) | Command::Match(o) | Command::Export(o) | Command::Report(o) => (o, false),
    };
    let cfg = resolve(opts)?;
    init_logging(cfg.log_level.as_deref());
    let pool = cfg.thread_pool()?;
    pool.install(|| match command {
        Command::Detect(_) => {
            let dir = image_dir(&cfg)?;
            create_out(&cfg)?;
            detect_stage(&cfg, &Dataset::load(dir)?)?;
            Ok(())
        }
        Command::Match(_) => {
            let feats = read_features(&stage_file(&cfg, FEATURES_FILE, "detect")?)?;
            match_stage(&cfg, &feats)?;
            Ok(())
        }
        Command::Reconstruct { .. } => run_reconstruct(&cfg, resume),
        Command::Export(_) => {
            let dir = image_dir(&cfg)?;
            let state = load_state(&stage_file(&cfg, STATE_FILE, "reconstruct")?)?;
            let feats = read_features(&stage_file(&cfg, FEATURES_FILE, "detect")?)?;
            let data = Dataset::load(dir)?;
            check_names(&feats, &data)?;
            export_artifacts(&cfg, &state, &feats.names, &data)?;
            Ok(())
        }
        Command::Report(_) => {
            let state = load_state(&stage_file(&cfg, STATE_FILE, "reconstruct")?)?;
            let feats = read_features(&stage_file(&cfg, FEATURES_FILE, "detect")?)?;
            let matches = read_matches(&stage_file(&cfg, MATCHES_FILE, "match")?)?;
            report_artifacts(&cfg, &state, &feats, &matches)?;
            Ok(())
        }
    })
}

/// Installs the logger once. `SFMKIT_LOG` overrides the configured level.
fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or("SFMKIT_LOG", level.unwrap_or("info"));
    let _ = env_logger::Builder::from_env(env).format_target(false).try_init();
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on a pipeline or IO failure, 2 on
/// a usage error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Fatal(_) => EXIT_FAILURE,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(out: &Path) -> Opts {
        Opts {
            out: Some(out.to_path_buf()),
            ..Opts::default()
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 3\nthreads = 2\n[pipeline]\nratio = 0.6\nmax_reproj_px = 2.0\n").unwrap();
        let mut o = opts(dir.path());
        o.config = Some(path);
        o.ratio = Some(0.7);
        let cfg = resolve(&o).unwrap();
        assert_eq!(cfg.pipeline.ratio, 0.7);
        assert_eq!(cfg.pipeline.max_reproj_px, 2.0);
        assert_eq!(cfg.pipeline.ransac.rng_seed, 3);
        assert_eq!(cfg.threads, Some(2));
    }

    #[test]
    fn zero_threads_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = opts(dir.path());
        o.threads = Some(0);
        assert!(matches!(resolve(&o), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_out_is_usage_error() {
        assert!(matches!(resolve(&Opts::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_subcommand_exits_2() {
        assert_eq!(run_cli(["sfmkit", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run_cli(["sfmkit"]), EXIT_USAGE);
    }
}
