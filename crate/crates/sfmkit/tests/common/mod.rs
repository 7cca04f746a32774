//! Shared fixtures: rendered image directories and a strict reference PLY
//! reader that knows nothing about the writer.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sfmkit_testkit::{render_textured_cube, write_pgm, RenderedSet};

pub struct Fixture {
    pub root: tempfile::TempDir,
    pub images: PathBuf,
    pub intrinsics: PathBuf,
    /// TOML lowering the bootstrap inlier floor to suit the small renders.
    pub config: PathBuf,
    pub set: RenderedSet,
}

impl Fixture {
    pub fn out(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }
}

pub fn rendered_fixture(n_views: usize, width: usize, height: usize, arc_deg: f64, seed: u64) -> Fixture {
    let root = tempfile::tempdir().unwrap();
    let images = root.path().join("images");
    std::fs::create_dir_all(&images).unwrap();
    let set = render_textured_cube(n_views, width, height, arc_deg, seed);
    for (i, img) in set.images.iter().enumerate() {
        write_pgm(&images.join(format!("view_{i:03}.pgm")), width, height, img).unwrap();
    }
    let intrinsics = root.path().join("K.json");
    let [fx, fy, cx, cy] = set.k;
    std::fs::write(&intrinsics, format!(r#"{{"fx": {fx}, "fy": {fy}, "cx": {cx}, "cy": {cy}, "skew": 0}}"#)).unwrap();
    let config = root.path().join("run.toml");
    std::fs::write(&config, "[pipeline]\nmin_init_inliers = 30\n").unwrap();
    Fixture {
        root,
        images,
        intrinsics,
        config,
        set,
    }
}

pub fn args(fx: &Fixture, cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "sfmkit".to_string(),
        cmd.to_string(),
        "--images".into(),
        fx.images.display().to_string(),
        "--intrinsics".into(),
        fx.intrinsics.display().to_string(),
        "--out".into(),
        out.display().to_string(),
        "--config".into(),
        fx.config.display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyVertex {
    pub xyz: [f32; 3],
    pub rgb: [u8; 3],
}

/// Minimal ASCII PLY reader: one vertex element with float x/y/z followed by
/// uchar red/green/blue, nothing else.
pub fn parse_ply(text: &str) -> Result<Vec<PlyVertex>, String> {
    let mut lines = text.lines();
    let mut next = || lines.next().ok_or_else(|| "unexpected end of file".to_string());
    if next()? != "ply" {
        return Err("missing ply magic".into());
    }
    if next()? != "format ascii 1.0" {
        return Err("not ascii 1.0".into());
    }
    let count: usize = next()?
        .strip_prefix("element vertex ")
        .ok_or("missing vertex element")?
        .parse()
        .map_err(|e| format!("bad vertex count: {e}"))?;
    let expected = [
        ("float", "x"),
        ("float", "y"),
        ("float", "z"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
    ];
    for (ty, name) in expected {
        let line = next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts != ["property", ty, name] {
            return Err(format!("unexpected property line {line:?}"));
        }
    }
    if next()? != "end_header" {
        return Err("missing end_header".into());
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next()?;
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 6 {
            return Err(format!("vertex line has {} fields", f.len()));
        }
        let xyz = [0, 1, 2].map(|i| f[i].parse::<f32>());
        let rgb = [3, 4, 5].map(|i| f[i].parse::<u8>());
        let [Ok(x), Ok(y), Ok(z)] = xyz else {
            return Err(format!("bad coordinates in {line:?}"));
        };
        let [Ok(r), Ok(g), Ok(b)] = rgb else {
            return Err(format!("bad colour in {line:?}"));
        };
        out.push(PlyVertex {
            xyz: [x, y, z],
            rgb: [r, g, b],
        });
    }
    if lines.next().is_some() {
        return Err("trailing data after vertices".into());
    }
    Ok(out)
}

pub const ARTIFACTS: [&str; 5] = ["cloud.ply", "poses.json", "keypoints_per_image.csv", "matches.csv", "reproj_error.csv"];
