//! Length-prefixed little-endian containers for the intermediate products of
//! the `detect` and `match` stages.
//!
//! Both files start with a 4-byte magic and a `u32` version. Floats are
//! stored with their exact bit patterns so a staged run sees the same inputs
//! as a single-shot one.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sfmkit_core::matching::FundamentalMatrix;
use sfmkit_core::pipeline::{ImageFeatures, PairGeometry};
use sfmkit_core::sift::{Descriptor, DESCRIPTOR_LEN};
use sfmkit_core::{Mat3, Vec2};

use crate::{format_err, io_err, Result};

pub const FEATURES_MAGIC: [u8; 4] = *b"SFKF";
pub const MATCHES_MAGIC: [u8; 4] = *b"SFKM";
pub const VERSION: u32 = 1;

/// Upper bound on any length prefix, to fail fast on corrupt files.
const MAX_LEN: u32 = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub names: Vec<String>,
    pub features: Vec<ImageFeatures>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub num_images: usize,
    pub pairs: Vec<PairGeometry>,
}

fn write_len<W: Write>(w: &mut W, n: usize) -> std::io::Result<()> {
    let n = u32::try_from(n).map_err(|_| std::io::Error::other("length exceeds u32"))?;
    w.write_u32::<LE>(n)
}

fn read_len<R: Read>(r: &mut R) -> std::io::Result<usize> {
    let n = r.read_u32::<LE>()?;
    if n > MAX_LEN {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "implausible length prefix"));
    }
    Ok(n as usize)
}

fn read_header<R: Read>(r: &mut R, magic: [u8; 4], path: &Path) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(io_err(path))?;
    if got != magic {
        return Err(format_err(path, format!("bad magic {got:?}")));
    }
    let version = r.read_u32::<LE>().map_err(io_err(path))?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn encode_features<W: Write>(w: &mut W, set: &FeatureSet) -> std::io::Result<()> {
    w.write_all(&FEATURES_MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    write_len(w, set.names.len())?;
    for (name, f) in set.names.iter().zip(&set.features) {
        write_len(w, name.len())?;
        w.write_all(name.as_bytes())?;
        write_len(w, f.keypoints.len())?;
        for kp in &f.keypoints {
            w.write_f64::<LE>(kp.x)?;
            w.write_f64::<LE>(kp.y)?;
        }
        for d in &f.descriptors {
            for v in d.values() {
                w.write_f32::<LE>(*v)?;
            }
        }
    }
    Ok(())
}

pub fn decode_features<R: Read>(r: &mut R) -> std::io::Result<FeatureSet> {
    let n = read_len(r)?;
    let mut set = FeatureSet {
        names: Vec::with_capacity(n),
        features: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let mut name = vec![0u8; read_len(r)?];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let count = read_len(r)?;
        let mut keypoints = Vec::with_capacity(count);
        for _ in 0..count {
            keypoints.push(Vec2::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?));
        }
        let mut descriptors = Vec::with_capacity(count);
        for _ in 0..count {
            let mut d = [0f32; DESCRIPTOR_LEN];
            r.read_f32_into::<LE>(&mut d)?;
            descriptors.push(Descriptor(d));
        }
        set.names.push(name);
        set.features.push(ImageFeatures { keypoints, descriptors });
    }
    Ok(set)
}

pub fn encode_matches<W: Write>(w: &mut W, set: &MatchSet) -> std::io::Result<()> {
    w.write_all(&MATCHES_MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    write_len(w, set.num_images)?;
    write_len(w, set.pairs.len())?;
    for p in &set.pairs {
        for v in [p.i, p.j, p.ratio_passed, p.putative] {
            write_len(w, v)?;
        }
        match &p.fundamental {
            Some(f) => {
                w.write_u8(1)?;
                for v in f.matrix().to_row_major() {
                    w.write_f64::<LE>(v)?;
                }
            }
            None => w.write_u8(0)?,
        }
        write_len(w, p.inliers.len())?;
        for &(a, b) in &p.inliers {
            write_len(w, a)?;
            write_len(w, b)?;
        }
    }
    Ok(())
}

pub fn decode_matches<R: Read>(r: &mut R) -> std::io::Result<MatchSet> {
    let num_images = read_len(r)?;
    let n = read_len(r)?;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, j, ratio_passed, putative) = (read_len(r)?, read_len(r)?, read_len(r)?, read_len(r)?);
        let fundamental = match r.read_u8()? {
            0 => None,
            _ => {
                let mut m = [0f64; 9];
                r.read_f64_into::<LE>(&mut m)?;
                Some(FundamentalMatrix::from_canonical(Mat3::from_slice(&m)))
            }
        };
        let count = read_len(r)?;
        let mut inliers = Vec::with_capacity(count);
        for _ in 0..count {
            inliers.push((read_len(r)?, read_len(r)?));
        }
        pairs.push(PairGeometry {
            i,
            j,
            ratio_passed,
            putative,
            inliers,
            fundamental,
        });
    }
    Ok(MatchSet { num_images, pairs })
}

pub fn write_features(path: &Path, set: &FeatureSet) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    encode_features(&mut w, set).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    read_header(&mut r, FEATURES_MAGIC, path)?;
    decode_features(&mut r).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_matches(path: &Path, set: &MatchSet) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    encode_matches(&mut w, set).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_matches(path: &Path) -> Result<MatchSet> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    read_header(&mut r, MATCHES_MAGIC, path)?;
    let set = decode_matches(&mut r).map_err(|e| format_err(path, e.to_string()))?;
    if let Some(p) = set.pairs.iter().find(|p| p.i >= p.j || p.j >= set.num_images) {
        return Err(format_err(path, format!("invalid pair ({}, {})", p.i, p.j)));
    }
    Ok(set)
}
