//! Reading image directories into grayscale buffers.

use std::path::{Path, PathBuf};

use image::DynamicImage;
use rayon::prelude::*;
use sfmkit_core::image::GrayImage;

use crate::{io_err, Error, Result};

const EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// Image files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if ok && path.is_file() {
            out.push(path);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if out.is_empty() {
        return Err(Error::NoImages(dir.to_path_buf()));
    }
    Ok(out)
}

pub fn image_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Decodes PNG or binary/ASCII PNM into intensities in `[0, 1]`.
///
/// 8-bit gray is scaled by 1/255 exactly; colour goes through the luma
/// weights of [`GrayImage::from_rgb8`]; 16-bit gray is scaled by 1/65535.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let img = image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = match img {
        DynamicImage::ImageLuma8(buf) => GrayImage::from_luma8(w, h, buf.as_raw()),
        DynamicImage::ImageLuma16(buf) => {
            GrayImage::from_raw(w, h, buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect())
        }
        other => GrayImage::from_rgb8(w, h, other.to_rgb8().as_raw()),
    };
    gray.map_err(|e| crate::format_err(path, e.to_string()))
}

/// A named, ordered image set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub names: Vec<String>,
    pub images: Vec<GrayImage>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Dataset> {
        let paths = list_images(dir)?;
        let images = paths.par_iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            names: paths.iter().map(|p| image_name(p)).collect(),
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(data);
    std::fs::write(path, bytes).map_err(io_err(path))
}
