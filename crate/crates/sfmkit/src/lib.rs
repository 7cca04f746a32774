//! Image loading, on-disk formats and the `sfmkit` command line around the
//! `no_std` reconstruction kernels in [`sfmkit_core`].

use std::path::{Path, PathBuf};

use sfmkit_core::pipeline::PipelineError;
use thiserror::Error;

pub mod cli;
pub mod config;
pub mod container;
pub mod export;
pub mod imageio;
pub mod stages;

pub use sfmkit_core as core;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: cannot decode image: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("no images found in {}", .0.display())]
    NoImages(PathBuf),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("reconstruction has no registered views")]
    NoRegisteredViews,
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}
