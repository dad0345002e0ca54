//! Synthetic experiments: scene generation, a noise model standing in for
//! network predictions, the correspondence-mode ablation, report writers
//! and the binary file formats.

mod ablation;
mod config;
pub mod io;
mod report;
mod scene;

pub use ablation::{aggregate, run_ablation, AblationReport, AblationRow, SceneResult};
pub use config::{resolve_mesh, ExperimentConfig, NoiseConfig, PoseSampler};
pub use report::{codec_inspect, loss_demo, LossSchedule};
pub use scene::{corrupt_map, derive_seed, generate_scene, sample_rotation, Scene, SeedPurpose};

use std::path::PathBuf;

use thiserror::Error;

use crate::correspondence::CorrespondenceError;
use crate::geometry::GeometryError;
use crate::metrics::MetricsError;
use crate::pnp::PnpError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no renderable pose after {attempts} attempts (object empty in view or behind the camera)")]
    Unrenderable { attempts: usize },
    #[error(transparent)]
    Correspondence(#[from] CorrespondenceError),
    #[error(transparent)]
    Pnp(#[from] PnpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Format(#[from] io::FormatError),
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.into(), source }
    }
}
