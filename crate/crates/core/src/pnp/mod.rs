//! Pose from 2D-3D correspondences: EPnP plus a RANSAC loop that draws at
//! most one 3D point per pixel in every minimal sample.

mod epnp;
mod ransac;

pub use epnp::epnp_solve;
pub use ransac::{
    ransac_pnp, ransac_pnp_traced, reprojection_errors, IterationTrace, PoseEstimate, RansacConfig, ScoreSources,
    Scoring,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnpError {
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("{points} points but {pixels} pixels")]
    LengthMismatch { points: usize, pixels: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("every candidate solution places points behind the camera")]
    BehindCamera,
    #[error("need at least {needed} distinct pixels, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no iteration produced a pose")]
    NoPose,
    #[error("invalid RANSAC configuration: {0}")]
    Config(String),
}
