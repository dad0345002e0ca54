//! Non-neural core of hierarchical-continuous-coordinate 6D pose estimation.
//!
//! - [`codec`]: hierarchical binary and continuous coordinate codes.
//! - [`loss`]: error-histogram level weighting and the training loss terms.
//! - [`geometry`]: meshes, pinhole camera, front/back ray casting, k-d tree.
//! - [`correspondence`]: front / back / both / ultra-dense 2D-3D sets.
//! - [`pnp`]: EPnP and RANSAC with one 3D point per pixel per sample.
//! - [`metrics`]: ADD, ADD-S, recall, AUC and coordinate accuracy.
//! - [`experiments`]: synthetic scenes, noise model, ablation harness, file formats.

pub mod codec;
pub mod correspondence;
pub mod experiments;
pub mod coordinate_map;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod pnp;

pub use coordinate_map::CoordinateMap;
