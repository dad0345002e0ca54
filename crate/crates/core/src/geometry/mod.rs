//! Meshes, the pinhole camera, front/back surface rendering and
//! nearest-neighbour statistics.

mod camera;
pub(crate) mod kdtree;
mod mesh;
pub mod primitives;
mod render;

pub use camera::{nearest_rotation, project, rotation_angle, CameraIntrinsics, Pose};
pub use kdtree::{avg_nn_distance, KdTree};
pub use mesh::{load_mesh, parse_obj, parse_ply, TriangleMesh};
pub use render::{intersect_triangle, raycast_front_back, render_front_back, SurfaceRender};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("mesh has no {0}")]
    EmptyMesh(&'static str),
    #[error("triangle {triangle} references vertex {index}, mesh has {count} vertices")]
    IndexOutOfRange { triangle: usize, index: usize, count: usize },
    #[error("mesh diameter is zero")]
    ZeroDiameter,
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("need at least {needed} points, got {got}")]
    Degenerate { needed: usize, got: usize },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (deviation {0:e})")]
    NotARotation(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
