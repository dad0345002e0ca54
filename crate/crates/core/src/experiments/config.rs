use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::correspondence::{BuildOptions, Mode};
use crate::geometry::{load_mesh, primitives, CameraIntrinsics, TriangleMesh};
use crate::loss::LossConfig;
use crate::pnp::RansacConfig;

/// Object poses: rotation uniform over SO(3), translation uniform in an
/// axis-aligned box (meters, camera frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSampler {
    pub translation_min: [f64; 3],
    pub translation_max: [f64; 3],
}

impl Default for PoseSampler {
    fn default() -> Self {
        Self { translation_min: [-0.02, -0.02, 0.45], translation_max: [0.02, 0.02, 0.65] }
    }
}

impl PoseSampler {
    pub fn min(&self) -> Vector3<f64> {
        Vector3::from(self.translation_min)
    }

    pub fn max(&self) -> Vector3<f64> {
        Vector3::from(self.translation_max)
    }
}

/// Corruption applied to rendered maps. Lengths are fractions of the object
/// diameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std-dev of the isotropic Gaussian added to every front and back point.
    pub coord_sigma: f64,
    /// Probability that a pixel's coordinates are replaced by an outlier.
    pub outlier_rate: f64,
    /// Radius of the ball around the true point that outliers are drawn from.
    pub outlier_scale: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.coord_sigma == 0.0 && self.outlier_rate == 0.0
    }
}

fn default_modes() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

fn default_auc_max() -> f64 {
    0.10
}

fn default_recall_fraction() -> f64 {
    0.10
}

fn default_scenes() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// OBJ or ASCII PLY path (relative paths resolve against the config
    /// file), or `builtin:cube`, `builtin:icosphere`, `builtin:l_bracket`.
    pub mesh_path: String,
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub pose_sampler: PoseSampler,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_scenes")]
    pub scenes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ransac: RansacConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub correspondence: BuildOptions,
    /// Score with ADD-S instead of ADD.
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default = "default_recall_fraction")]
    pub recall_fraction: f64,
    /// Upper end of the AUC threshold range in meters.
    #[serde(default = "default_auc_max")]
    pub auc_max_threshold: f64,
    /// Also write per-mode recall curves as SVG.
    #[serde(default)]
    pub svg: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Small default setup around a built-in mesh.
    pub fn builtin(mesh: &str) -> Self {
        Self {
            mesh_path: format!("builtin:{mesh}"),
            camera: CameraIntrinsics::new(320.0, 320.0, 64.0, 64.0, 128, 128).expect("valid camera"),
            pose_sampler: PoseSampler::default(),
            noise: NoiseConfig::default(),
            modes: default_modes(),
            scenes: default_scenes(),
            seed: 0,
            ransac: RansacConfig::default(),
            loss: LossConfig::default(),
            correspondence: BuildOptions::default(),
            symmetric: false,
            recall_fraction: default_recall_fraction(),
            auc_max_threshold: default_auc_max(),
            svg: false,
            base_dir: None,
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: Self = serde_json::from_str(text)
            .map_err(|source| ExperimentError::Json { path: path.to_path_buf(), source })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.camera.validate()?;
        if self.scenes == 0 {
            return bad("scenes must be at least 1".into());
        }
        if self.modes.is_empty() {
            return bad("modes must not be empty".into());
        }
        let n = &self.noise;
        for (name, v) in [("coord_sigma", n.coord_sigma), ("outlier_rate", n.outlier_rate), ("outlier_scale", n.outlier_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("noise.{name} must be a finite value >= 0, got {v}"));
            }
        }
        if n.outlier_rate > 1.0 {
            return bad(format!("noise.outlier_rate must be <= 1, got {}", n.outlier_rate));
        }
        let (lo, hi) = (self.pose_sampler.min(), self.pose_sampler.max());
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) || (0..3).any(|i| lo[i] > hi[i]) {
            return bad("pose_sampler.translation_min must be <= translation_max component-wise".into());
        }
        if !(self.recall_fraction > 0.0 && self.recall_fraction.is_finite()) {
            return bad(format!("recall_fraction must be > 0, got {}", self.recall_fraction));
        }
        if !(self.auc_max_threshold > 0.0 && self.auc_max_threshold.is_finite()) {
            return bad(format!("auc_max_threshold must be > 0, got {}", self.auc_max_threshold));
        }
        self.ransac.validate()?;
        self.loss.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn load_mesh(&self) -> Result<TriangleMesh, ExperimentError> {
        resolve_mesh(&self.mesh_path, self.base_dir.as_deref())
    }
}

/// Loads `spec` as a built-in name or a mesh file.
pub fn resolve_mesh(spec: &str, base_dir: Option<&Path>) -> Result<TriangleMesh, ExperimentError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return match name {
            "cube" => Ok(primitives::cube(0.1)),
            "icosphere" => Ok(primitives::icosphere(0.05, 2)),
            "l_bracket" => Ok(primitives::l_bracket(0.1, 0.04, 0.05)),
            _ => Err(ExperimentError::Config(format!(
                "unknown built-in mesh `{name}` (expected cube, icosphere or l_bracket)"
            ))),
        };
    }
    let path = Path::new(spec);
    let path = match base_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    Ok(load_mesh(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mesh_path": "builtin:cube",
        "camera": {"fx": 320, "fy": 320, "cx": 64, "cy": 64, "width": 128, "height": 128}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL, Path::new("cfg.json")).unwrap();
        assert_eq!(cfg.modes, Mode::ALL.to_vec());
        assert_eq!(cfg.ransac.iterations, 150);
        assert_eq!(cfg.ransac.threshold, 2.0);
        assert_eq!(cfg.loss, LossConfig::default());
        assert_eq!(cfg.scenes, 20);
        assert!(cfg.noise.is_zero());
        assert_eq!(cfg.load_mesh().unwrap().vertices().len(), 8);
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ExperimentConfig::builtin("l_bracket");
        cfg.noise = NoiseConfig { coord_sigma: 0.02, outlier_rate: 0.1, outlier_scale: 0.5 };
        cfg.modes = vec![Mode::Bfu, Mode::F];
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text, Path::new("x.json")).unwrap();
        assert_eq!(back.noise, cfg.noise);
        assert_eq!(back.modes, cfg.modes);
        assert_eq!(back.camera, cfg.camera);
    }

    #[test]
    fn rejects_bad_values() {
        let with = |patch: &str| {
            let text = MINIMAL.trim_end().trim_end_matches('}').to_string() + "," + patch + "}";
            ExperimentConfig::from_json(&text, Path::new("c.json"))
        };
        assert!(with(r#""scenes": 0"#).is_err());
        assert!(with(r#""modes": []"#).is_err());
        assert!(with(r#""modes": ["fb"]"#).is_err());
        assert!(with(r#""noise": {"coord_sigma": -0.1}"#).is_err());
        assert!(with(r#""noise": {"outlier_rate": 1.5}"#).is_err());
        assert!(with(r#""ransac": {"sample_size": 3}"#).is_err());
        assert!(with(r#""mystery": 1"#).is_err());
        assert!(with(r#""scenes": 3"#).is_ok());
        let teapot = ExperimentConfig::from_json(&MINIMAL.replace("cube", "teapot"), Path::new("c.json")).unwrap();
        assert!(teapot.load_mesh().is_err());
    }

    #[test]
    fn relative_mesh_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tri.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let text = MINIMAL.replace("builtin:cube", "tri.obj");
        let path = dir.path().join("cfg.json");
        fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.load_mesh().unwrap().triangles().len(), 1);
    }
}
