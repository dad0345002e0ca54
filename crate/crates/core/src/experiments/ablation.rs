use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{corrupt_map, derive_seed, generate_scene, SeedPurpose};
use super::{ExperimentConfig, ExperimentError};
use crate::correspondence::{build_correspondences, Mode};
use crate::geometry::{Pose, TriangleMesh};
use crate::metrics::{auc, coordinate_accuracy, recall_at_threshold, PoseErrorReport, DEFAULT_ACCURACY_FRACTIONS};
use crate::pnp::{ransac_pnp, RansacConfig};

/// Outcome of one mode on one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub scene: usize,
    pub mode: Mode,
    /// Failure message; `None` on success.
    pub error: Option<String>,
    pub correspondences: usize,
    pub inliers: usize,
    pub gt_pose: Option<Pose>,
    pub pred_pose: Option<Pose>,
    pub errors: Option<PoseErrorReport>,
}

impl SceneResult {
    pub fn succeeded(&self) -> bool {
        self.errors.is_some()
    }
}

/// Per-mode aggregate. Rotation and translation statistics cover successful
/// scenes only; recall and AUC count failed scenes as wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub scenes: usize,
    pub failures: usize,
    #[serde(with = "nan_as_null")]
    pub median_rot_rad: f64,
    #[serde(with = "nan_as_null")]
    pub mean_rot_rad: f64,
    #[serde(with = "nan_as_null")]
    pub median_trans_m: f64,
    #[serde(with = "nan_as_null")]
    pub mean_trans_m: f64,
    /// ADD (or ADD-S for symmetric objects) recall at
    /// `recall_fraction · diameter`.
    pub add_recall: f64,
    pub auc: f64,
}

/// Statistics over zero successful scenes are NaN, written as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Coordinate accuracy of the corrupted map against the clean render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub scene: usize,
    pub masked_pixels: usize,
    pub front: Vec<f64>,
    pub back: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: ExperimentConfig,
    pub diameter: f64,
    pub accuracy_fractions: Vec<f64>,
    pub rows: Vec<AblationRow>,
    pub noise: Vec<NoiseLevel>,
    pub results: Vec<SceneResult>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Aggregates per-scene results into one row per mode, in `modes` order.
pub fn aggregate(
    results: &[SceneResult],
    modes: &[Mode],
    diameter: f64,
    symmetric: bool,
    recall_fraction: f64,
    auc_max_threshold: f64,
) -> Result<Vec<AblationRow>, ExperimentError> {
    modes
        .iter()
        .map(|&mode| {
            let mine: Vec<&SceneResult> = results.iter().filter(|r| r.mode == mode).collect();
            let ok: Vec<&PoseErrorReport> = mine.iter().filter_map(|r| r.errors.as_ref()).collect();
            let mut rot: Vec<f64> = ok.iter().map(|e| e.rot_geodesic).collect();
            let mut trans: Vec<f64> = ok.iter().map(|e| e.trans_l2).collect();
            let pose_err: Vec<f64> = mine
                .iter()
                .map(|r| r.errors.as_ref().map_or(f64::INFINITY, |e| e.add_or_adds(symmetric)))
                .collect();
            Ok(AblationRow {
                mode,
                scenes: mine.len(),
                failures: mine.len() - ok.len(),
                mean_rot_rad: mean(&rot),
                median_rot_rad: median(&mut rot),
                mean_trans_m: mean(&trans),
                median_trans_m: median(&mut trans),
                add_recall: recall_at_threshold(&pose_err, diameter, recall_fraction)?,
                auc: auc(&pose_err, auc_max_threshold)?,
            })
        })
        .collect()
}

fn solve_mode(
    cfg: &ExperimentConfig,
    mesh: &TriangleMesh,
    map: &crate::CoordinateMap,
    gt: &Pose,
    mode: Mode,
    ransac: &RansacConfig,
) -> Result<(usize, usize, Pose, PoseErrorReport), ExperimentError> {
    let set = build_correspondences(map, mode, &cfg.correspondence)?;
    let est = ransac_pnp(&set, &cfg.camera, ransac)?;
    Ok((set.len(), est.inlier_count, est.pose, PoseErrorReport::new(mesh, gt, &est.pose)))
}

/// Runs every configured mode on every scene. Scene-level problems are
/// recorded as failures in the results; only configuration and mesh errors
/// abort.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport, ExperimentError> {
    cfg.validate()?;
    let mesh = cfg.load_mesh()?;
    let diameter = mesh.diameter();

    let per_scene: Vec<(Vec<SceneResult>, Option<NoiseLevel>)> = (0..cfg.scenes)
        .into_par_iter()
        .map(|i| {
            let scene = match generate_scene(cfg, &mesh, i) {
                Ok(s) => s,
                Err(e) => {
                    let failed = cfg
                        .modes
                        .iter()
                        .map(|&mode| SceneResult {
                            scene: i,
                            mode,
                            error: Some(e.to_string()),
                            correspondences: 0,
                            inliers: 0,
                            gt_pose: None,
                            pred_pose: None,
                            errors: None,
                        })
                        .collect();
                    return (failed, None);
                }
            };
            let noisy = corrupt_map(&scene.map, &cfg.noise, diameter, derive_seed(cfg.seed, i, SeedPurpose::Noise));
            let noise = coordinate_accuracy(&noisy, &scene.map, diameter, &DEFAULT_ACCURACY_FRACTIONS)
                .ok()
                .map(|acc| NoiseLevel { scene: i, masked_pixels: acc.pixels, front: acc.front, back: acc.back });
            let ransac = RansacConfig { seed: derive_seed(cfg.seed, i, SeedPurpose::Ransac), ..cfg.ransac };
            let results = cfg
                .modes
                .iter()
                .map(|&mode| match solve_mode(cfg, &mesh, &noisy, &scene.pose, mode, &ransac) {
                    Ok((correspondences, inliers, pred, errors)) => SceneResult {
                        scene: i,
                        mode,
                        error: None,
                        correspondences,
                        inliers,
                        gt_pose: Some(scene.pose),
                        pred_pose: Some(pred),
                        errors: Some(errors),
                    },
                    Err(e) => SceneResult {
                        scene: i,
                        mode,
                        error: Some(e.to_string()),
                        correspondences: 0,
                        inliers: 0,
                        gt_pose: Some(scene.pose),
                        pred_pose: None,
                        errors: None,
                    },
                })
                .collect();
            (results, noise)
        })
        .collect();

    let mut results = Vec::with_capacity(cfg.scenes * cfg.modes.len());
    let mut noise = Vec::with_capacity(cfg.scenes);
    for (r, n) in per_scene {
        results.extend(r);
        noise.extend(n);
    }
    let rows = aggregate(&results, &cfg.modes, diameter, cfg.symmetric, cfg.recall_fraction, cfg.auc_max_threshold)?;
    Ok(AblationReport {
        config: cfg.clone(),
        diameter,
        accuracy_fractions: DEFAULT_ACCURACY_FRACTIONS.to_vec(),
        rows,
        noise,
        results,
    })
}

impl AblationReport {
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Recall against the ADD(-S) threshold over `[0, auc_max_threshold]`,
    /// one polyline per mode.
    pub fn recall_svg(&self) -> String {
        const W: f64 = 480.0;
        const H: f64 = 320.0;
        const PAD: f64 = 40.0;
        const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
        let max = self.config.auc_max_threshold;
        let sx = |t: f64| PAD + t / max * (W - 2.0 * PAD);
        let sy = |r: f64| H - PAD - r * (H - 2.0 * PAD);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
            H - PAD,
            W - PAD
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">threshold (m), max {max}</text>"#, W / 2.0, H - 8.0);
        let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">recall</text>"#, H / 2.0, H / 2.0);
        for (k, row) in self.rows.iter().enumerate() {
            let mut errs: Vec<f64> = self
                .results
                .iter()
                .filter(|r| r.mode == row.mode)
                .map(|r| r.errors.as_ref().map_or(f64::INFINITY, |e| e.add_or_adds(self.config.symmetric)))
                .collect();
            errs.sort_by(f64::total_cmp);
            let n = errs.len().max(1) as f64;
            let mut d = format!("M{:.2} {:.2}", sx(0.0), sy(0.0));
            let mut below = 0usize;
            for e in errs.iter().filter(|&&e| e < max) {
                let _ = write!(d, " H{:.2}", sx(*e));
                below += 1;
                let _ = write!(d, " V{:.2}", sy(below as f64 / n));
            }
            let _ = write!(d, " H{:.2}", sx(max));
            let color = COLORS[k % COLORS.len()];
            let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{} (AUC {:.3})</text>"#,
                W - PAD - 90.0,
                PAD + 14.0 * (k as f64 + 1.0),
                row.mode,
                row.auc
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes `ablation.csv`, `ablation.json` and, when enabled,
    /// `ablation_recall.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        let mut files = vec![
            (dir.join("ablation.csv"), self.to_csv()?),
            (dir.join("ablation.json"), self.to_json()),
        ];
        if self.config.svg {
            files.push((dir.join("ablation_recall.svg"), self.recall_svg()));
        }
        for (path, text) in &files {
            fs::write(path, text).map_err(|e| ExperimentError::io(path, e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}
