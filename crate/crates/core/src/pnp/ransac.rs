use nalgebra::{Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{epnp_solve, PnpError};
use crate::correspondence::{CorrespondenceSet, GroupIndex, Source};
use crate::geometry::{CameraIntrinsics, Pose};

/// How candidate poses are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Most inliers under the threshold; ties go to the lower mean inlier error.
    #[default]
    Inliers,
    /// Lowest mean error with each record's error capped at the threshold.
    MeanError,
}

/// Which records are reprojected when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSources {
    /// Front and back surface points only; interior points only feed samples.
    #[default]
    FrontBack,
    All,
}

impl ScoreSources {
    fn includes(self, source: Source) -> bool {
        self == ScoreSources::All || source != Source::Mid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier threshold in pixels.
    pub threshold: f64,
    pub sample_size: usize,
    pub seed: u64,
    /// Re-solve on the winner's inliers.
    pub refine: bool,
    pub scoring: Scoring,
    pub score_sources: ScoreSources,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            threshold: 2.0,
            sample_size: 4,
            seed: 0,
            refine: true,
            scoring: Scoring::Inliers,
            score_sources: ScoreSources::FrontBack,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), PnpError> {
        if self.iterations == 0 {
            return Err(PnpError::Config("iterations must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(PnpError::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.sample_size < 4 {
            return Err(PnpError::Config(format!("sample size must be at least 4, got {}", self.sample_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub inlier_count: usize,
    /// Mean reprojection error of the inliers in pixels (infinite when
    /// there are none).
    pub mean_inlier_error: f64,
    pub iterations_used: usize,
}

/// What one RANSAC iteration drew and how its pose scored.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub groups: Vec<u32>,
    pub records: Vec<usize>,
    /// `None` when the minimal solve failed.
    pub inliers: Option<usize>,
}

/// Pixel distance between each record's projected point and its pixel.
/// Points at or behind the camera get `+∞`.
pub fn reprojection_errors(pose: &Pose, set: &CorrespondenceSet, k: &CameraIntrinsics) -> Vec<f64> {
    set.records().iter().map(|r| reprojection_error(pose, &r.point, &r.pixel, k)).collect()
}

#[inline]
fn reprojection_error(pose: &Pose, point: &Vector3<f64>, pixel: &Vector2<f64>, k: &CameraIntrinsics) -> f64 {
    match k.project_camera(&pose.transform(point)) {
        Some(p) => (p - pixel).norm(),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy)]
struct Score {
    inliers: usize,
    mean_inlier_error: f64,
    truncated_mean: f64,
}

impl Score {
    fn better_than(&self, other: &Score, scoring: Scoring) -> bool {
        match scoring {
            Scoring::Inliers => {
                self.inliers > other.inliers
                    || (self.inliers == other.inliers && self.mean_inlier_error < other.mean_inlier_error)
            }
            Scoring::MeanError => {
                self.truncated_mean < other.truncated_mean
                    || (self.truncated_mean == other.truncated_mean && self.inliers > other.inliers)
            }
        }
    }
}

struct Scorer<'a> {
    set: &'a CorrespondenceSet,
    scored: Vec<usize>,
    k: &'a CameraIntrinsics,
    threshold: f64,
}

impl Scorer<'_> {
    fn score(&self, pose: &Pose) -> Score {
        let mut inliers = 0usize;
        let mut inlier_sum = 0.0;
        let mut truncated = 0.0;
        for &i in &self.scored {
            let r = &self.set.records()[i];
            let e = reprojection_error(pose, &r.point, &r.pixel, self.k);
            if e < self.threshold {
                inliers += 1;
                inlier_sum += e;
                truncated += e;
            } else {
                truncated += self.threshold;
            }
        }
        Score {
            inliers,
            mean_inlier_error: if inliers > 0 { inlier_sum / inliers as f64 } else { f64::INFINITY },
            truncated_mean: if self.scored.is_empty() { f64::INFINITY } else { truncated / self.scored.len() as f64 },
        }
    }

    /// Inliers among all records, scored or not.
    fn inliers(&self, pose: &Pose) -> Vec<usize> {
        (0..self.set.len())
            .filter(|&i| {
                let r = &self.set.records()[i];
                reprojection_error(pose, &r.point, &r.pixel, self.k) < self.threshold
            })
            .collect()
    }
}

struct Candidate {
    pose: Pose,
    score: Score,
}

/// RANSAC-PnP where every minimal sample takes distinct pixels (groups) and
/// one record from each. Deterministic for a given seed regardless of thread
/// count: iteration `i` draws from its own ChaCha stream and the reduction
/// runs in iteration order.
pub fn ransac_pnp(set: &CorrespondenceSet, k: &CameraIntrinsics, cfg: &RansacConfig) -> Result<PoseEstimate, PnpError> {
    run(set, k, cfg, false).map(|(e, _)| e)
}

/// [`ransac_pnp`] that also returns what every iteration sampled.
pub fn ransac_pnp_traced(
    set: &CorrespondenceSet,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<(PoseEstimate, Vec<IterationTrace>), PnpError> {
    run(set, k, cfg, true)
}

fn run(
    set: &CorrespondenceSet,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
    trace: bool,
) -> Result<(PoseEstimate, Vec<IterationTrace>), PnpError> {
    cfg.validate()?;
    let groups = GroupIndex::new(set.records());
    if groups.len() < cfg.sample_size {
        return Err(PnpError::InsufficientData { needed: cfg.sample_size, got: groups.len() });
    }
    let scorer = Scorer {
        set,
        scored: (0..set.len()).filter(|&i| cfg.score_sources.includes(set.records()[i].source)).collect(),
        k,
        threshold: cfg.threshold,
    };

    let results: Vec<(Option<Candidate>, Option<IterationTrace>)> = (0..cfg.iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(it as u64);
            let picked = sample(&mut rng, groups.len(), cfg.sample_size).into_vec();
            let mut ids = Vec::with_capacity(cfg.sample_size);
            let mut records = Vec::with_capacity(cfg.sample_size);
            for &g in &picked {
                let members = groups.members(g);
                records.push(members[rng.random_range(0..members.len())]);
                ids.push(groups.id(g));
            }
            for (a, id) in ids.iter().enumerate() {
                assert!(!ids[..a].contains(id), "sample reused pixel group {id}");
            }
            let points: Vec<Vector3<f64>> = records.iter().map(|&i| set.records()[i].point).collect();
            let pixels: Vec<Vector2<f64>> = records.iter().map(|&i| set.records()[i].pixel).collect();
            let cand = epnp_solve(&points, &pixels, k)
                .ok()
                .map(|pose| Candidate { pose, score: scorer.score(&pose) });
            let tr = trace.then(|| IterationTrace {
                groups: ids,
                records,
                inliers: cand.as_ref().map(|c| c.score.inliers),
            });
            (cand, tr)
        })
        .collect();

    let mut best: Option<Candidate> = None;
    let mut traces = Vec::new();
    for (cand, tr) in results {
        if let Some(tr) = tr {
            traces.push(tr);
        }
        if let Some(c) = cand {
            if best.as_ref().is_none_or(|b| c.score.better_than(&b.score, cfg.scoring)) {
                best = Some(c);
            }
        }
    }
    let mut best = best.ok_or(PnpError::NoPose)?;

    if cfg.refine {
        for _ in 0..5 {
            let inliers = scorer.inliers(&best.pose);
            if inliers.len() < cfg.sample_size.max(4) {
                break;
            }
            let points: Vec<Vector3<f64>> = inliers.iter().map(|&i| set.records()[i].point).collect();
            let pixels: Vec<Vector2<f64>> = inliers.iter().map(|&i| set.records()[i].pixel).collect();
            let Ok(pose) = epnp_solve(&points, &pixels, k) else { break };
            let refit = Candidate { pose, score: scorer.score(&pose) };
            if best.score.better_than(&refit.score, cfg.scoring) {
                break;
            }
            let improved = refit.score.better_than(&best.score, cfg.scoring);
            best = refit;
            if !improved {
                break;
            }
        }
    }

    Ok((
        PoseEstimate {
            pose: best.pose,
            inlier_count: best.score.inliers,
            mean_inlier_error: best.score.mean_inlier_error,
            iterations_used: cfg.iterations,
        },
        traces,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Correspondence;
    use crate::geometry::project;
    use nalgebra::Rotation3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 64.0, 64.0, 128, 128).unwrap()
    }

    /// Groups of three collinear-in-depth points sharing a pixel, projected
    /// exactly under `pose`.
    fn synthetic_set(pose: &Pose, n: usize) -> CorrespondenceSet {
        let mut recs = Vec::new();
        for g in 0..n {
            let a = g as f64 * 0.9;
            let front = Vector3::new(0.04 * a.sin(), 0.04 * (1.7 * a).cos(), 0.03 * (0.3 * a).sin());
            let pixel = project(&front, pose, &k()).unwrap();
            let inv = pose.inverse();
            let cam = pose.transform(&front);
            for (s, f) in [(Source::Front, 1.0), (Source::Mid, 1.05), (Source::Back, 1.1)] {
                recs.push(Correspondence { pixel, point: inv.transform(&(cam * f)), source: s, group: g as u32 });
            }
        }
        CorrespondenceSet::new(recs)
    }

    fn pose() -> Pose {
        Pose::new(Rotation3::from_euler_angles(0.3, 0.8, -0.2).into_inner(), Vector3::new(0.01, 0.0, 0.5)).unwrap()
    }

    #[test]
    fn defaults() {
        let c = RansacConfig::default();
        assert_eq!((c.iterations, c.threshold, c.sample_size, c.refine), (150, 2.0, 4, true));
        assert!(RansacConfig { sample_size: 3, ..c }.validate().is_err());
        assert!(RansacConfig { iterations: 0, ..c }.validate().is_err());
        assert!(RansacConfig { threshold: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn reprojection_error_examples() {
        let p = pose();
        let set = synthetic_set(&p, 10);
        assert!(reprojection_errors(&p, &set, &k()).iter().all(|&e| e < 1e-9));
        let shifted = Pose { translation: p.translation + Vector3::new(1.0, 0.0, 0.0), ..p };
        let at_one = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let rec = Correspondence {
            pixel: Vector2::new(64.0, 64.0),
            point: Vector3::zeros(),
            source: Source::Front,
            group: 0,
        };
        let single = CorrespondenceSet::new(vec![rec]);
        let moved = Pose { translation: at_one.translation + Vector3::new(1.0, 0.0, 0.0), ..at_one };
        assert!((reprojection_errors(&moved, &single, &k())[0] - 500.0).abs() < 1e-9);
        assert!(reprojection_errors(&shifted, &set, &k()).iter().all(|&e| e > 100.0));
        let behind = Pose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(reprojection_errors(&behind, &single, &k())[0], f64::INFINITY);
        assert!(reprojection_errors(&p, &CorrespondenceSet::default(), &k()).is_empty());
    }

    #[test]
    fn recovers_pose_from_exact_groups() {
        let truth = pose();
        let set = synthetic_set(&truth, 60);
        for refine in [false, true] {
            let cfg = RansacConfig { refine, seed: 3, ..Default::default() };
            let est = ransac_pnp(&set, &k(), &cfg).unwrap();
            assert!(est.pose.rotation_error(&truth) < 1e-6);
            assert_eq!(est.inlier_count, 120);
            assert_eq!(est.iterations_used, 150);
        }
    }

    #[test]
    fn insufficient_groups() {
        let set = synthetic_set(&pose(), 3);
        let err = ransac_pnp(&set, &k(), &RansacConfig::default()).unwrap_err();
        assert_eq!(err, PnpError::InsufficientData { needed: 4, got: 3 });
    }

    #[test]
    fn samples_never_share_a_pixel() {
        let set = synthetic_set(&pose(), 8);
        let cfg = RansacConfig { iterations: 2000, sample_size: 6, ..Default::default() };
        let (_, traces) = ransac_pnp_traced(&set, &k(), &cfg).unwrap();
        assert_eq!(traces.len(), 2000);
        for t in &traces {
            let mut g = t.groups.clone();
            g.sort_unstable();
            g.dedup();
            assert_eq!(g.len(), 6);
            for (&r, &gid) in t.records.iter().zip(&t.groups) {
                assert_eq!(set.records()[r].group, gid);
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let set = synthetic_set(&pose(), 40);
        let cfg = RansacConfig { iterations: 1, seed: 42, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| ransac_pnp(&set, &k(), &cfg).unwrap());
        let b = many.install(|| ransac_pnp(&set, &k(), &cfg).unwrap());
        let c = ransac_pnp(&set, &k(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let cfg = RansacConfig { iterations: 150, seed: 42, ..Default::default() };
        let a = one.install(|| ransac_pnp(&set, &k(), &cfg).unwrap());
        let b = many.install(|| ransac_pnp(&set, &k(), &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn mean_error_scoring_also_recovers() {
        let truth = pose();
        let set = synthetic_set(&truth, 30);
        let cfg = RansacConfig { scoring: Scoring::MeanError, score_sources: ScoreSources::All, ..Default::default() };
        let est = ransac_pnp(&set, &k(), &cfg).unwrap();
        assert!(est.pose.rotation_error(&truth) < 1e-6);
        assert_eq!(est.inlier_count, 90);
    }
}
