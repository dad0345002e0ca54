//! Pose and coordinate accuracy metrics.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{KdTree, Pose, TriangleMesh};
use crate::CoordinateMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} is undefined for an empty error list")]
    Empty(&'static str),
    #[error("threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("maps differ in size: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("the two masks do not overlap")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub add: f64,
    pub adds: f64,
    /// Geodesic rotation error in radians.
    pub rot_geodesic: f64,
    pub trans_l2: f64,
}

impl PoseErrorReport {
    pub fn new(mesh: &TriangleMesh, gt: &Pose, pred: &Pose) -> Self {
        Self {
            add: add_error(mesh, gt, pred),
            adds: adds_error(mesh, gt, pred),
            rot_geodesic: pred.rotation_error(gt),
            trans_l2: pred.translation_error(gt),
        }
    }

    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn add_or_adds(&self, symmetric: bool) -> f64 {
        if symmetric {
            self.adds
        } else {
            self.add
        }
    }
}

/// Mean distance between each vertex under the two poses.
pub fn add_error(mesh: &TriangleMesh, gt: &Pose, pred: &Pose) -> f64 {
    let v = mesh.vertices();
    v.iter().map(|p| (pred.transform(p) - gt.transform(p)).norm()).sum::<f64>() / v.len() as f64
}

/// Mean distance from each ground-truth-posed vertex to the nearest
/// prediction-posed vertex.
pub fn adds_error(mesh: &TriangleMesh, gt: &Pose, pred: &Pose) -> f64 {
    let gt_pts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|p| gt.transform(p)).collect();
    let pred_pts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|p| pred.transform(p)).collect();
    adds_points(&gt_pts, &pred_pts)
}

/// ADD-S core on already transformed point sets.
pub fn adds_points(gt: &[Vector3<f64>], pred: &[Vector3<f64>]) -> f64 {
    let tree = KdTree::new(pred);
    let dists: Vec<f64> = gt
        .par_iter()
        .map(|q| tree.nearest(q, None).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .collect();
    dists.iter().sum::<f64>() / gt.len() as f64
}

/// Share of errors strictly below `fraction · diameter`.
pub fn recall_at_threshold(errors: &[f64], diameter: f64, fraction: f64) -> Result<f64, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::Empty("recall"));
    }
    let limit = fraction * diameter;
    if !(limit > 0.0) || limit.is_nan() {
        return Err(MetricsError::Threshold(limit));
    }
    Ok(errors.iter().filter(|&&e| e < limit).count() as f64 / errors.len() as f64)
}

/// Area under recall(τ) for τ in `[0, max_threshold]`, normalized by
/// `max_threshold`.
///
/// recall(τ) counts errors `< τ`, so an error `e` contributes
/// `max(0, max_threshold − e)` to the integral. Non-finite errors contribute
/// nothing.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::Empty("AUC"));
    }
    if !(max_threshold > 0.0 && max_threshold.is_finite()) {
        return Err(MetricsError::Threshold(max_threshold));
    }
    let area: f64 = errors
        .iter()
        .map(|&e| if e.is_nan() { 0.0 } else { (max_threshold - e.max(0.0)).max(0.0) })
        .sum();
    Ok(area / (max_threshold * errors.len() as f64))
}

pub const DEFAULT_ACCURACY_FRACTIONS: [f64; 3] = [0.02, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateAccuracy {
    pub fractions: Vec<f64>,
    pub front: Vec<f64>,
    pub back: Vec<f64>,
    /// Pixels masked in both maps.
    pub pixels: usize,
}

/// Share of jointly masked pixels whose front (back) coordinate is within
/// `fraction · diameter` of the ground truth, per fraction.
pub fn coordinate_accuracy(
    pred: &CoordinateMap,
    gt: &CoordinateMap,
    diameter: f64,
    fractions: &[f64],
) -> Result<CoordinateAccuracy, MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch(pred.width(), pred.height(), gt.width(), gt.height()));
    }
    if let Some(&bad) = fractions.iter().find(|&&f| !(f * diameter > 0.0)) {
        return Err(MetricsError::Threshold(bad * diameter));
    }
    let joint: Vec<usize> = gt.masked_indices().filter(|&i| pred.is_masked(i)).collect();
    if joint.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    let front_err: Vec<f64> = joint.iter().map(|&i| (pred.front(i) - gt.front(i)).norm()).collect();
    let back_err: Vec<f64> = joint.iter().map(|&i| (pred.back(i) - gt.back(i)).norm()).collect();
    let share = |errs: &[f64], f: f64| errs.iter().filter(|&&e| e < f * diameter).count() as f64 / errs.len() as f64;
    Ok(CoordinateAccuracy {
        fractions: fractions.to_vec(),
        front: fractions.iter().map(|&f| share(&front_err, f)).collect(),
        back: fractions.iter().map(|&f| share(&back_err, f)).collect(),
        pixels: joint.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{kdtree::dist_sq, primitives};
    use nalgebra::{Matrix3, Rotation3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let r = Rotation3::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
        Pose::new(r.into_inner(), Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.3..1.0)))
            .unwrap()
    }

    fn brute_adds(gt: &[Vector3<f64>], pred: &[Vector3<f64>]) -> f64 {
        let mut sum = 0.0;
        for q in gt {
            sum += pred.iter().map(|p| dist_sq(q, p)).fold(f64::INFINITY, f64::min).sqrt();
        }
        sum / gt.len() as f64
    }

    #[test]
    fn add_examples() {
        let mesh = primitives::cube(0.1);
        let gt = random_pose(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(add_error(&mesh, &gt, &gt), 0.0);
        assert_eq!(adds_error(&mesh, &gt, &gt), 0.0);
        let delta = Vector3::new(0.003, -0.004, 0.0);
        let shifted = Pose { translation: gt.translation + delta, ..gt };
        assert!((add_error(&mesh, &gt, &shifted) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn half_turn_of_square_doubles_mean_radius() {
        let mesh = primitives::square(2.0f64.sqrt());
        let mean_radius =
            mesh.vertices().iter().map(|v| v.norm()).sum::<f64>() / mesh.vertices().len() as f64;
        assert!((mean_radius - 1.0).abs() < 1e-12);
        let gt = Pose::identity();
        let half = Pose { rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI).into_inner(), ..gt };
        assert!((add_error(&mesh, &gt, &half) - 2.0 * mean_radius).abs() < 1e-12);
        // the half turn maps the vertex set onto itself
        assert!(adds_error(&mesh, &gt, &half) < 1e-12);
    }

    #[test]
    fn ring_adds_bounded_by_chord() {
        for n in [16usize, 64, 256] {
            let ring: Vec<Vector3<f64>> = (0..n)
                .map(|i| {
                    let a = i as f64 / n as f64 * std::f64::consts::TAU;
                    Vector3::new(a.cos(), a.sin(), 0.0)
                })
                .collect();
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.37).into_inner();
            let rotated: Vec<_> = ring.iter().map(|p| rot * p).collect();
            let chord = 2.0 * (std::f64::consts::PI / n as f64).sin();
            let adds = adds_points(&ring, &rotated);
            assert_eq!(adds, brute_adds(&ring, &rotated));
            assert!(adds <= chord, "n={n} adds={adds} chord={chord}");
            assert!(adds <= chord / 2.0 + 1e-12);
        }
    }

    #[test]
    fn adds_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.random_range(2..500);
            let pts: Vec<Vector3<f64>> =
                (0..n).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect();
            let gt = random_pose(&mut rng);
            let pred = random_pose(&mut rng);
            let a: Vec<_> = pts.iter().map(|p| gt.transform(p)).collect();
            let b: Vec<_> = pts.iter().map(|p| pred.transform(p)).collect();
            assert_eq!(adds_points(&a, &b), brute_adds(&a, &b));
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_threshold(&[0.0, 0.0], 0.2, 0.1).unwrap(), 1.0);
        assert_eq!(recall_at_threshold(&[0.01, 0.03], 0.2, 0.1).unwrap(), 0.5);
        assert_eq!(recall_at_threshold(&[0.01, 3.0e6], 0.2, 1e9).unwrap(), 1.0);
        assert_eq!(recall_at_threshold(&[], 0.2, 0.1), Err(MetricsError::Empty("recall")));
        assert!(recall_at_threshold(&[0.1], 0.2, 0.0).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.0, 0.0, 0.0], 0.1).unwrap(), 1.0);
        assert_eq!(auc(&[0.1], 0.1).unwrap(), 0.0);
        assert_eq!(auc(&[0.05], 0.1).unwrap(), 0.5);
        assert_eq!(auc(&[f64::INFINITY, 0.0], 0.1).unwrap(), 0.5);
        assert!(auc(&[], 0.1).is_err());
        assert!(auc(&[0.0], 0.0).is_err());
    }

    /// Trapezoid-free oracle: integrate the recall step function on a fine grid.
    fn auc_grid(errors: &[f64], max: f64, steps: usize) -> f64 {
        let h = max / steps as f64;
        (0..steps)
            .map(|i| {
                let tau = (i as f64 + 0.5) * h;
                errors.iter().filter(|&&e| e < tau).count() as f64 / errors.len() as f64
            })
            .sum::<f64>()
            / steps as f64
    }

    #[test]
    fn auc_matches_grid_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let errs: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..0.15)).collect();
        assert!((auc(&errs, 0.1).unwrap() - auc_grid(&errs, 0.1, 200_000)).abs() < 1e-5);
    }

    fn filled_map(w: u32, h: u32, offset: Vector3<f64>) -> CoordinateMap {
        let mut m = CoordinateMap::new(w, h);
        for i in 0..(w * h) as usize {
            let p = Vector3::new(i as f64 * 0.001, 0.0, 0.0);
            m.set(i, &(p + offset), &(p + offset * 2.0));
        }
        m
    }

    #[test]
    fn coordinate_accuracy_examples() {
        let diameter = 0.25;
        let gt = filled_map(4, 3, Vector3::zeros());
        let same = coordinate_accuracy(&gt, &gt, diameter, &DEFAULT_ACCURACY_FRACTIONS).unwrap();
        assert_eq!(same.front, vec![1.0; 3]);
        assert_eq!(same.back, vec![1.0; 3]);
        let mut off = CoordinateMap::new(4, 3);
        let d = Vector3::new(0.0, 0.03 * diameter, 0.0);
        for i in gt.masked_indices() {
            off.set(i, &(gt.front(i) + d), &(gt.back(i) + d));
        }
        let acc = coordinate_accuracy(&off, &gt, diameter, &DEFAULT_ACCURACY_FRACTIONS).unwrap();
        assert_eq!(acc.front, vec![0.0, 1.0, 1.0]);
        assert_eq!(acc.back, vec![0.0, 1.0, 1.0]);
        assert_eq!(acc.pixels, 12);
        assert_eq!(
            coordinate_accuracy(&CoordinateMap::new(4, 3), &gt, diameter, &DEFAULT_ACCURACY_FRACTIONS),
            Err(MetricsError::NoOverlap)
        );
        assert!(coordinate_accuracy(&CoordinateMap::new(3, 3), &gt, diameter, &DEFAULT_ACCURACY_FRACTIONS).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn adds_never_exceeds_add(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mesh = primitives::icosphere(0.05, 1);
            let gt = random_pose(&mut rng);
            let pred = random_pose(&mut rng);
            prop_assert!(adds_error(&mesh, &gt, &pred) <= add_error(&mesh, &gt, &pred));
        }

        #[test]
        fn add_invariant_under_common_rigid_motion(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mesh = primitives::l_bracket(0.1, 0.04, 0.05);
            let gt = random_pose(&mut rng);
            let pred = random_pose(&mut rng);
            let g = random_pose(&mut rng);
            let a = add_error(&mesh, &gt, &pred);
            let b = add_error(&mesh, &g.compose(&gt), &g.compose(&pred));
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn auc_monotone_and_scale_covariant(
            errs in proptest::collection::vec(0.0f64..0.2, 1..40),
            shrink in 0.0f64..1.0,
            scale in 0.1f64..10.0,
        ) {
            let better: Vec<f64> = errs.iter().map(|e| e * shrink).collect();
            prop_assert!(auc(&better, 0.1).unwrap() >= auc(&errs, 0.1).unwrap() - 1e-12);
            let scaled: Vec<f64> = errs.iter().map(|e| e * scale).collect();
            prop_assert!((auc(&scaled, 0.1 * scale).unwrap() - auc(&errs, 0.1).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn accuracy_non_decreasing_in_fraction(seed in any::<u64>(), sigma in 0.0f64..0.05) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = filled_map(6, 5, Vector3::zeros());
            let mut pred = CoordinateMap::new(6, 5);
            for i in gt.masked_indices() {
                let n = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * sigma;
                pred.set(i, &(gt.front(i) + n), &(gt.back(i) - n));
            }
            let fr = [0.01, 0.02, 0.05, 0.1, 0.2];
            let acc = coordinate_accuracy(&pred, &gt, 0.2, &fr).unwrap();
            for w in acc.front.windows(2).chain(acc.back.windows(2)) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn report_fields() {
        let mesh = primitives::cube(0.1);
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 0.5));
        let pred = Pose { rotation: Matrix3::identity(), translation: Vector3::new(0.01, 0.0, 0.5) };
        let r = PoseErrorReport::new(&mesh, &gt, &pred);
        assert!((r.add - 0.01).abs() < 1e-15);
        assert!(r.adds <= r.add);
        assert_eq!(r.rot_geodesic, 0.0);
        assert!((r.trans_l2 - 0.01).abs() < 1e-15);
        assert_eq!(r.add_or_adds(false), r.add);
        assert_eq!(r.add_or_adds(true), r.adds);
    }
}
