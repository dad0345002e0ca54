use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ExperimentConfig, ExperimentError, NoiseConfig};
use crate::geometry::{raycast_front_back, CameraIntrinsics, Pose, TriangleMesh};
use crate::CoordinateMap;

const MAX_ATTEMPTS: usize = 100;

/// Independent random streams used per scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedPurpose {
    Pose = 1,
    Noise = 2,
    Ransac = 3,
}

/// Seed for one purpose within one scene, mixed with SplitMix64 so nearby
/// inputs give unrelated streams.
pub fn derive_seed(master: u64, scene: usize, purpose: SeedPurpose) -> u64 {
    let mut z = master
        ^ (scene as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (purpose as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Haar-uniform rotation from a normalized 4D Gaussian.
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let q = Quaternion::new(q[0], q[1], q[2], q[3]);
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub index: usize,
    pub pose: Pose,
    pub map: CoordinateMap,
    /// Pose draws rejected before this one.
    pub rejected: usize,
}

/// Samples a pose for scene `index` and renders its clean coordinate map.
/// A draw is kept once every vertex is in front of the camera and at least
/// one pixel is covered.
pub fn generate_scene(
    cfg: &ExperimentConfig,
    mesh: &TriangleMesh,
    index: usize,
) -> Result<Scene, ExperimentError> {
    sample_scene(mesh, &cfg.camera, cfg.pose_sampler.min(), cfg.pose_sampler.max(), cfg.seed, index)
}

fn sample_scene(
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    seed: u64,
    index: usize,
) -> Result<Scene, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index, SeedPurpose::Pose));
    for attempt in 0..MAX_ATTEMPTS {
        let rotation = sample_rotation(&mut rng).to_rotation_matrix().into_inner();
        let translation = Vector3::from_fn(|i, _| if lo[i] < hi[i] { rng.random_range(lo[i]..=hi[i]) } else { lo[i] });
        let pose = Pose { rotation, translation };
        if mesh.vertices().iter().any(|v| pose.transform(v).z <= 1e-6) {
            continue;
        }
        let map = raycast_front_back(mesh, &pose, k);
        if map.masked_count() > 0 {
            return Ok(Scene { index, pose, map, rejected: attempt });
        }
    }
    Err(ExperimentError::Unrenderable { attempts: MAX_ATTEMPTS })
}

/// Surrogate prediction error. Each masked pixel independently becomes an
/// outlier with probability `outlier_rate`, in which case its front and back
/// points are redrawn uniformly from balls of radius
/// `outlier_scale · diameter` around the true points. Other pixels get
/// isotropic Gaussian noise of std-dev `coord_sigma · diameter` on front and
/// back independently. The mask is untouched, and zero noise returns an
/// identical map.
pub fn corrupt_map(map: &CoordinateMap, noise: &NoiseConfig, diameter: f64, seed: u64) -> CoordinateMap {
    let mut out = map.clone();
    if noise.is_zero() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = noise.coord_sigma * diameter;
    let radius = noise.outlier_scale * diameter;
    let indices: Vec<usize> = map.masked_indices().collect();
    for idx in indices {
        let (front, back) = (map.front(idx), map.back(idx));
        let outlier = noise.outlier_rate > 0.0 && rng.random_bool(noise.outlier_rate);
        let (f, b) = if outlier {
            (front + ball_sample(&mut rng, radius), back + ball_sample(&mut rng, radius))
        } else if sigma > 0.0 {
            (front + gaussian3(&mut rng) * sigma, back + gaussian3(&mut rng) * sigma)
        } else {
            (front, back)
        };
        out.set(idx, &f, &b);
    }
    out
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng))
}

fn ball_sample<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vector3<f64> {
    if radius == 0.0 {
        return Vector3::zeros();
    }
    let dir = loop {
        let g = gaussian3(rng);
        let n = g.norm();
        if n > 1e-12 {
            break g / n;
        }
    };
    dir * radius * rng.random::<f64>().cbrt()
}
