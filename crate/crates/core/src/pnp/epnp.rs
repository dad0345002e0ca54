//! EPnP: express each 3D point as a barycentric combination of four control
//! points, recover the control points in the camera frame from the null
//! space of a `2n × 12` system, fix the scale from inter-control-point
//! distances and align with an orthogonal Procrustes step.
//!
//! Point sets that are (numerically) planar make the fourth control point
//! collapse, so those are handled by a plane-induced homography instead. In
//! the borderline band both solvers run and the lower reprojection error
//! wins.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, SymmetricEigen, Vector2, Vector3};

use super::PnpError;
use crate::geometry::{nearest_rotation, CameraIntrinsics, Pose};

type Matrix12 = SMatrix<f64, 12, 12>;
type Vector12 = SVector<f64, 12>;
type Matrix6x10 = SMatrix<f64, 6, 10>;
type Vector6 = SVector<f64, 6>;

/// `sqrt(λ_min / λ_max)` of the point covariance below which the set is
/// treated as planar.
const PLANAR_RATIO: f64 = 1e-5;
/// Above `PLANAR_RATIO` but below this, the homography solver runs as well.
const NEAR_PLANAR_RATIO: f64 = 0.05;
/// `sqrt(λ_mid / λ_max)` below which points are considered collinear.
const COLLINEAR_RATIO: f64 = 1e-7;
const GAUSS_NEWTON_STEPS: usize = 5;
const REFINE_STEPS: usize = 20;
const POLISH_ALL_MAX_POINTS: usize = 64;

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Camera pose from at least four 2D-3D correspondences.
///
/// `pixels[i]` is the observed image position of model point `points[i]`.
pub fn epnp_solve(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
) -> Result<Pose, PnpError> {
    let n = points.len();
    if n != pixels.len() {
        return Err(PnpError::LengthMismatch { points: n, pixels: pixels.len() });
    }
    if n < 4 {
        return Err(PnpError::InsufficientPoints { needed: 4, got: n });
    }
    let normalized: Vec<Vector2<f64>> = pixels.iter().map(|p| k.normalize(p)).collect();

    let centroid = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let (vals, axes) = sorted_eigen3(&cov);
    if !(vals[0] > 0.0) || !vals[0].is_finite() {
        return Err(PnpError::Degenerate("all 3D points coincide"));
    }
    let ratio = |v: f64| (v.max(0.0) / vals[0]).sqrt();
    if ratio(vals[1]) < COLLINEAR_RATIO {
        return Err(PnpError::Degenerate("3D points are collinear"));
    }
    let flatness = ratio(vals[2]);

    let mut candidates: Vec<Pose> = Vec::with_capacity(4);
    if flatness >= PLANAR_RATIO {
        candidates.extend(control_point_candidates(points, &normalized, &centroid, &vals, &axes));
    }
    if flatness < NEAR_PLANAR_RATIO {
        candidates.extend(planar_candidate(points, &normalized, &centroid, &axes));
    }
    if candidates.is_empty() {
        return Err(PnpError::Degenerate("rank-deficient linear system"));
    }

    let mut best: Option<(f64, Pose)> = None;
    let mut saw_behind = false;
    // Small sets polish every candidate since the linearized guesses rank
    // poorly there; large sets only polish the winner.
    let polish_all = n <= POLISH_ALL_MAX_POINTS;
    for pose in candidates {
        let pose = if polish_all { refine_pose(pose, points, &normalized) } else { pose };
        match reprojection_rms(&pose, points, &normalized) {
            Some(err) => {
                if best.as_ref().is_none_or(|(e, _)| err < *e) {
                    best = Some((err, pose));
                }
            }
            None => saw_behind = true,
        }
    }
    match best {
        Some((_, pose)) if polish_all => Ok(pose),
        Some((_, pose)) => Ok(refine_pose(pose, points, &normalized)),
        None if saw_behind => Err(PnpError::BehindCamera),
        None => Err(PnpError::Degenerate("no finite solution")),
    }
}

/// Eigen-decomposition of a symmetric 3×3 matrix, eigenvalues descending.
fn sorted_eigen3(m: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let axes = Matrix3::from_columns(&order.map(|i| eig.eigenvectors.column(i).into_owned()));
    (vals, axes)
}

/// Normalized-coordinate RMS reprojection error; `None` if any point ends up
/// at or behind the camera or the pose is not finite.
fn reprojection_rms(pose: &Pose, points: &[Vector3<f64>], normalized: &[Vector2<f64>]) -> Option<f64> {
    if !pose.is_finite() {
        return None;
    }
    let mut sum = 0.0;
    for (p, m) in points.iter().zip(normalized) {
        let c = pose.transform(p);
        if c.z <= 1e-9 {
            return None;
        }
        sum += (Vector2::new(c.x / c.z, c.y / c.z) - m).norm_squared();
    }
    Some((sum / points.len() as f64).sqrt())
}

/// Levenberg-Marquardt on the normalized reprojection error. Returns the
/// input unchanged if it cannot be improved.
fn refine_pose(pose: Pose, points: &[Vector3<f64>], normalized: &[Vector2<f64>]) -> Pose {
    let cost = |p: &Pose| reprojection_rms(p, points, normalized);
    let Some(mut best) = cost(&pose) else { return pose };
    let mut pose = pose;
    let mut lambda = 1e-3;
    for _ in 0..REFINE_STEPS {
        if best < 1e-15 {
            break;
        }
        let mut upper = [0.0f64; 21];
        let mut jtr = SVector::<f64, 6>::zeros();
        for (p, m) in points.iter().zip(normalized) {
            let rp = pose.rotation * p;
            let c = rp + pose.translation;
            let iz = 1.0 / c.z;
            let (u, v) = (c.x * iz, c.y * iz);
            // d(u, v)/dc; the rotation part is rp × g for a left-multiplied
            // increment exp(ω)·R
            let gu = Vector3::new(iz, 0.0, -u * iz);
            let gv = Vector3::new(0.0, iz, -v * iz);
            let (ru, rv) = (rp.cross(&gu), rp.cross(&gv));
            let ju = [ru.x, ru.y, ru.z, gu.x, gu.y, gu.z];
            let jv = [rv.x, rv.y, rv.z, gv.x, gv.y, gv.z];
            let (eu, ev) = (u - m.x, v - m.y);
            let mut k = 0;
            for r in 0..6 {
                jtr[r] += ju[r] * eu + jv[r] * ev;
                for c in r..6 {
                    upper[k] += ju[r] * ju[c] + jv[r] * jv[c];
                    k += 1;
                }
            }
        }
        let mut jtj = SMatrix::<f64, 6, 6>::zeros();
        let mut k = 0;
        for r in 0..6 {
            for c in r..6 {
                jtj[(r, c)] = upper[k];
                jtj[(c, r)] = upper[k];
                k += 1;
            }
        }
        let mut improved = false;
        let mut converged = false;
        for _ in 0..5 {
            let mut damped = jtj;
            for d in 0..6 {
                damped[(d, d)] += lambda * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let omega = Vector3::new(step[0], step[1], step[2]);
            let rot = nalgebra::Rotation3::new(omega).into_inner() * pose.rotation;
            let trial = Pose { rotation: nearest_rotation(&rot), translation: pose.translation + Vector3::new(step[3], step[4], step[5]) };
            match cost(&trial) {
                Some(c) if c < best => {
                    converged = best - c <= 1e-6 * best;
                    best = c;
                    pose = trial;
                    lambda = (lambda * 0.1).max(1e-12);
                    improved = true;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved || converged {
            break;
        }
    }
    pose
}

/// Rigid transform taking `model` onto `camera` in the least-squares sense.
fn procrustes(model: &[Vector3<f64>], camera: &[Vector3<f64>]) -> Pose {
    let n = model.len() as f64;
    let cw = model.iter().sum::<Vector3<f64>>() / n;
    let cc = camera.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (w, c) in model.iter().zip(camera) {
        h += (c - cc) * (w - cw).transpose();
    }
    let rotation = nearest_rotation(&h);
    Pose { rotation, translation: cc - rotation * cw }
}

fn control_point_candidates(
    points: &[Vector3<f64>],
    normalized: &[Vector2<f64>],
    centroid: &Vector3<f64>,
    vals: &[f64; 3],
    axes: &Matrix3<f64>,
) -> Vec<Pose> {
    let mut control = [*centroid; 4];
    for j in 0..3 {
        control[j + 1] = centroid + axes.column(j) * vals[j].sqrt();
    }
    let basis = Matrix3::from_columns(&[
        control[1] - control[0],
        control[2] - control[0],
        control[3] - control[0],
    ]);
    let Some(basis_inv) = basis.try_inverse() else {
        return Vec::new();
    };
    let alphas: Vec<[f64; 4]> = points
        .iter()
        .map(|p| {
            let c = basis_inv * (p - control[0]);
            [1.0 - c.x - c.y - c.z, c.x, c.y, c.z]
        })
        .collect();

    // MᵀM = Σ (a aᵀ) ⊗ B with B = [[1, 0, −u], [0, 1, −v], [−u, −v, u² + v²]],
    // so only four weighted sums of a aᵀ are needed.
    let mut sums = [[[0.0f64; 4]; 4]; 4];
    for (a, m) in alphas.iter().zip(normalized) {
        let w = [1.0, m.x, m.y, m.x * m.x + m.y * m.y];
        for j in 0..4 {
            for k in j..4 {
                let ajk = a[j] * a[k];
                for (s, wi) in sums.iter_mut().zip(w) {
                    s[j][k] += ajk * wi;
                }
            }
        }
    }
    let mut mtm = Matrix12::zeros();
    for j in 0..4 {
        for k in 0..4 {
            let (lo, hi) = (j.min(k), j.max(k));
            let [s1, su, sv, sw] = [sums[0][lo][hi], sums[1][lo][hi], sums[2][lo][hi], sums[3][lo][hi]];
            let block = Matrix3::new(s1, 0.0, -su, 0.0, s1, -sv, -su, -sv, sw);
            mtm.fixed_view_mut::<3, 3>(3 * j, 3 * k).copy_from(&block);
        }
    }
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // null-space basis, smallest eigenvalue first
    let kernel: [Vector12; 4] = std::array::from_fn(|i| eig.eigenvectors.column(order[i]).into_owned());

    let (l, rho) = distance_constraints(&kernel, &control);
    let mut out = Vec::with_capacity(3);
    for init in [betas_approx_1(&l, &rho), betas_approx_2(&l, &rho), betas_approx_3(&l, &rho)] {
        let Some(mut betas) = init else { continue };
        gauss_newton(&l, &rho, &mut betas);
        let camera_ctrl: [Vector3<f64>; 4] = std::array::from_fn(|j| {
            (0..4).fold(Vector3::zeros(), |acc, i| {
                acc + Vector3::new(kernel[i][3 * j], kernel[i][3 * j + 1], kernel[i][3 * j + 2]) * betas[i]
            })
        });
        let mut camera: Vec<Vector3<f64>> = alphas
            .iter()
            .map(|a| (0..4).fold(Vector3::zeros(), |acc, j| acc + camera_ctrl[j] * a[j]))
            .collect();
        let mean_z: f64 = camera.iter().map(|c| c.z).sum::<f64>() / camera.len() as f64;
        if mean_z < 0.0 {
            camera.iter_mut().for_each(|c| *c = -*c);
        }
        out.push(procrustes(points, &camera));
    }
    out
}

/// `L · β̄ = ρ` where `β̄ = (β₁², β₁β₂, β₂², β₁β₃, β₂β₃, β₃², β₁β₄, β₂β₄, β₃β₄, β₄²)`
/// and `ρ` holds squared world distances between control points.
fn distance_constraints(kernel: &[Vector12; 4], control: &[Vector3<f64>; 4]) -> (Matrix6x10, Vector6) {
    let mut l = Matrix6x10::zeros();
    let mut rho = Vector6::zeros();
    for (row, &(a, b)) in PAIRS.iter().enumerate() {
        let dv: [Vector3<f64>; 4] = std::array::from_fn(|i| {
            Vector3::new(
                kernel[i][3 * a] - kernel[i][3 * b],
                kernel[i][3 * a + 1] - kernel[i][3 * b + 1],
                kernel[i][3 * a + 2] - kernel[i][3 * b + 2],
            )
        });
        let vals = [
            dv[0].dot(&dv[0]),
            2.0 * dv[0].dot(&dv[1]),
            dv[1].dot(&dv[1]),
            2.0 * dv[0].dot(&dv[2]),
            2.0 * dv[1].dot(&dv[2]),
            dv[2].dot(&dv[2]),
            2.0 * dv[0].dot(&dv[3]),
            2.0 * dv[1].dot(&dv[3]),
            2.0 * dv[2].dot(&dv[3]),
            dv[3].dot(&dv[3]),
        ];
        for (c, v) in vals.into_iter().enumerate() {
            l[(row, c)] = v;
        }
        rho[row] = (control[a] - control[b]).norm_squared();
    }
    (l, rho)
}

fn least_squares(l: &Matrix6x10, rho: &Vector6, cols: &[usize]) -> Option<DVector<f64>> {
    let a = DMatrix::from_fn(6, cols.len(), |r, c| l[(r, cols[c])]);
    let b = DVector::from_column_slice(rho.as_slice());
    let x = a.svd(true, true).solve(&b, 1e-12).ok()?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// All four betas from the linearized `(β₁², β₁β₂, β₁β₃, β₁β₄)`.
fn betas_approx_1(l: &Matrix6x10, rho: &Vector6) -> Option<[f64; 4]> {
    let x = least_squares(l, rho, &[0, 1, 3, 6])?;
    let b1 = x[0].abs().sqrt();
    if b1 == 0.0 {
        return None;
    }
    let s = if x[0] < 0.0 { -1.0 } else { 1.0 };
    Some([b1, s * x[1] / b1, s * x[2] / b1, s * x[3] / b1])
}

/// Two betas from `(β₁², β₁β₂, β₂²)`.
fn betas_approx_2(l: &Matrix6x10, rho: &Vector6) -> Option<[f64; 4]> {
    let x = least_squares(l, rho, &[0, 1, 2])?;
    let (b1, b2) = two_betas(&x);
    (b1 != 0.0).then_some([b1, b2, 0.0, 0.0])
}

/// Three betas from `(β₁², β₁β₂, β₂², β₁β₃, β₂β₃)`.
fn betas_approx_3(l: &Matrix6x10, rho: &Vector6) -> Option<[f64; 4]> {
    let x = least_squares(l, rho, &[0, 1, 2, 3, 4])?;
    let (b1, b2) = two_betas(&x);
    (b1 != 0.0).then(|| [b1, b2, x[3] / b1, 0.0])
}

fn two_betas(x: &DVector<f64>) -> (f64, f64) {
    let (mut b1, b2) = if x[0] < 0.0 {
        ((-x[0]).sqrt(), if x[2] < 0.0 { (-x[2]).sqrt() } else { 0.0 })
    } else {
        (x[0].sqrt(), if x[2] > 0.0 { x[2].sqrt() } else { 0.0 })
    };
    if x[1] < 0.0 {
        b1 = -b1;
    }
    (b1, b2)
}

fn gauss_newton(l: &Matrix6x10, rho: &Vector6, betas: &mut [f64; 4]) {
    for _ in 0..GAUSS_NEWTON_STEPS {
        let b = *betas;
        let bb = [
            b[0] * b[0], b[0] * b[1], b[1] * b[1], b[0] * b[2], b[1] * b[2],
            b[2] * b[2], b[0] * b[3], b[1] * b[3], b[2] * b[3], b[3] * b[3],
        ];
        let mut jac = SMatrix::<f64, 6, 4>::zeros();
        let mut res = Vector6::zeros();
        for r in 0..6 {
            let row = l.row(r);
            jac[(r, 0)] = 2.0 * row[0] * b[0] + row[1] * b[1] + row[3] * b[2] + row[6] * b[3];
            jac[(r, 1)] = row[1] * b[0] + 2.0 * row[2] * b[1] + row[4] * b[2] + row[7] * b[3];
            jac[(r, 2)] = row[3] * b[0] + row[4] * b[1] + 2.0 * row[5] * b[2] + row[8] * b[3];
            jac[(r, 3)] = row[6] * b[0] + row[7] * b[1] + row[8] * b[2] + 2.0 * row[9] * b[3];
            res[r] = rho[r] - (0..10).map(|c| row[c] * bb[c]).sum::<f64>();
        }
        let Ok(step) = jac.svd(true, true).solve(&res, 1e-14) else {
            return;
        };
        if step.iter().any(|v| !v.is_finite()) {
            return;
        }
        for i in 0..4 {
            betas[i] += step[i];
        }
    }
}

/// Pose of a planar point set from the homography between its in-plane
/// coordinates and the normalized image points.
fn planar_candidate(
    points: &[Vector3<f64>],
    normalized: &[Vector2<f64>],
    centroid: &Vector3<f64>,
    axes: &Matrix3<f64>,
) -> Option<Pose> {
    let e1: Vector3<f64> = axes.column(0).into_owned();
    let e2: Vector3<f64> = axes.column(1).into_owned();
    let e3 = e1.cross(&e2);
    let basis = Matrix3::from_columns(&[e1, e2, e3]);
    let plane: Vec<Vector2<f64>> = points
        .iter()
        .map(|p| {
            let d = p - centroid;
            Vector2::new(d.dot(&e1), d.dot(&e2))
        })
        .collect();

    let h = homography_dlt(&plane, normalized)?;
    let (h1, h2, h3) = (h.column(0).into_owned(), h.column(1).into_owned(), h.column(2).into_owned());
    let scale = 2.0 / (h1.norm() + h2.norm());
    // the plane origin (the centroid) must land in front of the camera
    let sign = if h3.z < 0.0 { -1.0 } else { 1.0 };
    let s = scale * sign;
    let r1 = h1 * s;
    let r2 = h2 * s;
    let t = h3 * s;
    let plane_rot = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let rotation = plane_rot * basis.transpose();
    let pose = Pose { rotation, translation: t - rotation * centroid };
    pose.is_finite().then_some(pose)
}

/// Hartley-normalized DLT estimate of `H` with `dst ~ H · [src; 1]`.
fn homography_dlt(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let (ts, src_n) = normalize_2d(src)?;
    let (td, dst_n) = normalize_2d(dst)?;
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (s, d) in src_n.iter().zip(&dst_n) {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r1 = SVector::<f64, 9>::from_column_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        let r2 = SVector::<f64, 9>::from_column_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
        ata += r1 * r1.transpose() + r2 * r2.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let imin = eig.eigenvalues.imin();
    let hv = eig.eigenvectors.column(imin);
    let hn = Matrix3::new(hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8]);
    let h = td.try_inverse()? * hn * ts;
    h.iter().all(|v| v.is_finite()).then_some(h)
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalize_2d(pts: &[Vector2<f64>]) -> Option<(Matrix3<f64>, Vec<Vector2<f64>>)> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector2<f64>>() / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean_dist > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    Some((t, pts.iter().map(|p| (p - c) * s).collect()))
}
