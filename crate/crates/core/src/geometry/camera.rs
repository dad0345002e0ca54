use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Pinhole intrinsics. Pixel `(u, v)` covers `[u, u+1) × [v, v+1)` in image
/// coordinates, so its centre sits at `(u + 0.5, v + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "viewport must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Ray direction (with unit z) through the centre of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        Vector3::new(
            (f64::from(u) + 0.5 - self.cx) / self.fx,
            (f64::from(v) + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    /// Image point to normalized camera coordinates.
    pub fn normalize(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy)
    }

    /// Camera-frame point to image coordinates; `None` at or behind the
    /// image plane.
    #[inline]
    pub fn project_camera(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        (p.z > 1e-9).then(|| Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Rigid transform from model to camera coordinates, `x_cam = R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRecord", into = "PoseRecord")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    /// Row-major.
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl From<PoseRecord> for Pose {
    fn from(r: PoseRecord) -> Self {
        Pose {
            rotation: Matrix3::from_row_slice(&r.rotation),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        let r = &p.rotation;
        PoseRecord {
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Pose {
    /// Validates `RᵀR = I` and `det R = 1` to within `1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let dev = orthonormality_deviation(&rotation);
        if !(dev <= 1e-9) {
            return Err(GeometryError::NotARotation(dev));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

/// max |RᵀR − I| plus |det R − 1|.
fn orthonormality_deviation(r: &Matrix3<f64>) -> f64 {
    let e = r.transpose() * r - Matrix3::identity();
    e.amax() + (r.determinant() - 1.0).abs()
}

/// Rotation angle of a rotation matrix. Uses `atan2` of the skew part so
/// small angles keep full precision.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    let c = r.trace() - 1.0;
    s.atan2(c)
}

/// Closest rotation to `m` in the Frobenius sense (polar factor with the
/// determinant forced to +1).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    u * fix * v_t
}

/// Pinhole projection of a model point under `pose`.
pub fn project(point: &Vector3<f64>, pose: &Pose, k: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    let p = pose.transform(point);
    k.project_camera(&p).ok_or(GeometryError::BehindCamera(p.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 64.0, 64.0, 128, 128).unwrap()
    }

    #[test]
    fn projection_examples() {
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(project(&Vector3::zeros(), &pose, &k()).unwrap(), Vector2::new(64.0, 64.0));
        let p = project(&Vector3::new(0.01, 0.0, 0.0), &pose, &k()).unwrap();
        assert!((p - Vector2::new(69.0, 64.0)).norm() < 1e-12);
        let behind = project(&Vector3::new(0.0, 0.0, -1.0), &pose, &k());
        assert!(matches!(behind, Err(GeometryError::BehindCamera(_))));
        let on_plane = project(&Vector3::new(0.0, 0.0, -1.0), &Pose::identity(), &k());
        assert!(on_plane.is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 1, 1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 1).is_err());
    }

    #[test]
    fn pixel_ray_passes_through_centre() {
        let k = k();
        let ray = k.pixel_ray(10, 20);
        let p = k.project_camera(&(ray * 3.0)).unwrap();
        assert!((p - Vector2::new(10.5, 20.5)).norm() < 1e-12);
    }

    #[test]
    fn pose_validation_and_algebra() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let p = Pose::new(r, Vector3::new(0.1, 0.2, 0.3)).unwrap();
        let id = p.compose(&p.inverse());
        assert!(id.rotation_error(&Pose::identity()) < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!(Pose::new(r * 1.01, Vector3::zeros()).is_err());
        assert!(Pose::new(-Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn rotation_angle_matches_axis_angle() {
        for &angle in &[1e-9, 1e-4, 0.5, 2.0, 3.1] {
            let r = Rotation3::from_axis_angle(&Vector3::y_axis(), angle).into_inner();
            assert!((rotation_angle(&r) - angle).abs() < 1e-12 * angle.max(1.0));
        }
    }

    #[test]
    fn nearest_rotation_repairs_perturbation() {
        let r = Rotation3::from_euler_angles(0.1, 0.7, -0.4).into_inner();
        let noisy = r + Matrix3::from_fn(|i, j| 1e-4 * ((i * 3 + j) as f64).sin());
        let fixed = nearest_rotation(&noisy);
        assert!(orthonormality_deviation(&fixed) < 1e-12);
        assert!(rotation_angle(&(fixed.transpose() * r)) < 1e-3);
        // reflection input still yields det +1
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!((nearest_rotation(&refl).determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_serializes_row_major() {
        let p = Pose {
            rotation: Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0),
            translation: Vector3::new(0.5, 0.25, 2.0),
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"rotation":[1.0,2.0,3.0,4.0,5.0,6.0,7.0,8.0,9.0],"translation":[0.5,0.25,2.0]}"#);
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
