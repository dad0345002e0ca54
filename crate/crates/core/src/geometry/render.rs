//! Front/back surface rendering by ray casting through pixel centres.
//!
//! For every pixel the nearest and farthest ray hits over all triangles are
//! kept, which is what a pair of opposite depth tests would produce with an
//! exact depth buffer. Back faces are never culled.

use nalgebra::Vector3;

use super::{CameraIntrinsics, Pose, TriangleMesh};
use crate::coordinate_map::CoordinateMap;

/// Determinant magnitude below which a ray counts as parallel to a triangle.
const PARALLEL_EPS: f64 = 1e-9;
/// Hits closer than this along the ray are ignored.
const MIN_HIT_T: f64 = 1e-6;
/// Front and back hits closer than this in depth are treated as one surface.
const SAME_SURFACE_EPS: f64 = 1e-6;

/// Möller–Trumbore ray/triangle intersection. Returns `(t, u, v)` where the
/// hit point is `origin + t·dir = (1−u−v)·v0 + u·v1 + v·v2`.
#[inline]
pub fn intersect_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t >= MIN_HIT_T).then_some((t, u, v))
}

#[derive(Clone, Copy)]
struct Hit {
    depth: f64,
    triangle: u32,
    u: f64,
    v: f64,
}

/// Rendered coordinate map plus the camera-space depths of both hits.
/// Depth buffers hold NaN outside the mask.
#[derive(Debug, Clone)]
pub struct SurfaceRender {
    pub map: CoordinateMap,
    pub front_depth: Vec<f64>,
    pub back_depth: Vec<f64>,
}

/// Renders the front (nearest hit) and back (farthest hit) model-space
/// coordinates of `mesh` seen under `pose` through camera `k`.
pub fn render_front_back(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> SurfaceRender {
    let (w, h) = (k.width, k.height);
    let n = k.pixel_count();
    let cam: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| pose.transform(v)).collect();
    let mut front: Vec<Option<Hit>> = vec![None; n];
    let mut back: Vec<Option<Hit>> = vec![None; n];
    let origin = Vector3::zeros();

    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = tri.map(|i| cam[i as usize]);
        let zmax = a.z.max(b.z).max(c.z);
        if zmax < MIN_HIT_T {
            continue;
        }
        let zmin = a.z.min(b.z).min(c.z);
        let (u0, u1, v0, v1) = if zmin > 1e-9 {
            let pa = k.project_camera(&a).expect("in front");
            let pb = k.project_camera(&b).expect("in front");
            let pc = k.project_camera(&c).expect("in front");
            let lo_x = pa.x.min(pb.x).min(pc.x);
            let hi_x = pa.x.max(pb.x).max(pc.x);
            let lo_y = pa.y.min(pb.y).min(pc.y);
            let hi_y = pa.y.max(pb.y).max(pc.y);
            // pixel u has its centre at u + 0.5; pad by one pixel
            let clamp_x = |x: f64| x.clamp(0.0, f64::from(w)) as u32;
            let clamp_y = |y: f64| y.clamp(0.0, f64::from(h)) as u32;
            (
                clamp_x((lo_x - 1.5).floor()),
                clamp_x((hi_x + 0.5).ceil()),
                clamp_y((lo_y - 1.5).floor()),
                clamp_y((hi_y + 0.5).ceil()),
            )
        } else {
            // straddles the image plane; test the whole viewport
            (0, w, 0, h)
        };
        for v in v0..v1.min(h) {
            for u in u0..u1.min(w) {
                let dir = k.pixel_ray(u, v);
                let Some((t, bu, bv)) = intersect_triangle(&origin, &dir, &a, &b, &c) else {
                    continue;
                };
                // dir.z == 1, so the ray parameter is the camera depth
                let hit = Hit { depth: t, triangle: ti as u32, u: bu, v: bv };
                let idx = v as usize * w as usize + u as usize;
                if front[idx].is_none_or(|f| t < f.depth) {
                    front[idx] = Some(hit);
                }
                if back[idx].is_none_or(|b| t > b.depth) {
                    back[idx] = Some(hit);
                }
            }
        }
    }

    let model_point = |hit: &Hit| -> Vector3<f64> {
        let [i0, i1, i2] = mesh.triangles()[hit.triangle as usize];
        let vs = mesh.vertices();
        vs[i0 as usize] * (1.0 - hit.u - hit.v) + vs[i1 as usize] * hit.u + vs[i2 as usize] * hit.v
    };

    let mut map = CoordinateMap::new(w, h);
    let mut front_depth = vec![f64::NAN; n];
    let mut back_depth = vec![f64::NAN; n];
    for idx in 0..n {
        let (Some(f), Some(mut b)) = (front[idx], back[idx]) else {
            continue;
        };
        if b.depth - f.depth < SAME_SURFACE_EPS {
            b = f;
        }
        map.set(idx, &model_point(&f), &model_point(&b));
        front_depth[idx] = f.depth;
        back_depth[idx] = b.depth;
    }
    SurfaceRender { map, front_depth, back_depth }
}

/// [`render_front_back`] without the depth buffers.
pub fn raycast_front_back(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> CoordinateMap {
    render_front_back(mesh, pose, k).map
}
