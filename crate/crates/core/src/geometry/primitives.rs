//! Procedural test objects, all centred on their bounding-box centre.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::TriangleMesh;

/// Axis-aligned cube with the given edge length.
pub fn cube(edge: f64) -> TriangleMesh {
    box_mesh(Vector3::new(edge, edge, edge))
}

/// Axis-aligned box with the given side lengths.
pub fn box_mesh(size: Vector3<f64>) -> TriangleMesh {
    let h = size / 2.0;
    let vertices: Vec<Vector3<f64>> = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let triangles = vec![
        [0, 2, 1], [1, 2, 3], // -z
        [4, 5, 6], [5, 7, 6], // +z
        [0, 1, 4], [1, 5, 4], // -y
        [2, 6, 3], [3, 6, 7], // +y
        [0, 4, 2], [2, 4, 6], // -x
        [1, 3, 5], [3, 7, 5], // +x
    ];
    TriangleMesh::new(vertices, triangles).expect("valid box")
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0), (1.0, phi, 0.0), (-1.0, -phi, 0.0), (1.0, -phi, 0.0),
        (0.0, -1.0, phi), (0.0, 1.0, phi), (0.0, -1.0, -phi), (0.0, 1.0, -phi),
        (phi, 0.0, -1.0), (phi, 0.0, 1.0), (-phi, 0.0, -1.0), (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in vertices.iter_mut() {
        *v *= radius;
    }
    TriangleMesh::new(vertices, triangles).expect("valid icosphere")
}

/// Non-convex L-shaped bracket: an L profile in the xy-plane (arm length
/// `arm`, wall thickness `thickness`) extruded by `depth` along z.
pub fn l_bracket(arm: f64, thickness: f64, depth: f64) -> TriangleMesh {
    assert!(thickness < arm, "bracket wall must be thinner than its arm");
    let (a, t) = (arm, thickness);
    // (0, t) sits on the outer edge so both caps triangulate into convex pieces.
    let profile = [(0.0, 0.0), (a, 0.0), (a, t), (t, t), (t, a), (0.0, a), (0.0, t)];
    let n = profile.len() as u32;
    let centre = Vector3::new(a / 2.0, a / 2.0, depth / 2.0);
    let mut vertices = Vec::with_capacity(2 * profile.len());
    for z in [0.0, depth] {
        for &(x, y) in &profile {
            vertices.push(Vector3::new(x, y, z) - centre);
        }
    }
    let cap = [[0, 1, 2], [0, 2, 3], [0, 3, 6], [6, 3, 4], [6, 4, 5]];
    let mut triangles = Vec::new();
    for [i, j, k] in cap {
        triangles.push([i, k, j]);
        triangles.push([i + n, j + n, k + n]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, j + n]);
        triangles.push([i, j + n, i + n]);
    }
    TriangleMesh::new(vertices, triangles).expect("valid bracket")
}

/// Flat square in the z = 0 plane split into two triangles.
pub fn square(edge: f64) -> TriangleMesh {
    let h = edge / 2.0;
    let vertices = vec![
        Vector3::new(-h, -h, 0.0),
        Vector3::new(h, -h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(-h, h, 0.0),
    ];
    TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("valid square")
}
