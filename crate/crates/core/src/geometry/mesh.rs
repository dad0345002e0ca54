use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::GeometryError;
use crate::codec::BoundingNormalizer;

/// Triangle mesh in model coordinates (meters).
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    diameter: f64,
    bounds: BoundingNormalizer,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::EmptyMesh("vertices"));
        }
        if triangles.is_empty() {
            return Err(GeometryError::EmptyMesh("faces"));
        }
        let count = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= count) {
                return Err(GeometryError::IndexOutOfRange { triangle: t, index: bad as usize, count });
            }
        }
        let diameter = max_pairwise_distance(&vertices);
        if !(diameter > 0.0) {
            return Err(GeometryError::ZeroDiameter);
        }
        let bounds = BoundingNormalizer::from_points(&vertices).expect("non-empty");
        Ok(Self { vertices, triangles, diameter, bounds })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Largest distance between any two vertices.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Tight axis-aligned bounds, also used as the coordinate normalizer.
    pub fn bounds(&self) -> &BoundingNormalizer {
        &self.bounds
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    pub fn to_ply(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
             element face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

fn max_pairwise_distance(vertices: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// Loads an ASCII OBJ or PLY file. The format is picked from the extension,
/// falling back to sniffing a `ply` magic line.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => parse_obj(&text, &name),
        Some("ply") => parse_ply(&text, &name),
        _ if text.trim_start().starts_with("ply") => parse_ply(&text, &name),
        _ => parse_obj(&text, &name),
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse { path: path.to_string(), line, message: message.into() }
}

fn parse_f64(tok: Option<&str>, path: &str, line: usize) -> Result<f64, GeometryError> {
    let tok = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid number `{tok}`")))
}

/// Parses `v` and `f` records; polygons are fan-triangulated and negative
/// (relative) indices are resolved. Everything else is ignored.
pub fn parse_obj(text: &str, path: &str) -> Result<TriangleMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let x = parse_f64(tokens.next(), path, line)?;
                let y = parse_f64(tokens.next(), path, line)?;
                let z = parse_f64(tokens.next(), path, line)?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| parse_err(path, line, format!("invalid face index `{tok}`")))?;
                    let resolved = match idx {
                        0 => return Err(parse_err(path, line, "face index 0 is invalid in OBJ")),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(path, line, format!("face index {idx} out of range")));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, line, "face needs at least 3 vertices"));
                }
                for k in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    is_list: Vec<bool>,
}

/// Parses ASCII PLY with a `vertex` element (x, y, z properties) and a
/// `face` element holding a vertex index list. Other elements are skipped.
pub fn parse_ply(text: &str, path: &str) -> Result<TriangleMesh, GeometryError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (line, raw) in lines.by_ref() {
        let mut t = raw.split_whitespace();
        match t.next() {
            Some("format") => match t.next() {
                Some("ascii") => {}
                Some(other) => return Err(GeometryError::UnsupportedFormat(format!("PLY {other}"))),
                None => return Err(parse_err(path, line, "format line without a format")),
            },
            Some("element") => {
                let name = t.next().ok_or_else(|| parse_err(path, line, "element without name"))?;
                let count = t
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, line, "element without a valid count"))?;
                elements.push(PlyElement { name: name.to_string(), count, properties: vec![], is_list: vec![] });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line, "property before any element"))?;
                let toks: Vec<&str> = t.collect();
                let name = toks.last().ok_or_else(|| parse_err(path, line, "property without name"))?;
                el.is_list.push(toks.first() == Some(&"list"));
                el.properties.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            _ => {}
        }
    }
    if !header_done {
        return Err(parse_err(path, text.lines().count(), "missing end_header"));
    }

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let (line, raw) = lines
                .next()
                .ok_or_else(|| parse_err(path, text.lines().count(), format!("truncated `{}` element", el.name)))?;
            let toks: Vec<&str> = raw.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let mut xyz = [0.0; 3];
                    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
                        let pos = el
                            .properties
                            .iter()
                            .position(|p| p == axis)
                            .ok_or_else(|| parse_err(path, line, format!("vertex has no `{axis}` property")))?;
                        *slot = parse_f64(toks.get(pos).copied(), path, line)?;
                    }
                    vertices.push(Vector3::from(xyz));
                }
                "face" => {
                    if !el.is_list.first().copied().unwrap_or(false) {
                        return Err(parse_err(path, line, "face element must start with an index list"));
                    }
                    let n: usize = toks
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(path, line, "invalid face vertex count"))?;
                    if n < 3 || toks.len() < n + 1 {
                        return Err(parse_err(path, line, "face needs at least 3 indices"));
                    }
                    let idx: Vec<u32> = toks[1..=n]
                        .iter()
                        .map(|s| s.parse::<u32>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| parse_err(path, line, "invalid face index"))?;
                    for k in 1..n - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}
