//! 2D-3D correspondence sets built from a coordinate map.
//!
//! Every masked pixel contributes its front point, its back point, or both;
//! the ultra-dense mode additionally places `⌊‖q_f − q_b‖ / d̄⌋` evenly
//! spaced points strictly between them, where `d̄` is the mean
//! nearest-neighbour spacing of the predicted surface points. All records of
//! one pixel share a group id so that RANSAC can draw at most one of them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::coordinate_map::CoordinateMap;
use crate::geometry::{avg_nn_distance, GeometryError};

#[derive(Debug, Error)]
pub enum CorrespondenceError {
    #[error("interpolation spacing must be positive and finite, got {0}")]
    Spacing(f64),
    #[error("cannot estimate point spacing: {0}")]
    Density(#[from] GeometryError),
    #[error("unknown correspondence mode `{0}` (expected f, b, bf or bfu)")]
    UnknownMode(String),
}

/// Which surface a 3D point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Front,
    Back,
    Mid,
}

impl Source {
    pub fn code(self) -> u8 {
        match self {
            Source::Front => 0,
            Source::Back => 1,
            Source::Mid => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Source::Front),
            1 => Some(Source::Back),
            2 => Some(Source::Mid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Image position of the pixel centre.
    pub pixel: Vector2<f64>,
    /// Model-space point.
    pub point: Vector3<f64>,
    pub source: Source,
    /// Row-major pixel index; shared by all records of one pixel.
    pub group: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    records: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(records: Vec<Correspondence>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[Correspondence] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_source(&self, source: Source) -> usize {
        self.records.iter().filter(|r| r.source == source).count()
    }

    /// Records bucketed by group, groups in ascending id order.
    pub fn groups(&self) -> GroupIndex {
        GroupIndex::new(&self.records)
    }
}

/// Compressed group → record-index table.
#[derive(Debug, Clone)]
pub struct GroupIndex {
    ids: Vec<u32>,
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl GroupIndex {
    pub fn new(records: &[Correspondence]) -> Self {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by_key(|&i| records[i].group);
        let mut ids = Vec::new();
        let mut offsets = vec![0];
        for (k, &i) in order.iter().enumerate() {
            let g = records[i].group;
            if ids.last() != Some(&g) {
                if !ids.is_empty() {
                    offsets.push(k);
                }
                ids.push(g);
            }
        }
        if !ids.is_empty() {
            offsets.push(order.len());
        }
        Self { ids, offsets, members: order }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, g: usize) -> u32 {
        self.ids[g]
    }

    /// Record indices of the `g`-th group.
    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[self.offsets[g]..self.offsets[g + 1]]
    }
}

/// Which records a set contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Front surface only.
    F,
    /// Back surface only.
    B,
    /// Front and back.
    Bf,
    /// Front, back and interpolated interior points.
    Bfu,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::F, Mode::B, Mode::Bf, Mode::Bfu];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::F => "f",
            Mode::B => "b",
            Mode::Bf => "bf",
            Mode::Bfu => "bfu",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = CorrespondenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f" => Ok(Mode::F),
            "b" => Ok(Mode::B),
            "bf" => Ok(Mode::Bf),
            "bfu" => Ok(Mode::Bfu),
            _ => Err(CorrespondenceError::UnknownMode(s.to_string())),
        }
    }
}

/// Points used to estimate the interpolation spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySource {
    Front,
    Back,
    #[default]
    Both,
}

/// Interpolation spacing for the ultra-dense mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    /// Mean nearest-neighbour distance of the map's predicted points.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildOptions {
    pub spacing: Spacing,
    pub density_source: DensitySource,
    /// Upper bound on points fed to the nearest-neighbour pass; larger
    /// inputs are thinned with a uniform stride.
    pub max_density_points: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { spacing: Spacing::Auto, density_source: DensitySource::Both, max_density_points: 20_000 }
    }
}

/// `⌊‖q1 − q2‖ / d̄⌋`.
pub fn interp_count(q1: &Vector3<f64>, q2: &Vector3<f64>, d_bar: f64) -> Result<usize, CorrespondenceError> {
    if !(d_bar > 0.0 && d_bar.is_finite()) {
        return Err(CorrespondenceError::Spacing(d_bar));
    }
    let n = ((q1 - q2).norm() / d_bar).floor();
    Ok(if n.is_finite() && n > 0.0 { n as usize } else { 0 })
}

/// `a·q1 + (1 − a)·q2` for `a = t / (n + 1)`, `t = 1..=n`.
pub fn sample_between(q1: &Vector3<f64>, q2: &Vector3<f64>, n: usize) -> Vec<Vector3<f64>> {
    let denom = (n + 1) as f64;
    (1..=n)
        .map(|t| {
            let a = t as f64 / denom;
            q1 * a + q2 * (1.0 - a)
        })
        .collect()
}

/// Mean nearest-neighbour spacing of the map's masked surface points.
pub fn estimate_spacing(map: &CoordinateMap, opts: &BuildOptions) -> Result<f64, CorrespondenceError> {
    let mut points = Vec::new();
    for idx in map.masked_indices() {
        let single = map.is_single_surface(idx);
        match opts.density_source {
            DensitySource::Front => points.push(map.front(idx)),
            DensitySource::Back => points.push(map.back(idx)),
            DensitySource::Both => {
                points.push(map.front(idx));
                if !single {
                    points.push(map.back(idx));
                }
            }
        }
    }
    let cap = opts.max_density_points.max(2);
    if points.len() > cap {
        let stride = points.len().div_ceil(cap);
        points = points.into_iter().step_by(stride).collect();
    }
    Ok(avg_nn_distance(&points)?)
}

/// Builds the correspondence set for `mode`. Records come out in row-major
/// pixel order; within a pixel: front, back, then interior points with `a`
/// ascending. An empty mask yields an empty set.
pub fn build_correspondences(
    map: &CoordinateMap,
    mode: Mode,
    opts: &BuildOptions,
) -> Result<CorrespondenceSet, CorrespondenceError> {
    let masked: Vec<usize> = map.masked_indices().collect();
    if masked.is_empty() {
        return Ok(CorrespondenceSet::default());
    }
    let d_bar = match (mode, opts.spacing) {
        (Mode::Bfu, Spacing::Auto) => Some(estimate_spacing(map, opts)?),
        (Mode::Bfu, Spacing::Fixed(d)) => Some(d),
        _ => None,
    };
    if let Some(d) = d_bar {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CorrespondenceError::Spacing(d));
        }
    }

    let per_pixel: Vec<Vec<Correspondence>> = masked
        .par_iter()
        .map(|&idx| {
            let pixel = map.pixel_center(idx);
            let group = idx as u32;
            let front = map.front(idx);
            let back = map.back(idx);
            let single = map.is_single_surface(idx);
            let rec = |point, source| Correspondence { pixel, point, source, group };
            let mut out = Vec::with_capacity(2);
            match mode {
                Mode::F => out.push(rec(front, Source::Front)),
                Mode::B => out.push(rec(back, Source::Back)),
                Mode::Bf | Mode::Bfu => {
                    out.push(rec(front, Source::Front));
                    if !single {
                        out.push(rec(back, Source::Back));
                    }
                }
            }
            if let Some(d) = d_bar {
                if !single {
                    let n = interp_count(&front, &back, d).expect("spacing validated");
                    out.extend(sample_between(&front, &back, n).into_iter().map(|p| rec(p, Source::Mid)));
                }
            }
            out
        })
        .collect();
    Ok(CorrespondenceSet::new(per_pixel.into_iter().flatten().collect()))
}
