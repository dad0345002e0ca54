//! Hierarchical coordinate codecs.
//!
//! Each normalized coordinate component `x ∈ [0, 1]` is represented two ways:
//!
//! - **HBCE** (hierarchical binary): the first `L` digits of the binary
//!   expansion of `x`, with `x = 1` assigned to the top bin.
//! - **HCCE** (hierarchical continuous): level 1 is `x` itself and every
//!   further level folds the previous one with the tent map
//!   `x ↦ 2x` (`x < 0.5`) / `x ↦ 2 − 2x` (`x ≥ 0.5`). Level `i` is therefore
//!   piecewise linear with slope `±2^(i−1)` and continuous everywhere.
//!
//! Thresholding an HCCE code at 0.5 and undoing the mirror whenever the
//! previous bit was set gives back the HBCE bits, so both representations
//! decode through the same place-value sum.

use nalgebra::Vector3;
use thiserror::Error;

/// Default number of hierarchy levels per coordinate component.
pub const DEFAULT_LEVELS: usize = 8;

/// Largest supported level count; beyond this `f64` doubling stops being exact.
pub const MAX_LEVELS: usize = 52;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("value {0} is outside the unit interval")]
    Domain(f64),
    #[error("normalizer extent must be positive on every axis, got {0:?}")]
    InvalidNormalizer([f64; 3]),
    #[error("level count must be in 1..={MAX_LEVELS}, got {0}")]
    InvalidLevels(usize),
    #[error("code has {got} levels, codec expects {expected}")]
    LevelMismatch { expected: usize, got: usize },
}

/// Affine map from model space onto the unit cube, one scale per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingNormalizer {
    min_corner: Vector3<f64>,
    extent: Vector3<f64>,
}

impl BoundingNormalizer {
    pub fn new(min_corner: Vector3<f64>, extent: Vector3<f64>) -> Result<Self, CodecError> {
        if extent.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(CodecError::InvalidNormalizer([extent.x, extent.y, extent.z]));
        }
        Ok(Self { min_corner, extent })
    }

    /// Tight axis-aligned bounds of a point set. Degenerate axes (all points
    /// share a coordinate) get a unit extent so the normalizer stays valid.
    pub fn from_points<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Vector3<f64>>,
    {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let (lo, hi) = iter.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let extent = (hi - lo).map(|e| if e > 0.0 { e } else { 1.0 });
        Some(Self { min_corner: lo, extent })
    }

    pub fn min_corner(&self) -> Vector3<f64> {
        self.min_corner
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.extent
    }

    pub fn max_corner(&self) -> Vector3<f64> {
        self.min_corner + self.extent
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let hi = self.max_corner();
        (0..3).all(|i| p[i] >= self.min_corner[i] - tol && p[i] <= hi[i] + tol)
    }

    pub fn normalize(&self, point: &Vector3<f64>) -> NormalizedCoordinate {
        let c = (point - self.min_corner)
            .component_div(&self.extent)
            .map(|v| v.clamp(0.0, 1.0));
        NormalizedCoordinate { u: c.x, v: c.y, w: c.z }
    }

    pub fn denormalize(&self, c: &NormalizedCoordinate) -> Vector3<f64> {
        self.min_corner + c.as_vector().component_mul(&self.extent)
    }
}

/// A model-space point expressed in normalized `[0, 1]³` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCoordinate {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl NormalizedCoordinate {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, self.w)
    }

    pub fn components(&self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }
}

/// Continuous (HCCE) code of one coordinate component, level 1 first.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousCode {
    levels: Vec<f64>,
}

impl ContinuousCode {
    pub fn from_levels(levels: Vec<f64>) -> Result<Self, CodecError> {
        if levels.is_empty() || levels.len() > MAX_LEVELS {
            return Err(CodecError::InvalidLevels(levels.len()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Binary (HBCE) code of one coordinate component, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    bits: Vec<u8>,
}

impl BinaryCode {
    /// Any non-zero entry is read as a set bit.
    pub fn from_bits(bits: &[u8]) -> Result<Self, CodecError> {
        if bits.is_empty() || bits.len() > MAX_LEVELS {
            return Err(CodecError::InvalidLevels(bits.len()));
        }
        Ok(Self { bits: bits.iter().map(|&b| u8::from(b != 0)).collect() })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Keeps only the `levels` most significant bits.
    pub fn truncated(&self, levels: usize) -> BinaryCode {
        BinaryCode { bits: self.bits[..levels.clamp(1, self.bits.len())].to_vec() }
    }
}

/// Binarization used when reading continuous codes: `g(t) = 1` iff `t ≥ 0.5`.
#[inline]
pub fn binarize(t: f64) -> u8 {
    u8::from(t >= 0.5)
}

/// One fold of the mirror recursion. Exact in `f64` for inputs in `[0, 1]`.
#[inline]
fn tent(x: f64) -> f64 {
    if x < 0.5 {
        2.0 * x
    } else {
        2.0 - 2.0 * x
    }
}

/// Encoder/decoder for a fixed number of hierarchy levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchicalCodec {
    levels: usize,
    midpoint: bool,
}

impl Default for HierarchicalCodec {
    fn default() -> Self {
        Self { levels: DEFAULT_LEVELS, midpoint: false }
    }
}

impl HierarchicalCodec {
    pub fn new(levels: usize) -> Result<Self, CodecError> {
        if levels == 0 || levels > MAX_LEVELS {
            return Err(CodecError::InvalidLevels(levels));
        }
        Ok(Self { levels, midpoint: false })
    }

    /// Decode to the centre of each bin instead of its lower edge.
    pub fn with_midpoint(mut self, midpoint: bool) -> Self {
        self.midpoint = midpoint;
        self
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn midpoint(&self) -> bool {
        self.midpoint
    }

    /// Width of the finest bin, `2^-L`.
    pub fn resolution(&self) -> f64 {
        (-(self.levels as f64)).exp2()
    }

    fn check_domain(x: f64) -> Result<(), CodecError> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(CodecError::Domain(x))
        }
    }

    pub fn hbce_encode(&self, x: f64) -> Result<BinaryCode, CodecError> {
        Self::check_domain(x)?;
        let bins = 1u64 << self.levels;
        // 1.0 belongs to the top half-open bin.
        let bin = ((x * bins as f64).floor() as u64).min(bins - 1);
        let bits = (0..self.levels)
            .map(|i| ((bin >> (self.levels - 1 - i)) & 1) as u8)
            .collect();
        Ok(BinaryCode { bits })
    }

    pub fn hcce_encode(&self, x: f64) -> Result<ContinuousCode, CodecError> {
        Self::check_domain(x)?;
        let mut levels = Vec::with_capacity(self.levels);
        let mut folded = x;
        levels.push(folded);
        for _ in 1..self.levels {
            folded = tent(folded);
            levels.push(folded);
        }
        Ok(ContinuousCode { levels })
    }

    /// Converts continuous codes to binary codes by undoing the mirror fold
    /// whenever the previous bit is set. Accepts any level values, so raw
    /// network-style outputs outside `[0, 1]` binarize without error.
    pub fn hcce_to_binary(&self, code: &ContinuousCode) -> Result<BinaryCode, CodecError> {
        self.check_len(code.len())?;
        Ok(continuous_to_binary(code.levels()))
    }

    pub fn binary_decode(&self, code: &BinaryCode) -> Result<f64, CodecError> {
        self.check_len(code.len())?;
        Ok(decode_bits(code.bits(), self.midpoint))
    }

    /// Full round trip `x → HCCE → bits → value`.
    pub fn round_trip(&self, x: f64) -> Result<f64, CodecError> {
        let code = self.hcce_encode(x)?;
        self.binary_decode(&self.hcce_to_binary(&code)?)
    }

    fn check_len(&self, got: usize) -> Result<(), CodecError> {
        if got != self.levels {
            return Err(CodecError::LevelMismatch { expected: self.levels, got });
        }
        Ok(())
    }
}

/// Mirror-reversing binarization over an arbitrary number of levels.
pub fn continuous_to_binary(levels: &[f64]) -> BinaryCode {
    let mut bits = Vec::with_capacity(levels.len());
    let mut prev = 0u8;
    for &c in levels {
        let bit = if prev == 0 { binarize(c) } else { 1 - binarize(c) };
        bits.push(bit);
        prev = bit;
    }
    BinaryCode { bits }
}

/// Place-value sum `Σ 2^-i · b_i`, plus half the finest bin when `midpoint`.
pub fn decode_bits(bits: &[u8], midpoint: bool) -> f64 {
    let mut value = 0.0;
    let mut weight = 0.5;
    for &b in bits {
        if b != 0 {
            value += weight;
        }
        weight *= 0.5;
    }
    if midpoint {
        value += weight;
    }
    value
}

/// [`HierarchicalCodec::hbce_encode`] at the default depth.
pub fn hbce_encode(x: f64) -> Result<BinaryCode, CodecError> {
    HierarchicalCodec::default().hbce_encode(x)
}

/// [`HierarchicalCodec::hcce_encode`] at the default depth.
pub fn hcce_encode(x: f64) -> Result<ContinuousCode, CodecError> {
    HierarchicalCodec::default().hcce_encode(x)
}

/// Level-count agnostic conversion; see [`continuous_to_binary`].
pub fn hcce_to_binary(code: &ContinuousCode) -> BinaryCode {
    continuous_to_binary(code.levels())
}

/// Floor-of-bin decode of any bit vector.
pub fn binary_decode(code: &BinaryCode) -> f64 {
    decode_bits(code.bits(), false)
}
