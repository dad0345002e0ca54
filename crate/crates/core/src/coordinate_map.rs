//! Per-pixel object mask with front and back model-space coordinates.

use nalgebra::{Vector2, Vector3};

/// Dense `width × height` image of surface coordinates.
///
/// Coordinates are stored as `f32` (the on-disk precision) so a save/load
/// cycle is bit exact. Unmasked pixels hold quiet NaN. Equality is bitwise,
/// so two maps compare equal exactly when their serialized bytes would.
#[derive(Debug, Clone)]
pub struct CoordinateMap {
    width: u32,
    height: u32,
    mask: Vec<u8>,
    front: Vec<[f32; 3]>,
    back: Vec<[f32; 3]>,
}

impl PartialEq for CoordinateMap {
    fn eq(&self, other: &Self) -> bool {
        let bits = |a: &[[f32; 3]], b: &[[f32; 3]]| {
            a.len() == b.len() && a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.width == other.width
            && self.height == other.height
            && self.mask == other.mask
            && bits(&self.front, &other.front)
            && bits(&self.back, &other.back)
    }
}

const EMPTY: [f32; 3] = [f32::NAN; 3];

fn to_f32(p: &Vector3<f64>) -> [f32; 3] {
    [p.x as f32, p.y as f32, p.z as f32]
}

fn to_f64(p: &[f32; 3]) -> Vector3<f64> {
    Vector3::new(f64::from(p[0]), f64::from(p[1]), f64::from(p[2]))
}

impl CoordinateMap {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, mask: vec![0; n], front: vec![EMPTY; n], back: vec![EMPTY; n] }
    }

    /// Builds a map from raw buffers. Returns `None` when buffer lengths do
    /// not match `width × height`.
    pub fn from_raw(
        width: u32,
        height: u32,
        mask: Vec<u8>,
        front: Vec<[f32; 3]>,
        back: Vec<[f32; 3]>,
    ) -> Option<Self> {
        let n = width as usize * height as usize;
        (mask.len() == n && front.len() == n && back.len() == n)
            .then_some(Self { width, height, mask, front, back })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn front_raw(&self) -> &[[f32; 3]] {
        &self.front
    }

    pub fn back_raw(&self) -> &[[f32; 3]] {
        &self.back
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    #[inline]
    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask[idx] != 0
    }

    pub fn front(&self, idx: usize) -> Vector3<f64> {
        to_f64(&self.front[idx])
    }

    pub fn back(&self, idx: usize) -> Vector3<f64> {
        to_f64(&self.back[idx])
    }

    pub fn set(&mut self, idx: usize, front: &Vector3<f64>, back: &Vector3<f64>) {
        self.mask[idx] = 1;
        self.front[idx] = to_f32(front);
        self.back[idx] = to_f32(back);
    }

    pub fn clear(&mut self, idx: usize) {
        self.mask[idx] = 0;
        self.front[idx] = EMPTY;
        self.back[idx] = EMPTY;
    }

    /// True when the stored front and back values are bitwise identical.
    pub fn is_single_surface(&self, idx: usize) -> bool {
        let (f, b) = (&self.front[idx], &self.back[idx]);
        f.iter().zip(b).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Row-major indices of masked pixels.
    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m != 0).map(|(i, _)| i)
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    /// Continuous image position of a pixel centre (`u + 0.5`, `v + 0.5`).
    pub fn pixel_center(&self, idx: usize) -> Vector2<f64> {
        let w = self.width as usize;
        Vector2::new((idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5)
    }

    /// Masked pixels must carry finite coordinates.
    pub fn is_valid(&self) -> bool {
        self.masked_indices().all(|i| {
            self.front[i].iter().chain(&self.back[i]).all(|v| v.is_finite())
        })
    }
}
