//! Loss terms for training a network that predicts a mask plus front/back
//! HCCE codes.
//!
//! Everything here is stateless: histograms are rebuilt from whatever batch
//! is passed in. Level weights come from per-level binary error rates `r`
//! through the intensity `exp(σ · min(r, 0.5 − r))`, which peaks at
//! `r = 0.25` and drops below one once a level is mostly wrong.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{continuous_to_binary, BinaryCode, ContinuousCode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("cannot build an error histogram from zero pixels")]
    EmptyHistogram,
    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },
    #[error("invalid loss parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Sharpness of the intensity curve.
    pub sigma: f64,
    /// Weight of the hierarchical terms relative to the mask term.
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { sigma: 4.0, gamma: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LossError::Parameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(LossError::Parameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Per-level error rates, intensities and normalized weights for one
/// coordinate component of one surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelErrorHistogram {
    pub error_rates: Vec<f64>,
    pub intensities: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LevelErrorHistogram {
    pub fn from_error_rates(error_rates: Vec<f64>, sigma: f64) -> Self {
        let intensities: Vec<f64> =
            error_rates.iter().map(|&r| histogram_intensity(r, sigma)).collect();
        let weights = level_weights(&intensities);
        Self { error_rates, intensities, weights }
    }

    pub fn from_codes(
        pred: &[ContinuousCode],
        gt_bits: &[BinaryCode],
        sigma: f64,
    ) -> Result<Self, LossError> {
        Ok(Self::from_error_rates(level_error_rates(pred, gt_bits)?, sigma))
    }
}

/// Fraction of pixels whose binarized prediction disagrees with the ground
/// truth bit, per level.
pub fn level_error_rates(
    pred: &[ContinuousCode],
    gt_bits: &[BinaryCode],
) -> Result<Vec<f64>, LossError> {
    if pred.len() != gt_bits.len() {
        return Err(LossError::Shape { left: pred.len(), right: gt_bits.len() });
    }
    let first = pred.first().ok_or(LossError::EmptyHistogram)?;
    let levels = first.len();
    let mut wrong = vec![0usize; levels];
    for (p, g) in pred.iter().zip(gt_bits) {
        if p.len() != levels || g.len() != levels {
            return Err(LossError::Shape { left: levels, right: p.len().max(g.len()) });
        }
        let bits = continuous_to_binary(p.levels());
        for (i, (a, b)) in bits.bits().iter().zip(g.bits()).enumerate() {
            if a != b {
                wrong[i] += 1;
            }
        }
    }
    let n = pred.len() as f64;
    Ok(wrong.into_iter().map(|w| w as f64 / n).collect())
}

/// `exp(σ · min(r, 0.5 − r))`.
pub fn histogram_intensity(r: f64, sigma: f64) -> f64 {
    (sigma * r.min(0.5 - r)).exp()
}

/// Normalizes intensities to sum to one.
pub fn level_weights(intensities: &[f64]) -> Vec<f64> {
    let total: f64 = intensities.iter().sum();
    intensities.iter().map(|h| h / total).collect()
}

/// `Σ_i w_i · Σ_j |C_ij − C̃_ij|` over levels `i` and masked pixels `j`.
pub fn hierarchical_component_loss(
    pred: &[ContinuousCode],
    gt: &[ContinuousCode],
    weights: &[f64],
) -> Result<f64, LossError> {
    if pred.len() != gt.len() {
        return Err(LossError::Shape { left: pred.len(), right: gt.len() });
    }
    let levels = weights.len();
    let mut per_level = vec![0.0; levels];
    for (p, g) in pred.iter().zip(gt) {
        if p.len() != levels || g.len() != levels {
            return Err(LossError::Shape { left: levels, right: p.len().max(g.len()) });
        }
        for (acc, (a, b)) in per_level.iter_mut().zip(p.levels().iter().zip(g.levels())) {
            *acc += (a - b).abs();
        }
    }
    Ok(per_level.iter().zip(weights).map(|(l, w)| l * w).sum())
}

/// Summed L1 distance between predicted and ground-truth mask values.
pub fn mask_loss(pred: &[f64], gt: &[u8]) -> Result<f64, LossError> {
    if pred.len() != gt.len() {
        return Err(LossError::Shape { left: pred.len(), right: gt.len() });
    }
    Ok(pred.iter().zip(gt).map(|(p, &g)| (p - f64::from(g)).abs()).sum())
}

/// Pixels with a positive mask output count as object.
pub fn mask_from_logits(pred: &[f64]) -> Vec<bool> {
    pred.iter().map(|&m| m > 0.0).collect()
}

pub fn total_loss(mask_l: f64, front_l: f64, back_l: f64, gamma: f64) -> f64 {
    mask_l + gamma * (front_l + back_l)
}

/// Continuous codes of one surface, split by coordinate component.
#[derive(Debug, Clone, Default)]
pub struct SurfaceCodes {
    pub x: Vec<ContinuousCode>,
    pub y: Vec<ContinuousCode>,
    pub z: Vec<ContinuousCode>,
}

impl SurfaceCodes {
    pub fn components(&self) -> [&[ContinuousCode]; 3] {
        [&self.x, &self.y, &self.z]
    }
}

/// How many error histograms drive the level weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    /// One histogram per surface and coordinate component (six in total).
    #[default]
    PerComponent,
    /// A single histogram pooled over all six streams; kept as a baseline.
    Single,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchicalLossBreakdown {
    /// `[front, back] × [x, y, z]`.
    pub histograms: [[LevelErrorHistogram; 3]; 2],
    /// Per-surface component losses, `[front, back] × [x, y, z]`.
    pub component_losses: [[f64; 3]; 2],
    pub front: f64,
    pub back: f64,
}

/// Computes the six histograms and the weighted front/back losses. Ground
/// truth bits are obtained by binarizing the ground-truth continuous codes.
pub fn hierarchical_loss(
    pred_front: &SurfaceCodes,
    gt_front: &SurfaceCodes,
    pred_back: &SurfaceCodes,
    gt_back: &SurfaceCodes,
    sigma: f64,
    mode: HistogramMode,
) -> Result<HierarchicalLossBreakdown, LossError> {
    let surfaces = [(pred_front, gt_front), (pred_back, gt_back)];
    let mut rates: Vec<Vec<Vec<f64>>> = Vec::with_capacity(2);
    let mut counts: Vec<Vec<usize>> = Vec::with_capacity(2);
    for (pred, gt) in surfaces {
        let mut surface_rates = Vec::with_capacity(3);
        let mut surface_counts = Vec::with_capacity(3);
        for (p, g) in pred.components().into_iter().zip(gt.components()) {
            let bits: Vec<BinaryCode> =
                g.iter().map(|c| continuous_to_binary(c.levels())).collect();
            surface_rates.push(level_error_rates(p, &bits)?);
            surface_counts.push(p.len());
        }
        rates.push(surface_rates);
        counts.push(surface_counts);
    }

    if mode == HistogramMode::Single {
        let levels = rates[0][0].len();
        let total: usize = counts.iter().flatten().sum();
        let mut pooled = vec![0.0; levels];
        for (sr, sc) in rates.iter().zip(&counts) {
            for (r, &n) in sr.iter().zip(sc) {
                for (acc, v) in pooled.iter_mut().zip(r) {
                    *acc += v * n as f64;
                }
            }
        }
        pooled.iter_mut().for_each(|v| *v /= total as f64);
        for sr in rates.iter_mut() {
            for r in sr.iter_mut() {
                *r = pooled.clone();
            }
        }
    }

    let histograms: [[LevelErrorHistogram; 3]; 2] = std::array::from_fn(|s| {
        std::array::from_fn(|c| LevelErrorHistogram::from_error_rates(rates[s][c].clone(), sigma))
    });
    let mut component_losses = [[0.0; 3]; 2];
    for (s, (pred, gt)) in surfaces.iter().enumerate() {
        for (c, (p, g)) in pred.components().into_iter().zip(gt.components()).enumerate() {
            component_losses[s][c] = hierarchical_component_loss(p, g, &histograms[s][c].weights)?;
        }
    }
    let front = component_losses[0].iter().sum();
    let back = component_losses[1].iter().sum();
    Ok(HierarchicalLossBreakdown { histograms, component_losses, front, back })
}
