use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::codec::{CodecError, HierarchicalCodec};
use crate::loss::{LevelErrorHistogram, LossConfig};

/// Every stage of the codec applied to one value.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecInspection {
    pub x: f64,
    pub hbce_bits: Vec<u8>,
    pub hcce_levels: Vec<f64>,
    pub converted_bits: Vec<u8>,
    pub decoded: f64,
}

impl CodecInspection {
    pub fn round_trip_error(&self) -> f64 {
        (self.decoded - self.x).abs()
    }
}

pub fn codec_inspect(x: f64, codec: &HierarchicalCodec) -> Result<CodecInspection, CodecError> {
    let hbce = codec.hbce_encode(x)?;
    let hcce = codec.hcce_encode(x)?;
    let converted = codec.hcce_to_binary(&hcce)?;
    Ok(CodecInspection {
        x,
        hbce_bits: hbce.bits().to_vec(),
        hcce_levels: hcce.levels().to_vec(),
        converted_bits: converted.bits().to_vec(),
        decoded: codec.binary_decode(&converted)?,
    })
}

impl fmt::Display for CodecInspection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "x = {}", self.x)?;
        writeln!(f, "{:>5}  {:>4}  {:>12}  {:>9}", "level", "hbce", "hcce", "converted")?;
        for i in 0..self.hcce_levels.len() {
            writeln!(
                f,
                "{:>5}  {:>4}  {:>12.9}  {:>9}",
                i + 1,
                self.hbce_bits[i],
                self.hcce_levels[i],
                self.converted_bits[i]
            )?;
        }
        writeln!(f, "decoded          = {}", self.decoded)?;
        writeln!(f, "round-trip error = {:e}", self.round_trip_error())?;
        write!(f, "bits agree       = {}", self.hbce_bits == self.converted_bits)
    }
}

/// Per-epoch level error rates for the loss-weight demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSchedule {
    /// Overrides the default intensity sharpness.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// One row of per-level error rates per epoch.
    pub epochs: Vec<Vec<f64>>,
}

impl LossSchedule {
    /// Coarse levels are learned first: level `i`'s error rate falls from
    /// 0.5 along a logistic curve centred later for finer levels.
    pub fn synthetic(epochs: usize, levels: usize) -> Self {
        let rows = (0..epochs)
            .map(|e| {
                let t = if epochs > 1 { e as f64 / (epochs - 1) as f64 } else { 0.0 };
                (1..=levels)
                    .map(|i| {
                        let centre = i as f64 / (levels + 1) as f64;
                        0.5 / (1.0 + (-12.0 * (centre - t)).exp())
                    })
                    .collect()
            })
            .collect();
        Self { sigma: None, epochs: rows }
    }

    /// `builtin` / `builtin:<epochs>` or a JSON file.
    pub fn load(spec: &str) -> Result<Self, ExperimentError> {
        if spec == "builtin" {
            return Ok(Self::synthetic(10, 8));
        }
        if let Some(n) = spec.strip_prefix("builtin:") {
            let epochs = n
                .parse::<usize>()
                .ok()
                .filter(|&e| e > 0)
                .ok_or_else(|| ExperimentError::Config(format!("bad epoch count in `{spec}`")))?;
            return Ok(Self::synthetic(epochs, 8));
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let s: Self =
            serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_path_buf(), source })?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let first = self.epochs.first().ok_or_else(|| ExperimentError::Config("schedule has no epochs".into()))?;
        if first.is_empty() || self.epochs.iter().any(|r| r.len() != first.len()) {
            return Err(ExperimentError::Config("every epoch needs the same non-zero number of levels".into()));
        }
        if self.epochs.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(ExperimentError::Config("error rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Level weights per epoch as a whitespace table and as CSV.
pub fn loss_demo(schedule: &LossSchedule, loss: &LossConfig) -> Result<(String, String), ExperimentError> {
    schedule.validate()?;
    let sigma = schedule.sigma.unwrap_or(loss.sigma);
    LossConfig { sigma, ..*loss }.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
    let levels = schedule.epochs[0].len();
    let mut table = format!("sigma = {sigma}\nepoch");
    let mut csv = String::from("epoch");
    for i in 1..=levels {
        let _ = write!(table, "  {:>6}", format!("w{i}"));
        let _ = write!(csv, ",r{i}");
    }
    for i in 1..=levels {
        let _ = write!(csv, ",w{i}");
    }
    table.push('\n');
    csv.push('\n');
    for (e, rates) in schedule.epochs.iter().enumerate() {
        let h = LevelErrorHistogram::from_error_rates(rates.clone(), sigma);
        let _ = write!(table, "{e:>5}");
        let _ = write!(csv, "{e}");
        for w in &h.weights {
            let _ = write!(table, "  {w:>6.4}");
        }
        for v in h.error_rates.iter().chain(&h.weights) {
            let _ = write!(csv, ",{v}");
        }
        table.push('\n');
        csv.push('\n');
    }
    Ok((table, csv))
}
