use crate::error::{Error, Result};
use crate::models::{DistributionKind, DistributionSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Raw coordinates are used as they are.
    Identity,
    /// `[a, b]` maps affinely onto `[-1, 1]`.
    Linear,
    /// `[log a, log b]` maps affinely onto `[-1, 1]`.
    Log,
}

/// Per-coordinate map from the raw domain box to normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    pub scaling: InputScaling,
    /// Raw domain box.
    pub bounds: Vec<(f64, f64)>,
}

impl InputNormalizer {
    pub fn identity(bounds: Vec<(f64, f64)>) -> Self {
        Self { scaling: InputScaling::Identity, bounds }
    }

    /// Linear scaling for uniform inputs, log scaling for log-uniform ones.
    pub fn for_distribution(dist: &DistributionSpec) -> Self {
        let scaling = match dist.kind {
            DistributionKind::Uniform => InputScaling::Linear,
            DistributionKind::LogUniform => InputScaling::Log,
        };
        Self { scaling, bounds: dist.bounds.clone() }
    }

    /// Box of normalized coordinates.
    pub fn normalized_bounds(&self) -> Vec<(f64, f64)> {
        match self.scaling {
            InputScaling::Identity => self.bounds.clone(),
            _ => vec![(-1.0, 1.0); self.bounds.len()],
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(&v, &(a, b))| match self.scaling {
                InputScaling::Identity => v,
                InputScaling::Linear => 2.0 * (v - a) / (b - a) - 1.0,
                InputScaling::Log => {
                    let (la, lb) = (a.ln(), b.ln());
                    2.0 * (v.ln() - la) / (lb - la) - 1.0
                }
            })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize); results are clamped to the
    /// raw box to absorb rounding at the faces.
    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.bounds)
            .map(|(&v, &(a, b))| match self.scaling {
                InputScaling::Identity => v,
                InputScaling::Linear => (a + 0.5 * (v + 1.0) * (b - a)).clamp(a, b),
                InputScaling::Log => {
                    let (la, lb) = (a.ln(), b.ln());
                    (la + 0.5 * (v + 1.0) * (lb - la)).exp().clamp(a, b)
                }
            })
            .collect()
    }
}

/// Affine map of model outputs, `y_n = (y - center) / half_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputNormalizer {
    pub center: f64,
    pub half_range: f64,
}

impl OutputNormalizer {
    pub fn identity() -> Self {
        Self { center: 0.0, half_range: 1.0 }
    }

    /// Maps the sample range onto `[-1, 1]`.
    pub fn from_sample(ys: &[f64]) -> Result<Self> {
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if ys.is_empty() {
            return Err(Error::Empty("output sample"));
        }
        if !(hi > lo) {
            return Err(Error::ConstantModel);
        }
        Ok(Self { center: 0.5 * (lo + hi), half_range: 0.5 * (hi - lo) })
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.center) / self.half_range
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        self.center + self.half_range * y
    }
}
