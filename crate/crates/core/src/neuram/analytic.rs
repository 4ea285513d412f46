use super::{InputNormalizer, LatentInterval, LatentMaps, NeurAM, OutputNormalizer};

/// The closed-form global minimizer for `Q(x) = x1^2 + x2` on `[0,1]^2`:
/// `S(t) = t`, `E(x) = x1^2 + x2`, `D(t) = (sqrt(t/2), t/2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AnalyticParabola;

impl LatentMaps for AnalyticParabola {
    fn dim(&self) -> usize {
        2
    }

    fn encode(&self, x: &[f64]) -> f64 {
        x[0] * x[0] + x[1]
    }

    fn decode(&self, t: f64) -> Vec<f64> {
        let t = t.max(0.0);
        vec![(0.5 * t).sqrt(), 0.5 * t]
    }

    fn surrogate(&self, t: f64) -> f64 {
        t
    }

    fn encode_grad(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * x[0], 1.0]
    }

    fn decode_deriv(&self, t: f64) -> Vec<f64> {
        // unbounded at t = 0
        vec![0.25 / (0.5 * t.max(0.0)).sqrt(), 0.5]
    }

    fn surrogate_deriv(&self, _t: f64) -> f64 {
        1.0
    }
}

pub type ExactParabolaArtifact = NeurAM<AnalyticParabola>;

impl NeurAM<AnalyticParabola> {
    /// Exact parabola reduction in raw coordinates, latent interval `[0, 2]`.
    pub fn new() -> Self {
        Self {
            maps: AnalyticParabola,
            latent_interval: LatentInterval { lo: 0.0, hi: 2.0 },
            input_normalizer: InputNormalizer::identity(vec![(0.0, 1.0); 2]),
            output_normalizer: OutputNormalizer::identity(),
            report: None,
        }
    }
}

impl Default for NeurAM<AnalyticParabola> {
    fn default() -> Self {
        Self::new()
    }
}
