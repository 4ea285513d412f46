//! Neural active manifolds: a one-dimensional encoder/decoder pair trained
//! jointly with a surrogate on the latent coordinate.

mod analytic;
mod normalize;
mod train;

pub use analytic::{AnalyticParabola, ExactParabolaArtifact};
pub use normalize::{InputNormalizer, InputScaling, OutputNormalizer};
pub use train::{
    train_neuram, train_on_data, Architecture, NeurAMObjective, SearchConfig, TrainConfig, TrialRecord,
};

use crate::error::{Error, Result};
use crate::models::{check_box, ModelSpec};
use crate::nn::{Network, OutputTransform};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Encoder, decoder and latent surrogate, all in normalized coordinates.
pub trait LatentMaps {
    fn dim(&self) -> usize;
    fn encode(&self, x: &[f64]) -> f64;
    fn decode(&self, t: f64) -> Vec<f64>;
    fn surrogate(&self, t: f64) -> f64;
    /// Gradient of the encoder with respect to its input.
    fn encode_grad(&self, x: &[f64]) -> Vec<f64>;
    /// Derivative of the decoder with respect to the latent coordinate.
    fn decode_deriv(&self, t: f64) -> Vec<f64>;
    fn surrogate_deriv(&self, t: f64) -> f64;
}

/// The three trained networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetTriple {
    pub encoder: Network,
    pub decoder: Network,
    pub surrogate: Network,
}

impl NetTriple {
    pub fn new(encoder: Network, decoder: Network, surrogate: Network) -> Result<Self> {
        let d = encoder.input_dim();
        let shape = |net: &Network, i: usize, o: usize, what: &'static str| {
            if net.input_dim() != i || net.output_dim() != o {
                Err(Error::Architecture(format!(
                    "{what} must map {i} -> {o}, got {} -> {}",
                    net.input_dim(),
                    net.output_dim()
                )))
            } else {
                Ok(())
            }
        };
        shape(&encoder, d, 1, "encoder")?;
        shape(&decoder, 1, d, "decoder")?;
        shape(&surrogate, 1, 1, "surrogate")?;
        Ok(Self { encoder, decoder, surrogate })
    }

    /// Decoder box for normalized coordinates.
    pub fn unit_box(d: usize) -> OutputTransform {
        OutputTransform::BoxSquash { lo: vec![-1.0; d], hi: vec![1.0; d] }
    }
}

impl LatentMaps for NetTriple {
    fn dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn encode(&self, x: &[f64]) -> f64 {
        self.encoder.forward(x).expect("encoder input dimension")[0]
    }

    fn decode(&self, t: f64) -> Vec<f64> {
        self.decoder.forward(&[t]).expect("decoder input dimension")
    }

    fn surrogate(&self, t: f64) -> f64 {
        self.surrogate.forward(&[t]).expect("surrogate input dimension")[0]
    }

    fn encode_grad(&self, x: &[f64]) -> Vec<f64> {
        self.encoder
            .input_jacobian(x)
            .expect("encoder input dimension")
            .swap_remove(0)
    }

    fn decode_deriv(&self, t: f64) -> Vec<f64> {
        self.decoder
            .input_jacobian(&[t])
            .expect("decoder input dimension")
            .into_iter()
            .map(|row| row[0])
            .collect()
    }

    fn surrogate_deriv(&self, t: f64) -> f64 {
        self.surrogate.input_jacobian(&[t]).expect("surrogate input dimension")[0][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentInterval {
    pub lo: f64,
    pub hi: f64,
}

impl LatentInterval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideLatentInterval { t, lo: self.lo, hi: self.hi })
        }
    }

    /// `n` uniformly spaced points with exact endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.lo];
        }
        let mut g: Vec<f64> = (0..n)
            .map(|k| self.lo + self.width() * k as f64 / (n - 1) as f64)
            .collect();
        g[n - 1] = self.hi;
        g
    }
}

/// Minimum and maximum of the encoder over `samples`.
pub fn latent_interval<F>(encode: F, samples: &[Vec<f64>]) -> Result<LatentInterval>
where
    F: Fn(&[f64]) -> f64,
{
    if samples.is_empty() {
        return Err(Error::Empty("latent interval samples"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (index, x) in samples.iter().enumerate() {
        let t = encode(x);
        if !t.is_finite() {
            return Err(Error::NonFiniteSample { index });
        }
        lo = lo.min(t);
        hi = hi.max(t);
    }
    Ok(LatentInterval { lo, hi })
}

/// The three mean squared terms of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// `Q(x)` against `S(E(D(E(x))))`.
    pub projected_surrogate: f64,
    /// `Q(x)` against `S(E(x))`.
    pub surrogate: f64,
    /// `D(E(x))` against `D(E(D(E(x))))`, summed over coordinates.
    pub reprojection: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.projected_surrogate + self.surrogate + self.reprojection
    }
}

/// Evaluates the three-term loss of `maps` on `(x, Q(x))` pairs.
pub fn neuram_loss<M: LatentMaps + ?Sized>(maps: &M, batch: &[(Vec<f64>, f64)]) -> Result<LossTerms> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let d = maps.dim();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (index, (x, y)) in batch.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { context: "loss batch input", expected: d, got: x.len() });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        let t = maps.encode(x);
        let xt = maps.decode(t);
        let tt = maps.encode(&xt);
        let xtt = maps.decode(tt);
        a += (y - maps.surrogate(tt)).powi(2);
        b += (y - maps.surrogate(t)).powi(2);
        c += xt.iter().zip(&xtt).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    }
    let n = batch.len() as f64;
    Ok(LossTerms { projected_surrogate: a / n, surrogate: b / n, reprojection: c / n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_samples: usize,
    pub seed: u64,
    pub epochs: usize,
    pub architecture: Architecture,
    pub final_loss: LossTerms,
    pub initial_loss: f64,
    pub best_epoch: usize,
    /// Hyperparameter trials, empty when the architecture was fixed.
    pub trials: Vec<TrialRecord>,
}

/// A one-dimensional reduction with its normalization metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeurAM<M> {
    pub maps: M,
    pub latent_interval: LatentInterval,
    pub input_normalizer: InputNormalizer,
    pub output_normalizer: OutputNormalizer,
    pub report: Option<TrainingReport>,
}

pub type NeurAMArtifact = NeurAM<NetTriple>;

impl<M: LatentMaps> NeurAM<M> {
    pub fn dim(&self) -> usize {
        self.maps.dim()
    }

    /// Raw domain box.
    pub fn domain(&self) -> &[(f64, f64)] {
        &self.input_normalizer.bounds
    }

    fn check_raw(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "raw input", expected: self.dim(), got: x.len() });
        }
        check_box(self.domain(), x)
    }

    /// Latent coordinate of a raw input.
    pub fn encode_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_raw(x)?;
        Ok(self.maps.encode(&self.input_normalizer.normalize(x)))
    }

    /// Raw point on the manifold at latent coordinate `t`.
    pub fn decode_raw(&self, t: f64) -> Vec<f64> {
        self.input_normalizer.denormalize(&self.maps.decode(t))
    }

    /// Projection `D(E(x))` of a raw input onto the manifold, in raw units.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.encode_raw(x)?;
        Ok(self.decode_raw(t))
    }

    /// De-normalized `S(E(x))`.
    pub fn surrogate_eval(&self, x: &[f64]) -> Result<f64> {
        let t = self.encode_raw(x)?;
        Ok(self.output_normalizer.denormalize(self.maps.surrogate(t)))
    }

    /// De-normalized latent surrogate `S(t)`.
    pub fn latent_surrogate(&self, t: f64) -> f64 {
        self.output_normalizer.denormalize(self.maps.surrogate(t))
    }
}

impl NeurAMArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(s)?;
        // re-validate network shapes
        let maps = NetTriple::new(
            Network::from_weights(
                a.maps.encoder.layer_sizes().to_vec(),
                a.maps.encoder.output_transform().clone(),
                a.maps.encoder.weights().to_vec(),
            )?,
            Network::from_weights(
                a.maps.decoder.layer_sizes().to_vec(),
                a.maps.decoder.output_transform().clone(),
                a.maps.decoder.weights().to_vec(),
            )?,
            Network::from_weights(
                a.maps.surrogate.layer_sizes().to_vec(),
                a.maps.surrogate.output_transform().clone(),
                a.maps.surrogate.weights().to_vec(),
            )?,
        )?;
        if a.input_normalizer.bounds.len() != maps.dim() {
            return Err(Error::DimensionMismatch {
                context: "artifact normalizer",
                expected: maps.dim(),
                got: a.input_normalizer.bounds.len(),
            });
        }
        Ok(Self { maps, ..a })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Mean absolute and mean squared values of the reduction error
/// `e1 = Q(x) - Q(D(E(x)))` and the surrogate error `e2 = Q(x) - Q_S(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionErrors {
    pub mae_e1: f64,
    pub mse_e1: f64,
    pub mae_e2: f64,
    pub mse_e2: f64,
}

impl ReductionErrors {
    /// Same statistics with errors measured in normalized output units.
    pub fn scaled(&self, half_range: f64) -> Self {
        Self {
            mae_e1: self.mae_e1 / half_range,
            mse_e1: self.mse_e1 / (half_range * half_range),
            mae_e2: self.mae_e2 / half_range,
            mse_e2: self.mse_e2 / (half_range * half_range),
        }
    }
}

/// Errors on `test`; `e1` re-evaluates the true model at projected points.
pub fn reduction_errors<M: LatentMaps>(
    artifact: &NeurAM<M>,
    model: &ModelSpec,
    test: &[Vec<f64>],
) -> Result<ReductionErrors> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut acc = [0.0; 4];
    for (index, x) in test.iter().enumerate() {
        let q = model.eval(x).map_err(|e| Error::Evaluation { index, source: Box::new(e) })?;
        let proj = artifact.project(x)?;
        let q_proj = model.eval(&proj)?;
        let qs = artifact.surrogate_eval(x)?;
        let (e1, e2) = (q - q_proj, q - qs);
        acc[0] += e1.abs();
        acc[1] += e1 * e1;
        acc[2] += e2.abs();
        acc[3] += e2 * e2;
    }
    let n = test.len() as f64;
    Ok(ReductionErrors { mae_e1: acc[0] / n, mse_e1: acc[1] / n, mae_e2: acc[2] / n, mse_e2: acc[3] / n })
}
