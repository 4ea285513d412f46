//! Dense feed-forward networks with hand-written reverse-mode differentiation.
//!
//! A [`Network`] stores all of its parameters in one flat vector. Layer `l`
//! occupies `n_out * n_in` row-major weights followed by `n_out` biases.
//! Hidden layers use `tanh`; the last layer is affine followed by an optional
//! [`OutputTransform`].

mod optim;

pub use optim::{fit, Adam, FitConfig, FitOutcome, FnObjective, Objective};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shrink factor applied inside the box squash so that saturated `tanh`
/// values still land strictly inside the box.
const SQUASH_MARGIN: f64 = 1.0 - 1e-10;

/// `tanh` through one `exp`; libm's `tanh` is about three times slower and
/// dominates training time for small layers. Within a few ulps of `f64::tanh`.
#[inline]
pub fn tanh(z: f64) -> f64 {
    if z.abs() < 0.3 {
        z.tanh()
    } else {
        1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    /// `tanh` of each output coordinate mapped affinely onto `[lo_i, hi_i]`.
    BoxSquash { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layer_sizes: Vec<usize>,
    activation: Activation,
    output_transform: OutputTransform,
    weights: Vec<f64>,
}

/// Number of parameters of a dense network with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Cached activations of one forward pass, reused by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[l]` the tanh output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-transform output of the last layer; its tanh for squashed outputs.
    pre_out: Vec<f64>,
    out: Vec<f64>,
    g_cur: Vec<f64>,
    g_prev: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    /// `wrt_input[o][i] = d out_o / d x_i`
    pub wrt_input: Vec<Vec<f64>>,
    /// `wrt_weights[o][k] = d out_o / d w_k`
    pub wrt_weights: Vec<Vec<f64>>,
}

impl Network {
    /// Network with all parameters set to zero.
    pub fn zeros(
        layer_sizes: Vec<usize>,
        output_transform: OutputTransform,
    ) -> Result<Self> {
        let n = param_count(&layer_sizes);
        Self::from_weights(layer_sizes, output_transform, vec![0.0; n])
    }

    pub fn from_weights(
        layer_sizes: Vec<usize>,
        output_transform: OutputTransform,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Architecture(
                "need at least input and output sizes".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Architecture("layer sizes must be positive".into()));
        }
        let expected = param_count(&layer_sizes);
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "network weights",
                expected,
                got: weights.len(),
            });
        }
        if let OutputTransform::BoxSquash { lo, hi } = &output_transform {
            let n_out = *layer_sizes.last().unwrap();
            if lo.len() != n_out || hi.len() != n_out {
                return Err(Error::Architecture(format!(
                    "box bounds must have {n_out} entries"
                )));
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(Error::Architecture("box bounds need lo < hi".into()));
            }
        }
        Ok(Self {
            layer_sizes,
            activation: Activation::Tanh,
            output_transform,
            weights,
        })
    }

    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn glorot(
        layer_sizes: Vec<usize>,
        output_transform: OutputTransform,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::glorot_with(layer_sizes, output_transform, &mut rng)
    }

    pub fn glorot_with<R: Rng>(
        layer_sizes: Vec<usize>,
        output_transform: OutputTransform,
        rng: &mut R,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(param_count(&layer_sizes));
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                weights.push(rng.random_range(-limit..limit));
            }
            weights.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self::from_weights(layer_sizes, output_transform, weights)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_transform(&self) -> &OutputTransform {
        &self.output_transform
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "network weights",
                expected: self.weights.len(),
                got: weights.len(),
            });
        }
        self.weights.copy_from_slice(weights);
        Ok(())
    }

    pub fn new_tape(&self) -> Tape {
        let n_layers = self.layer_sizes.len() - 1;
        let widest = *self.layer_sizes.iter().max().unwrap();
        Tape {
            acts: self.layer_sizes[..n_layers]
                .iter()
                .map(|&n| vec![0.0; n])
                .collect(),
            pre_out: vec![0.0; self.output_dim()],
            out: vec![0.0; self.output_dim()],
            g_cur: vec![0.0; widest],
            g_prev: vec![0.0; widest],
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut tape = self.new_tape();
        self.forward_unchecked(x, &mut tape);
        Ok(tape.out)
    }

    /// Scalar output of a network with one output.
    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64> {
        debug_assert_eq!(self.output_dim(), 1);
        Ok(self.forward(x)?[0])
    }

    /// Forward pass recording activations on `tape`. Input length must match.
    pub fn forward_taped<'t>(&self, x: &[f64], tape: &'t mut Tape) -> &'t [f64] {
        assert_eq!(x.len(), self.input_dim(), "network input dimension");
        self.forward_unchecked(x, tape);
        &tape.out
    }

    fn forward_unchecked(&self, x: &[f64], tape: &mut Tape) {
        tape.acts[0].copy_from_slice(x);
        let n_layers = self.layer_sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[off..off + n_in * n_out];
            let b = &self.weights[off + n_in * n_out..off + (n_in + 1) * n_out];
            off += (n_in + 1) * n_out;
            let last = l + 1 == n_layers;
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let input = &head[l];
            let dst: &mut [f64] = if last { &mut tape.pre_out } else { &mut tail[0] };
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                dst[o] = if last { z } else { tanh(z) };
            }
        }
        match &self.output_transform {
            OutputTransform::Identity => tape.out.copy_from_slice(&tape.pre_out),
            OutputTransform::BoxSquash { lo, hi } => {
                for i in 0..tape.out.len() {
                    let mid = 0.5 * (lo[i] + hi[i]);
                    let half = 0.5 * (hi[i] - lo[i]);
                    let th = tanh(tape.pre_out[i]);
                    tape.pre_out[i] = th;
                    tape.out[i] = mid + half * SQUASH_MARGIN * th;
                }
            }
        }
    }

    /// Reverse pass for the forward pass stored on `tape`.
    ///
    /// Accumulates `grad_out^T d out / d w` into `grad_w` and, when given,
    /// writes `grad_out^T d out / d x` into `grad_x`.
    pub fn backward(
        &self,
        tape: &mut Tape,
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_x: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(grad_w.len(), self.weights.len());
        let n_layers = self.layer_sizes.len() - 1;
        let n_final = self.output_dim();
        let Tape {
            acts,
            pre_out,
            g_cur,
            g_prev,
            ..
        } = tape;
        match &self.output_transform {
            OutputTransform::Identity => g_cur[..n_final].copy_from_slice(grad_out),
            OutputTransform::BoxSquash { lo, hi } => {
                for i in 0..n_final {
                    let th = pre_out[i];
                    let half = 0.5 * (hi[i] - lo[i]);
                    g_cur[i] = grad_out[i] * half * SQUASH_MARGIN * (1.0 - th * th);
                }
            }
        }
        let mut off = self.weights.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            off -= (n_in + 1) * n_out;
            let w = &self.weights[off..off + n_in * n_out];
            let (gw, gb) = grad_w[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            let input = &acts[l];
            g_prev[..n_in].fill(0.0);
            for o in 0..n_out {
                let g = g_cur[o];
                gb[o] += g;
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += g * input[i];
                    g_prev[i] += g * row[i];
                }
            }
            if l > 0 {
                for i in 0..n_in {
                    g_prev[i] *= 1.0 - input[i] * input[i];
                }
            }
            std::mem::swap(g_cur, g_prev);
        }
        if let Some(gx) = grad_x {
            gx.copy_from_slice(&g_cur[..self.input_dim()]);
        }
    }

    /// Jacobians of the output with respect to the input and to the weights.
    pub fn grad(&self, x: &[f64]) -> Result<Jacobians> {
        self.check_input(x)?;
        let mut tape = self.new_tape();
        self.forward_unchecked(x, &mut tape);
        let n_out = self.output_dim();
        let mut seed = vec![0.0; n_out];
        let mut wrt_input = Vec::with_capacity(n_out);
        let mut wrt_weights = Vec::with_capacity(n_out);
        for o in 0..n_out {
            seed.fill(0.0);
            seed[o] = 1.0;
            let mut gw = vec![0.0; self.weights.len()];
            let mut gx = vec![0.0; self.input_dim()];
            self.backward(&mut tape, &seed, &mut gw, Some(&mut gx));
            wrt_input.push(gx);
            wrt_weights.push(gw);
        }
        Ok(Jacobians {
            wrt_input,
            wrt_weights,
        })
    }

    /// Jacobian with respect to the input only, `[out][in]`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut tape = self.new_tape();
        self.forward_unchecked(x, &mut tape);
        let n_out = self.output_dim();
        let mut seed = vec![0.0; n_out];
        let mut gw = vec![0.0; self.weights.len()];
        let mut rows = Vec::with_capacity(n_out);
        for o in 0..n_out {
            seed.fill(0.0);
            seed[o] = 1.0;
            let mut gx = vec![0.0; self.input_dim()];
            self.backward(&mut tape, &seed, &mut gw, Some(&mut gx));
            rows.push(gx);
        }
        Ok(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Network = serde_json::from_str(s)?;
        Self::from_weights(raw.layer_sizes, raw.output_transform, raw.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_layout() {
        assert_eq!(param_count(&[2, 4, 1]), 3 * 4 + 5);
        let net = Network::zeros(vec![3, 5, 5, 2], OutputTransform::Identity).unwrap();
        assert_eq!(net.num_params(), 4 * 5 + 6 * 5 + 6 * 2);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(vec![2, 4, 1], OutputTransform::Identity).unwrap();
        assert_eq!(net.forward(&[0.3, -7.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn identity_layer() {
        let net = Network::from_weights(
            vec![2, 2],
            OutputTransform::Identity,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(net.forward(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
        let jac = net.grad(&[0.3, 0.7]).unwrap();
        assert_eq!(jac.wrt_input, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn constant_network_has_zero_input_gradient() {
        // the output layer reads nothing from the hidden layer
        let mut net = Network::glorot(vec![3, 4, 1], OutputTransform::Identity, 5).unwrap();
        let mut w = net.weights().to_vec();
        let n = w.len();
        w[n - 5..n - 1].fill(0.0);
        w[n - 1] = 2.5;
        net.set_weights(&w).unwrap();
        let jac = net.input_jacobian(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(jac, vec![vec![0.0; 3]]);
        assert_eq!(net.eval_scalar(&[0.1, 0.2, 0.3]).unwrap(), 2.5);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Network::zeros(vec![2, 1], OutputTransform::Identity).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1, .. })
        ));
        assert!(net.grad(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn rejects_bad_architecture() {
        assert!(Network::zeros(vec![2], OutputTransform::Identity).is_err());
        assert!(Network::zeros(vec![2, 0, 1], OutputTransform::Identity).is_err());
        assert!(Network::from_weights(vec![2, 1], OutputTransform::Identity, vec![0.0; 2]).is_err());
        let bad_box = OutputTransform::BoxSquash { lo: vec![1.0], hi: vec![1.0] };
        assert!(Network::zeros(vec![1, 1], bad_box).is_err());
    }

    #[test]
    fn saturated_squash_stays_inside_box() {
        let t = OutputTransform::BoxSquash { lo: vec![-1.0, 0.0], hi: vec![1.0, 3.0] };
        let net = Network::from_weights(vec![1, 2], t, vec![100.0, -100.0, 0.0, 0.0]).unwrap();
        for x in [-1e3, 1e3] {
            let y = net.forward(&[x]).unwrap();
            assert!(y[0] > -1.0 && y[0] < 1.0);
            assert!(y[1] > 0.0 && y[1] < 3.0);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = OutputTransform::BoxSquash { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        let net = Network::glorot(vec![1, 7, 2], t, 99).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(net, back);
        for (a, b) in net.weights().iter().zip(back.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
