use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A differentiable scalar objective over a flat parameter vector.
pub trait Objective {
    fn num_params(&self) -> usize;

    /// Number of samples the objective averages over. Objectives without a
    /// sample structure report 1 and ignore `batch`.
    fn num_samples(&self) -> usize {
        1
    }

    /// Loss at `params` over `batch` (all samples when `None`); the gradient
    /// is written into `grad`, overwriting its contents.
    fn loss_and_grad(&mut self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) -> f64;
}

/// Adapts a closure `(params, grad) -> loss` into an [`Objective`].
pub struct FnObjective<F> {
    n: usize,
    f: F,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(num_params: usize, f: F) -> Self {
        Self { n: num_params, f }
    }
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn num_params(&self) -> usize {
        self.n
    }

    fn loss_and_grad(&mut self, params: &[f64], _batch: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        (self.f)(params, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Minibatch size; `None` means full-batch gradient steps.
    pub batch_size: Option<usize>,
    /// Seeds minibatch shuffling.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: None,
            seed: 0,
        }
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &FitConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Parameters with the lowest full-data loss seen during the run.
    pub params: Vec<f64>,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub final_loss: f64,
    pub best_epoch: usize,
}

fn full_loss<O: Objective>(obj: &mut O, params: &[f64], grad: &mut [f64], epoch: usize) -> Result<f64> {
    let loss = obj.loss_and_grad(params, None, grad);
    if !loss.is_finite() {
        return Err(Error::NonFiniteTraining { what: "loss", epoch });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteTraining { what: "gradient", epoch });
    }
    Ok(loss)
}

/// Minimizes `obj` with Adam starting from `init`.
///
/// The returned parameters are the best seen on the full data, so the loss
/// never exceeds the initial loss.
pub fn fit<O: Objective>(obj: &mut O, init: Vec<f64>, cfg: &FitConfig) -> Result<FitOutcome> {
    let n = obj.num_params();
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            context: "fit initial parameters",
            expected: n,
            got: init.len(),
        });
    }
    let mut params = init;
    let mut grad = vec![0.0; n];
    let mut adam = Adam::new(n, cfg);

    let initial_loss = full_loss(obj, &params, &mut grad, 0)?;
    let mut best_loss = initial_loss;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut current = initial_loss;

    let n_samples = obj.num_samples();
    let minibatch = cfg.batch_size.filter(|&b| b < n_samples);
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for epoch in 1..=cfg.epochs {
        match minibatch {
            None => {
                // gradient at the current parameters is already in `grad`
                adam.update(&mut params, &grad);
            }
            Some(bs) => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(bs) {
                    let l = obj.loss_and_grad(&params, Some(chunk), &mut grad);
                    if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                        return Err(Error::NonFiniteTraining { what: "minibatch loss", epoch });
                    }
                    adam.update(&mut params, &grad);
                }
            }
        }
        current = full_loss(obj, &params, &mut grad, epoch)?;
        if current < best_loss {
            best_loss = current;
            best_params.copy_from_slice(&params);
            best_epoch = epoch;
        }
    }

    Ok(FitOutcome {
        params: best_params,
        initial_loss,
        best_loss,
        final_loss: current,
        best_epoch,
    })
}
