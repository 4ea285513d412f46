use super::{
    latent_interval, neuram_loss, InputNormalizer, LatentMaps, NetTriple, NeurAMArtifact, OutputNormalizer,
    TrainingReport,
};
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::nn::{fit, FitConfig, Network, Objective, OutputTransform, Tape};
use crate::util::mix_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hidden layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub surrogate_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![10, 10],
            decoder_hidden: vec![10, 10],
            surrogate_hidden: vec![10, 10],
        }
    }
}

impl Architecture {
    pub fn uniform(layers: usize, width: usize) -> Self {
        Self {
            encoder_hidden: vec![width; layers],
            decoder_hidden: vec![width; layers],
            surrogate_hidden: vec![width; layers],
        }
    }

    fn sizes(hidden: &[usize], n_in: usize, n_out: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(hidden.len() + 2);
        s.push(n_in);
        s.extend_from_slice(hidden);
        s.push(n_out);
        s
    }

    /// Glorot-initialized networks for inputs of dimension `d`.
    pub fn init(&self, d: usize, seed: u64) -> Result<NetTriple> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetTriple::new(
            Network::glorot_with(Self::sizes(&self.encoder_hidden, d, 1), OutputTransform::Identity, &mut rng)?,
            Network::glorot_with(Self::sizes(&self.decoder_hidden, 1, d), NetTriple::unit_box(d), &mut rng)?,
            Network::glorot_with(Self::sizes(&self.surrogate_hidden, 1, 1), OutputTransform::Identity, &mut rng)?,
        )
    }

    fn random<R: Rng>(rng: &mut R, max_layers: usize, max_width: usize) -> Self {
        let mut pick = || {
            let layers = rng.random_range(1..=max_layers);
            let width = rng.random_range(1..=max_width);
            vec![width; layers]
        };
        Self { encoder_hidden: pick(), decoder_hidden: pick(), surrogate_hidden: pick() }
    }
}

/// Random search over network sizes, selected by held-out loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of random trials; zero trains the fixed architecture directly.
    pub trials: usize,
    /// Epochs per trial; defaults to the full training epochs.
    pub trial_epochs: Option<usize>,
    pub validation_fraction: f64,
    pub max_layers: usize,
    pub max_width: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { trials: 30, trial_epochs: None, validation_fraction: 0.2, max_layers: 4, max_width: 16 }
    }
}

impl SearchConfig {
    pub fn disabled() -> Self {
        Self { trials: 0, ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub fit: FitConfig,
    /// Used as is when the search is disabled.
    pub architecture: Architecture,
    pub search: SearchConfig,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub architecture: Architecture,
    /// `None` when the trial diverged.
    pub validation_loss: Option<f64>,
}

/// The three-term loss as a function of the concatenated parameters of
/// encoder, decoder and surrogate, with its exact gradient.
pub struct NeurAMObjective {
    nets: NetTriple,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    tapes: [Tape; 6],
    xt: Vec<f64>,
    g_xt: Vec<f64>,
    g_xtt: Vec<f64>,
    diff: Vec<f64>,
}

impl NeurAMObjective {
    /// `xs` and `ys` must already be normalized.
    pub fn new(template: NetTriple, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid("objective needs matching, non-empty inputs and outputs"));
        }
        let d = template.dim();
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { context: "objective input", expected: d, got: x.len() });
        }
        let tapes = [
            template.encoder.new_tape(),
            template.decoder.new_tape(),
            template.encoder.new_tape(),
            template.decoder.new_tape(),
            template.surrogate.new_tape(),
            template.surrogate.new_tape(),
        ];
        Ok(Self {
            nets: template,
            xs,
            ys,
            tapes,
            xt: vec![0.0; d],
            g_xt: vec![0.0; d],
            g_xtt: vec![0.0; d],
            diff: vec![0.0; d],
        })
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.nets.encoder.weights().to_vec();
        p.extend_from_slice(self.nets.decoder.weights());
        p.extend_from_slice(self.nets.surrogate.weights());
        p
    }

    fn load(&mut self, params: &[f64]) {
        let ne = self.nets.encoder.num_params();
        let nd = self.nets.decoder.num_params();
        self.nets.encoder.set_weights(&params[..ne]).expect("encoder params");
        self.nets.decoder.set_weights(&params[ne..ne + nd]).expect("decoder params");
        self.nets.surrogate.set_weights(&params[ne + nd..]).expect("surrogate params");
    }

    /// Networks carrying `params`.
    pub fn networks(&mut self, params: &[f64]) -> NetTriple {
        self.load(params);
        self.nets.clone()
    }

    fn accumulate(&mut self, i: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let ne = self.nets.encoder.num_params();
        let nd = self.nets.decoder.num_params();
        let (ge, rest) = grad.split_at_mut(ne);
        let (gd, gs) = rest.split_at_mut(nd);
        let Self { nets, xs, ys, tapes, xt, g_xt, g_xtt, diff } = self;
        let [te0, td0, te1, td1, ts0, ts1] = tapes;
        let (enc, dec, sur) = (&nets.encoder, &nets.decoder, &nets.surrogate);
        let y = ys[i];

        let t = enc.forward_taped(&xs[i], te0)[0];
        xt.copy_from_slice(dec.forward_taped(&[t], td0));
        let tt = enc.forward_taped(xt, te1)[0];
        let xtt = dec.forward_taped(&[tt], td1);
        let mut reproj = 0.0;
        for k in 0..xt.len() {
            diff[k] = xt[k] - xtt[k];
            reproj += diff[k] * diff[k];
        }
        let r1 = y - sur.forward_taped(&[tt], ts1)[0];
        let r2 = y - sur.forward_taped(&[t], ts0)[0];

        let mut g_tt = [0.0];
        let mut g_tmp = [0.0];
        sur.backward(ts1, &[-2.0 * r1 * scale], gs, Some(&mut g_tt));
        for k in 0..diff.len() {
            g_xtt[k] = -2.0 * diff[k] * scale;
        }
        dec.backward(td1, g_xtt, gd, Some(&mut g_tmp));
        g_tt[0] += g_tmp[0];
        enc.backward(te1, &g_tt, ge, Some(g_xt));
        for k in 0..diff.len() {
            g_xt[k] += 2.0 * diff[k] * scale;
        }
        let mut g_t = [0.0];
        dec.backward(td0, g_xt, gd, Some(&mut g_t));
        sur.backward(ts0, &[-2.0 * r2 * scale], gs, Some(&mut g_tmp));
        g_t[0] += g_tmp[0];
        enc.backward(te0, &g_t, ge, None);

        r1 * r1 + r2 * r2 + reproj
    }
}

impl Objective for NeurAMObjective {
    fn num_params(&self) -> usize {
        self.nets.encoder.num_params() + self.nets.decoder.num_params() + self.nets.surrogate.num_params()
    }

    fn num_samples(&self) -> usize {
        self.xs.len()
    }

    fn loss_and_grad(&mut self, params: &[f64], batch: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        self.load(params);
        grad.fill(0.0);
        let mut loss = 0.0;
        match batch {
            None => {
                let scale = 1.0 / self.xs.len() as f64;
                for i in 0..self.xs.len() {
                    loss += self.accumulate(i, scale, grad);
                }
                loss * scale
            }
            Some(idx) => {
                let scale = 1.0 / idx.len() as f64;
                for &i in idx {
                    loss += self.accumulate(i, scale, grad);
                }
                loss * scale
            }
        }
    }
}

fn fit_triple(
    arch: &Architecture,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    fit_cfg: &FitConfig,
    init_seed: u64,
) -> Result<(NetTriple, crate::nn::FitOutcome)> {
    let d = xs[0].len();
    let template = arch.init(d, init_seed)?;
    let mut obj = NeurAMObjective::new(template, xs, ys)?;
    let init = obj.params();
    let outcome = fit(&mut obj, init, fit_cfg)?;
    let nets = obj.networks(&outcome.params);
    Ok((nets, outcome))
}

fn run_search(
    cfg: &TrainConfig,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> Result<(Architecture, Vec<TrialRecord>)> {
    let n = xs.len();
    let n_val = ((n as f64 * cfg.search.validation_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x5_1217)));
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| xs[i].clone()).collect();
    let train_y: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
    let val: Vec<(Vec<f64>, f64)> = val_idx.iter().map(|&i| (xs[i].clone(), ys[i])).collect();

    let fit_cfg = FitConfig { epochs: cfg.search.trial_epochs.unwrap_or(cfg.fit.epochs), ..cfg.fit.clone() };
    let records: Vec<TrialRecord> = (0..cfg.search.trials)
        .into_par_iter()
        .map(|index| {
            let trial_seed = mix_seed(cfg.seed, 1 + index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let architecture = Architecture::random(&mut rng, cfg.search.max_layers, cfg.search.max_width);
            let validation_loss = fit_triple(&architecture, train_x.clone(), train_y.clone(), &fit_cfg, trial_seed)
                .and_then(|(nets, _)| neuram_loss(&nets, &val))
                .map(|l| l.total())
                .ok()
                .filter(|l| l.is_finite());
            TrialRecord { index, architecture, validation_loss }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for r in &records {
        if let Some(v) = r.validation_loss {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((r.index, v));
            }
        }
    }
    let (winner, _) = best.ok_or_else(|| Error::invalid("every hyperparameter trial diverged"))?;
    Ok((records[winner].architecture.clone(), records))
}

/// Trains a reduction on raw samples `(xs, ys)`.
pub fn train_on_data(
    xs_raw: &[Vec<f64>],
    ys_raw: &[f64],
    input_normalizer: InputNormalizer,
    cfg: &TrainConfig,
) -> Result<NeurAMArtifact> {
    let n = xs_raw.len();
    if n < 2 || ys_raw.len() != n {
        return Err(Error::invalid("training needs at least two matching samples"));
    }
    if let Some(index) = ys_raw.iter().position(|y| !y.is_finite()) {
        return Err(Error::NonFiniteSample { index });
    }
    let output_normalizer = OutputNormalizer::from_sample(ys_raw)?;
    let xs: Vec<Vec<f64>> = xs_raw.iter().map(|x| input_normalizer.normalize(x)).collect();
    let ys: Vec<f64> = ys_raw.iter().map(|&y| output_normalizer.normalize(y)).collect();

    let (architecture, trials) = if cfg.search.trials > 0 && n >= 5 {
        run_search(cfg, &xs, &ys)?
    } else {
        (cfg.architecture.clone(), Vec::new())
    };

    let (maps, outcome) = fit_triple(&architecture, xs.clone(), ys.clone(), &cfg.fit, mix_seed(cfg.seed, 0))?;
    let interval = latent_interval(|x| maps.encode(x), &xs)?;
    let batch: Vec<(Vec<f64>, f64)> = xs.into_iter().zip(ys).collect();
    let final_loss = neuram_loss(&maps, &batch)?;

    Ok(NeurAMArtifact {
        maps,
        latent_interval: interval,
        input_normalizer,
        output_normalizer,
        report: Some(TrainingReport {
            n_samples: n,
            seed: cfg.seed,
            epochs: cfg.fit.epochs,
            architecture,
            final_loss,
            initial_loss: outcome.initial_loss,
            best_epoch: outcome.best_epoch,
            trials,
        }),
    })
}

/// Samples `n` inputs from the model distribution, evaluates the model and
/// trains a reduction on the result.
pub fn train_neuram(model: &ModelSpec, n: usize, cfg: &TrainConfig) -> Result<NeurAMArtifact> {
    if n < 2 {
        return Err(Error::invalid("training needs at least two samples"));
    }
    let xs = model.sample(n, cfg.seed)?;
    let ys = model.eval_many(&xs)?;
    train_on_data(&xs, &ys, InputNormalizer::for_distribution(&model.dist), cfg)
}
