//! Multifidelity Monte Carlo with a low-fidelity model rewired through a
//! shared latent space.

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::neuram::{LatentMaps, NeurAM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Right-continuous empirical distribution function of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("empirical CDF needs at least two values"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    fn level(&self, k: usize) -> f64 {
        k as f64 / self.sorted.len() as f64
    }

    /// `#{v <= t} / n`.
    pub fn eval(&self, t: f64) -> f64 {
        self.level(self.sorted.partition_point(|&v| v <= t))
    }

    /// Generalized inverse `inf { t : F(t) >= u }`, i.e. the `ceil(u n)`-th
    /// order statistic. The rank is found by comparing against the same
    /// `k / n` levels `eval` produces, so `inverse(eval(t))` never overshoots
    /// because of rounding in `u * n`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::invalid(format!("CDF level {u} outside [0, 1]")));
        }
        let n = self.sorted.len();
        // smallest k in 1..=n with k/n >= u
        let (mut lo, mut hi) = (1, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.level(mid) >= u {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(self.sorted[lo - 1])
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { context: "pearson", expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least two pairs"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::ZeroVariance("correlation input"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Sample allocation for a two-fidelity estimator under budget `B`, counted
/// in high-fidelity evaluations, with cost ratio `w = C_LF / C_HF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfmcPlan {
    pub budget: f64,
    pub cost_ratio: f64,
    /// Signed pilot correlation.
    pub rho: f64,
    pub gamma: f64,
    pub n_hf: usize,
    pub n_lf: usize,
    pub beta_cv: f64,
    /// Pilot variance of the high-fidelity model.
    pub var_hf: f64,
    /// Whether the low-fidelity model was negated before building its pipeline.
    pub sign_flip: bool,
    /// Set when the low-fidelity model is too weakly correlated to pay off;
    /// then `n_hf = floor(B)` and `n_lf = 0`.
    pub single_fidelity: bool,
    pub pilot_size: usize,
}

fn check_allocation_inputs(budget: f64, w: f64, rho: f64) -> Result<()> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::invalid(format!("cost ratio must lie in (0, 1), got {w}")));
    }
    if !rho.is_finite() || rho.abs() > 1.0 {
        return Err(Error::invalid(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    if rho.abs() == 1.0 {
        return Err(Error::invalid("allocation is undefined for perfectly correlated models"));
    }
    if !(budget.is_finite() && budget >= 2.0) {
        return Err(Error::invalid(format!("budget {budget} is too small")));
    }
    Ok(())
}

/// Optimal split of the budget, `gamma = sqrt(rho^2 / (w (1 - rho^2)))`,
/// `N_HF = floor(B / (1 + w gamma))`, `N_LF = floor(gamma N_HF)`.
///
/// `beta_cv`, `var_hf` and `pilot_size` are left at zero; see
/// [`plan_from_pilot`].
pub fn optimal_allocation(budget: f64, w: f64, rho: f64) -> Result<MfmcPlan> {
    check_allocation_inputs(budget, w, rho)?;
    let rho2 = rho * rho;
    let gamma = (rho2 / (w * (1.0 - rho2))).sqrt();
    let mut plan = MfmcPlan {
        budget,
        cost_ratio: w,
        rho,
        gamma,
        n_hf: budget.floor() as usize,
        n_lf: 0,
        beta_cv: 0.0,
        var_hf: 0.0,
        sign_flip: false,
        single_fidelity: true,
        pilot_size: 0,
    };
    if gamma < 1.0 {
        return Ok(plan);
    }
    let n_hf = (budget / (1.0 + w * gamma)).floor() as usize;
    if n_hf < 2 {
        return Err(Error::invalid(format!("budget {budget} leaves fewer than two high-fidelity samples")));
    }
    let mut n_lf = (gamma * n_hf as f64).floor() as usize;
    while n_lf > n_hf && n_hf as f64 + w * n_lf as f64 > budget {
        n_lf -= 1;
    }
    plan.n_hf = n_hf;
    plan.n_lf = n_lf;
    plan.single_fidelity = false;
    Ok(plan)
}

/// Allocation with correlation and control coefficient
/// `beta = Cov(hf, lf) / Var(lf)` estimated from paired pilot values.
pub fn plan_from_pilot(budget: f64, w: f64, hf: &[f64], lf: &[f64]) -> Result<MfmcPlan> {
    let rho = pearson(hf, lf)?;
    let n = hf.len() as f64;
    let mh = hf.iter().sum::<f64>() / n;
    let ml = lf.iter().sum::<f64>() / n;
    let cov = hf.iter().zip(lf).map(|(a, b)| (a - mh) * (b - ml)).sum::<f64>() / (n - 1.0);
    let var_lf = lf.iter().map(|b| (b - ml) * (b - ml)).sum::<f64>() / (n - 1.0);
    let var_hf = hf.iter().map(|a| (a - mh) * (a - mh)).sum::<f64>() / (n - 1.0);
    let mut plan = optimal_allocation(budget, w, rho)?;
    plan.beta_cv = cov / var_lf;
    plan.var_hf = var_hf;
    plan.pilot_size = hf.len();
    Ok(plan)
}

/// `(var_hf / B) (sqrt(1 - rho^2) + sqrt(w rho^2))^2`.
pub fn estimator_variance(budget: f64, w: f64, rho: f64, var_hf: f64) -> Result<f64> {
    if !(w > 0.0 && w < 1.0) || !(rho.abs() <= 1.0) || !(budget > 0.0) || !(var_hf >= 0.0) {
        return Err(Error::invalid("estimator variance needs 0 < w < 1, |rho| <= 1, B > 0, var >= 0"));
    }
    let rho2 = rho * rho;
    let s = (1.0 - rho2).sqrt() + (w * rho2).sqrt();
    Ok(var_hf / budget * s * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfmcEstimate {
    pub q_hat: f64,
    /// Predicted estimator variance from the pilot statistics.
    pub variance_formula: f64,
    pub n_hf: usize,
    pub n_lf: usize,
    pub rho_used: f64,
    pub beta_cv_used: f64,
}

fn eval_all<F>(f: &F, xs: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + ?Sized,
{
    xs.par_iter()
        .enumerate()
        .map(|(index, x)| {
            let y = f(x).map_err(|e| Error::Evaluation { index, source: Box::new(e) })?;
            if y.is_finite() { Ok(y) } else { Err(Error::NonFiniteSample { index }) }
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `q = mean_{N_HF}(hf) + beta (mean_{N_LF}(lf) - mean_{N_HF}(lf))`, where
/// the first `N_HF` of the `N_LF` input draws feed both high-fidelity sums.
pub fn mfmc_estimate<F>(hf: &ModelSpec, lf: &F, plan: &MfmcPlan, seed: u64) -> Result<MfmcEstimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + ?Sized,
{
    let n_draw = plan.n_lf.max(plan.n_hf);
    if plan.n_hf < 1 || (!plan.single_fidelity && plan.n_lf < plan.n_hf) {
        return Err(Error::invalid("plan needs n_hf >= 1 and n_lf >= n_hf"));
    }
    let xs = hf.sample(n_draw, seed)?;
    let y_hf = eval_all(&|x: &[f64]| hf.eval(x), &xs[..plan.n_hf])?;
    let mut q_hat = mean(&y_hf);
    let variance_formula = if plan.single_fidelity {
        plan.var_hf / plan.n_hf as f64
    } else {
        let y_lf = eval_all(lf, &xs)?;
        q_hat += plan.beta_cv * (mean(&y_lf) - mean(&y_lf[..plan.n_hf]));
        estimator_variance(plan.budget, plan.cost_ratio, plan.rho, plan.var_hf)?
    };
    Ok(MfmcEstimate {
        q_hat,
        variance_formula,
        n_hf: plan.n_hf,
        n_lf: if plan.single_fidelity { 0 } else { plan.n_lf },
        rho_used: plan.rho,
        beta_cv_used: plan.beta_cv,
    })
}

/// Plain Monte Carlo mean of `model` over `n` draws.
pub fn monte_carlo(model: &ModelSpec, n: usize, seed: u64) -> Result<f64> {
    let xs = model.sample(n, seed)?;
    Ok(mean(&model.eval_many(&xs)?))
}

/// Latent pipelines of both fidelities tied together by their empirical
/// latent CDFs.
#[derive(Debug, Clone)]
pub struct SharedSpace<H, L> {
    pub hf: NeurAM<H>,
    pub lf: NeurAM<L>,
    pub cdf_hf: EmpiricalCdf,
    pub cdf_lf: EmpiricalCdf,
    /// Low-fidelity model the pipeline was built for, already negated when
    /// `sign_flip` is set.
    pub lf_model: ModelSpec,
    pub sign_flip: bool,
}

impl<H: LatentMaps, L: LatentMaps> SharedSpace<H, L> {
    /// CDFs are built from the encoded pilot inputs of each fidelity.
    pub fn new(
        hf: NeurAM<H>,
        lf: NeurAM<L>,
        pilot_hf: &[Vec<f64>],
        pilot_lf: &[Vec<f64>],
        lf_model: ModelSpec,
        sign_flip: bool,
    ) -> Result<Self> {
        let enc_hf: Vec<f64> = pilot_hf.iter().map(|x| hf.encode_raw(x)).collect::<Result<_>>()?;
        let enc_lf: Vec<f64> = pilot_lf.iter().map(|x| lf.encode_raw(x)).collect::<Result<_>>()?;
        Ok(Self {
            cdf_hf: EmpiricalCdf::new(&enc_hf)?,
            cdf_lf: EmpiricalCdf::new(&enc_lf)?,
            hf,
            lf,
            lf_model,
            sign_flip,
        })
    }

    /// Low-fidelity input rank-matched to the high-fidelity input `x`.
    pub fn transport(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = self.cdf_hf.eval(self.hf.encode_raw(x)?);
        Ok(self.lf.decode_raw(self.cdf_lf.inverse(u)?))
    }

    /// `Q_LF(D_LF(F_LF^-1(F_HF(E_HF(x)))))`.
    pub fn modified_lf(&self, x: &[f64]) -> Result<f64> {
        self.lf_model.eval(&self.transport(x)?)
    }
}

/// Pearson correlation of the comonotone rearrangement of the two samples:
/// both sorted ascending, or the low-fidelity one descending when the pair
/// is negatively correlated.
pub fn ideal_correlation(hf: &[f64], lf: &[f64]) -> Result<f64> {
    let rho = pearson(hf, lf)?;
    let mut a = hf.to_vec();
    let mut b = lf.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if rho < 0.0 {
        b.reverse();
    }
    pearson(&a, &b)
}

/// Low-fidelity values rearranged to follow the ranks of `hf`: entry `j` is
/// `F_LF^-1(F_HF(hf_j))` for the empirical CDFs. With `reverse` the ranks of
/// `hf` are matched against the negated low-fidelity values instead.
pub fn ideal_modified_lf(hf: &[f64], lf: &[f64], reverse: bool) -> Result<Vec<f64>> {
    let cdf_hf = EmpiricalCdf::new(hf)?;
    let sign = if reverse { -1.0 } else { 1.0 };
    let flipped: Vec<f64> = lf.iter().map(|v| sign * v).collect();
    let cdf_lf = EmpiricalCdf::new(&flipped)?;
    hf.iter()
        .map(|&h| cdf_lf.inverse(cdf_hf.eval(h)).map(|v| sign * v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub mean_preserved: bool,
    pub var_preserved: bool,
    pub corr_improved: bool,
    /// The rearranged values are a permutation of the original ones.
    pub is_permutation: bool,
    pub rho: f64,
    pub rho_modified: f64,
    /// Repeated values across both samples; exact preservation assumes none.
    pub ties: usize,
}

/// Allowed rounding slack in the correlation comparison.
pub const CORRELATION_SLACK: f64 = 1e-12;

/// Mean and variance over a sorted copy, so permutations agree bitwise.
fn canonical_moments(xs: &[f64]) -> (f64, f64) {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    crate::util::mean_var(&s)
}

fn count_ties(xs: &[f64]) -> usize {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Builds the ideal modified low-fidelity sample from paired pilot values
/// and checks that it keeps the mean and variance of `lf` and does not lower
/// the magnitude of its correlation with `hf`.
pub fn verify_idealized_theory(hf: &[f64], lf: &[f64]) -> Result<TheoryReport> {
    let rho = pearson(hf, lf)?;
    let modified = ideal_modified_lf(hf, lf, rho < 0.0)?;
    let rho_modified = pearson(hf, &modified)?;
    let (m0, v0) = canonical_moments(lf);
    let (m1, v1) = canonical_moments(&modified);
    let mut a = lf.to_vec();
    let mut b = modified;
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(TheoryReport {
        mean_preserved: m0.to_bits() == m1.to_bits(),
        var_preserved: v0.to_bits() == v1.to_bits(),
        corr_improved: rho_modified.abs() >= rho.abs() - CORRELATION_SLACK,
        is_permutation: a == b,
        rho,
        rho_modified,
        ties: count_ties(hf) + count_ties(lf),
    })
}
