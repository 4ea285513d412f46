//! Analytic benchmark models, their input distributions and reference values.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
    /// Each coordinate is `exp(U(log a, log b))`.
    LogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub bounds: Vec<(f64, f64)>,
}

impl DistributionSpec {
    pub fn uniform(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let d = Self { kind: DistributionKind::Uniform, bounds };
        d.validate()?;
        Ok(d)
    }

    pub fn log_uniform(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let d = Self { kind: DistributionKind::LogUniform, bounds };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::Distribution("no coordinates".into()));
        }
        for (i, &(a, b)) in self.bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Distribution(format!("coordinate {i}: need a < b, got [{a}, {b}]")));
            }
            if self.kind == DistributionKind::LogUniform && a <= 0.0 {
                return Err(Error::Distribution(format!("coordinate {i}: log-uniform needs a > 0")));
            }
        }
        Ok(())
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(a, b)| match self.kind {
                DistributionKind::Uniform => rng.random_range(a..b),
                DistributionKind::LogUniform => rng.random_range(a.ln()..b.ln()).exp().clamp(a, b),
            })
            .collect()
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DistributionKind::Uniform => "uniform",
            DistributionKind::LogUniform => "log-uniform",
        };
        write!(f, "{kind}")?;
        for (a, b) in &self.bounds {
            write!(f, " [{a}, {b}]")?;
        }
        Ok(())
    }
}

/// i.i.d. draws from `dist`, deterministic in `seed`.
pub fn sample_inputs(dist: &DistributionSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.sample_one(&mut rng)).collect())
}

pub type ModelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar model with its input distribution and domain box.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub input_names: Vec<String>,
    pub dist: DistributionSpec,
    pub domain: Vec<(f64, f64)>,
    eval: ModelFn,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dist", &self.dist)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Model whose domain is the support of `dist`.
    pub fn new(
        name: impl Into<String>,
        dist: DistributionSpec,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        dist.validate()?;
        let d = dist.dim();
        Ok(Self {
            name: name.into(),
            input_names: (1..=d).map(|i| format!("x{i}")).collect(),
            domain: dist.bounds.clone(),
            dist,
            eval: Arc::new(eval),
        })
    }

    pub fn with_input_names(mut self, names: &[&str]) -> Self {
        assert_eq!(names.len(), self.dim());
        self.input_names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "model input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        check_box(&self.domain, x)
    }

    /// Evaluates the model after checking the domain.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_domain(x)?;
        Ok((self.eval)(x))
    }

    /// Evaluates without the domain check.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn eval_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter()
            .enumerate()
            .map(|(index, x)| {
                let y = self
                    .eval(x)
                    .map_err(|e| Error::Evaluation { index, source: Box::new(e) })?;
                if !y.is_finite() {
                    return Err(Error::NonFiniteSample { index });
                }
                Ok(y)
            })
            .collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        sample_inputs(&self.dist, n, seed)
    }

    /// The model `-Q` on the same inputs.
    pub fn negated(&self) -> Self {
        let inner = self.eval.clone();
        Self {
            name: format!("-{}", self.name),
            input_names: self.input_names.clone(),
            dist: self.dist.clone(),
            domain: self.domain.clone(),
            eval: Arc::new(move |x| -inner(x)),
        }
    }
}

pub(crate) fn check_box(bounds: &[(f64, f64)], x: &[f64]) -> Result<()> {
    for (coord, (&v, &(lo, hi))) in x.iter().zip(bounds).enumerate() {
        // NaN fails both comparisons
        if !(v >= lo && v <= hi) {
            return Err(Error::OutsideDomain { coord, value: v, lo, hi });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// closed forms

pub fn parabola(x: &[f64]) -> f64 {
    x[0] * x[0] + x[1]
}

pub fn sin_parabola(x: &[f64]) -> f64 {
    parabola(x).sin()
}

pub fn q1(x: &[f64]) -> f64 {
    (x[1] - x[0] * x[0]).exp()
}

pub fn q2(x: &[f64]) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

pub fn q3(x: &[f64]) -> f64 {
    x[0].powi(3) + x[1].powi(3) + 0.2 * x[0] + 0.6 * x[1]
}

pub fn q_hf(x: &[f64]) -> f64 {
    (0.7 * x[0] + 0.3 * x[1]).exp() + 0.15 * (2.0 * PI * x[0]).sin()
}

pub fn q_lf(x: &[f64]) -> f64 {
    (0.01 * x[0] + 0.99 * x[1]).exp() + 0.15 * (3.0 * PI * x[1]).sin()
}

/// Below this argument the Hartmann brackets switch to their Taylor series.
/// At the switch the direct formulas lose about 1e-13 relative accuracy to
/// cancellation, and the truncated series are accurate to about 1e-16.
pub const HARTMANN_SERIES_THRESHOLD: f64 = 0.1;

/// `(1 - z coth z) / z^2`, total at `z = 0` (value `-1/3`).
pub fn hartmann_velocity_bracket(z: f64) -> f64 {
    if z.abs() < HARTMANN_SERIES_THRESHOLD {
        let z2 = z * z;
        -1.0 / 3.0 + z2 * (1.0 / 45.0 + z2 * (-2.0 / 945.0 + z2 * (1.0 / 4725.0 - z2 * 2.0 / 93_555.0)))
    } else {
        (1.0 - z / z.tanh()) / (z * z)
    }
}

/// `(1 - (2/z) tanh(z/2)) / z`, total at `z = 0` (value `0`).
pub fn hartmann_field_bracket(z: f64) -> f64 {
    if z.abs() < HARTMANN_SERIES_THRESHOLD {
        let z2 = z * z;
        z * (1.0 / 12.0 + z2 * (-1.0 / 120.0 + z2 * (17.0 / 20160.0 + z2 * (-31.0 / 362_880.0 + z2 * 691.0 / 79_833_600.0))))
    } else {
        (1.0 - 2.0 / z * (0.5 * z).tanh()) / z
    }
}

pub const HARTMANN_MU0: f64 = 1.0;
pub const HARTMANN_LENGTH: f64 = 1.0;
pub const HARTMANN_INPUTS: [&str; 5] = ["mu", "rho", "dp0_dx", "eta", "B0"];

/// Average flow velocity. Inputs `(mu, rho, dp0/dx, eta, B0)`; `rho` unused.
pub fn hartmann_u(x: &[f64]) -> f64 {
    let (mu, dp, eta, b0) = (x[0], x[2], x[3], x[4]);
    let l = HARTMANN_LENGTH;
    let z = b0 * l / (eta * mu).sqrt();
    // -dp * eta / B0^2 * (1 - z coth z), rewritten through z^2 = B0^2 l^2 / (eta mu)
    -dp * l * l / mu * hartmann_velocity_bracket(z)
}

/// Induced magnetic field. Inputs `(mu, rho, dp0/dx, eta, B0)`; `rho` unused.
pub fn hartmann_b(x: &[f64]) -> f64 {
    let (mu, dp, eta, b0) = (x[0], x[2], x[3], x[4]);
    let l = HARTMANN_LENGTH;
    let s = (eta * mu).sqrt();
    let z = b0 * l / s;
    // dp * l * mu0 / (2 B0) * (1 - (2/z) tanh(z/2)), with 1/B0 = l / (s z)
    dp * l * HARTMANN_MU0 * l / (2.0 * s) * hartmann_field_bracket(z)
}

pub fn hartmann_bounds() -> Vec<(f64, f64)> {
    vec![(0.05, 0.2), (1.0, 5.0), (0.5, 3.0), (0.5, 3.0), (0.1, 1.0)]
}

// ---------------------------------------------------------------------------
// registry

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reference {
    pub value: Vec<f64>,
    pub provenance: &'static str,
}

/// Closed-form reference quantities for a benchmark.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExactQuantities {
    pub mean: Option<Reference>,
    pub std: Option<Reference>,
    pub global_indices: Option<Reference>,
    pub sobol_first: Option<Reference>,
}

impl ExactQuantities {
    pub fn is_empty(&self) -> bool {
        self.mean.is_none() && self.std.is_none() && self.global_indices.is_none() && self.sobol_first.is_none()
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.mean.is_some() {
            v.push("mean");
        }
        if self.std.is_some() {
            v.push("std");
        }
        if self.global_indices.is_some() {
            v.push("global_indices");
        }
        if self.sobol_first.is_some() {
            v.push("sobol_first");
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub model: ModelSpec,
    pub description: &'static str,
    pub exact: ExactQuantities,
}

pub const BENCHMARK_NAMES: [&str; 9] = [
    "parabola",
    "sin_parabola",
    "q1",
    "q2",
    "q3",
    "q_hf",
    "q_lf",
    "hartmann_u",
    "hartmann_b",
];

/// Exact mean of `q_hf` under U([-1,1]^2).
pub fn q_hf_exact_mean() -> f64 {
    let e = std::f64::consts::E;
    25.0 / 21.0 * (1.0 / e - (-0.4f64).exp() - 0.4f64.exp() + e)
}

/// Exact global manifold indices of the analytic parabola manifold.
pub fn parabola_exact_global_indices() -> [f64; 2] {
    let s5 = 5f64.sqrt();
    let lg = (2.0 + s5).ln();
    let den = 4.0 * s5 + 2.0 * lg;
    [(4.0 * s5 - 2.0 * lg) / den, 4.0 * lg / den]
}

/// First-order Sobol' indices of `q3`; the model is additive so they follow
/// from the per-coordinate variances of `x^3 + c x` under U(-1,1).
pub fn q3_exact_sobol() -> [f64; 2] {
    let var = |c: f64| 1.0 / 7.0 + 2.0 * c / 5.0 + c * c / 3.0;
    let (v1, v2) = (var(0.2), var(0.6));
    [v1 / (v1 + v2), v2 / (v1 + v2)]
}

fn unit_square() -> DistributionSpec {
    DistributionSpec::uniform(vec![(0.0, 1.0); 2]).expect("valid bounds")
}

fn centered_square() -> DistributionSpec {
    DistributionSpec::uniform(vec![(-1.0, 1.0); 2]).expect("valid bounds")
}

pub fn benchmark(name: &str) -> Result<BenchmarkEntry> {
    let entry = match name {
        "parabola" => BenchmarkEntry {
            model: ModelSpec::new(name, unit_square(), parabola)?,
            description: "x1^2 + x2 on U([0,1]^2)",
            exact: ExactQuantities {
                global_indices: Some(Reference {
                    value: parabola_exact_global_indices().to_vec(),
                    provenance: "closed-form integrals of the analytic parabola manifold",
                }),
                ..Default::default()
            },
        },
        "sin_parabola" => BenchmarkEntry {
            model: ModelSpec::new(name, unit_square(), sin_parabola)?,
            description: "sin(x1^2 + x2) on U([0,1]^2)",
            exact: ExactQuantities {
                std: Some(Reference {
                    value: vec![0.258],
                    provenance: "published standard deviation over the domain, rounded to 3 digits",
                }),
                ..Default::default()
            },
        },
        "q1" => BenchmarkEntry {
            model: ModelSpec::new(name, centered_square(), q1)?,
            description: "exp(x2 - x1^2) on U([-1,1]^2)",
            exact: ExactQuantities::default(),
        },
        "q2" => BenchmarkEntry {
            model: ModelSpec::new(name, centered_square(), q2)?,
            description: "x1^2 + x2^2 on U([-1,1]^2)",
            exact: ExactQuantities {
                sobol_first: Some(Reference {
                    value: vec![0.5, 0.5],
                    provenance: "additive symmetric model",
                }),
                ..Default::default()
            },
        },
        "q3" => BenchmarkEntry {
            model: ModelSpec::new(name, centered_square(), q3)?,
            description: "x1^3 + x2^3 + 0.2 x1 + 0.6 x2 on U([-1,1]^2)",
            exact: ExactQuantities {
                sobol_first: Some(Reference {
                    value: q3_exact_sobol().to_vec(),
                    provenance: "variance decomposition of an additive model",
                }),
                ..Default::default()
            },
        },
        "q_hf" => BenchmarkEntry {
            model: ModelSpec::new(name, centered_square(), q_hf)?,
            description: "exp(0.7 x1 + 0.3 x2) + 0.15 sin(2 pi x1) on U([-1,1]^2)",
            exact: ExactQuantities {
                mean: Some(Reference {
                    value: vec![q_hf_exact_mean()],
                    provenance: "(25/21)(e^-1 - e^-0.4 - e^0.4 + e)",
                }),
                ..Default::default()
            },
        },
        "q_lf" => BenchmarkEntry {
            model: ModelSpec::new(name, centered_square(), q_lf)?,
            description: "exp(0.01 x1 + 0.99 x2) + 0.15 sin(3 pi x2) on U([-1,1]^2)",
            exact: ExactQuantities::default(),
        },
        "hartmann_u" | "hartmann_b" => {
            let dist = DistributionSpec::log_uniform(hartmann_bounds())?;
            let f: fn(&[f64]) -> f64 = if name == "hartmann_u" { hartmann_u } else { hartmann_b };
            BenchmarkEntry {
                model: ModelSpec::new(name, dist, f)?.with_input_names(&HARTMANN_INPUTS),
                description: if name == "hartmann_u" {
                    "Hartmann average flow velocity, mu0 = l = 1, log-uniform inputs"
                } else {
                    "Hartmann induced magnetic field, mu0 = l = 1, log-uniform inputs"
                },
                exact: ExactQuantities::default(),
            }
        }
        _ => return Err(Error::UnknownModel(name.to_string())),
    };
    Ok(entry)
}

pub fn model(name: &str) -> Result<ModelSpec> {
    benchmark(name).map(|b| b.model)
}

pub fn eval_benchmark(name: &str, x: &[f64]) -> Result<f64> {
    model(name)?.eval(x)
}

pub fn exact_quantities(name: &str) -> Result<ExactQuantities> {
    let exact = benchmark(name)?.exact;
    if exact.is_empty() {
        return Err(Error::NoExactQuantities(name.to_string()));
    }
    Ok(exact)
}

pub fn registry() -> Vec<BenchmarkEntry> {
    BENCHMARK_NAMES
        .iter()
        .map(|n| benchmark(n).expect("registered"))
        .collect()
}
