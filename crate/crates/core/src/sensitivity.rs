//! Input importance along the learned manifold, and a first-order Sobol'
//! comparator.

use crate::error::{Error, Result};
use crate::models::{sample_inputs, DistributionSpec};
use crate::neuram::{LatentMaps, NeurAM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Squared surrogate gradient norms below this are treated as flat points.
pub const DEGENERATE_GRADIENT: f64 = 1e-12;

/// Share of degenerate grid points above which global indices are refused.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.1;

pub const DEFAULT_GRID_SIZE: usize = 1000;

/// How the arc length element along the decoder curve is discretized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcLength {
    /// Chord lengths `|D(t_{k+1}) - D(t_k)|` between grid points. Robust to
    /// an unbounded `|D'|` at the ends of the interval.
    #[default]
    Chord,
    /// Trapezoid rule on `|D'(t)|` from the decoder Jacobian.
    Derivative,
}

/// Gradient of `S(E(x))` at the manifold point `D(t)`, normalized coordinates.
fn surrogate_gradient<M: LatentMaps>(maps: &M, t: f64) -> Vec<f64> {
    let x = maps.decode(t);
    let ds = maps.surrogate_deriv(maps.encode(&x));
    let mut g = maps.encode_grad(&x);
    for v in &mut g {
        *v *= ds;
    }
    g
}

fn theta_from_gradient(g: &[f64]) -> Option<Vec<f64>> {
    let norm2: f64 = g.iter().map(|v| v * v).sum();
    if !(norm2 >= DEGENERATE_GRADIENT) || !norm2.is_finite() {
        return None;
    }
    Some(g.iter().map(|v| v * v / norm2).collect())
}

/// `theta_i(t)`: squared share of input `i` in the surrogate gradient at `D(t)`.
pub fn local_indices<M: LatentMaps>(artifact: &NeurAM<M>, t: f64) -> Result<Vec<f64>> {
    artifact.latent_interval.check(t)?;
    theta_from_gradient(&surrogate_gradient(&artifact.maps, t)).ok_or(Error::DegenerateGradient { t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    /// Estimator output, possibly slightly outside `[0, 1]`.
    pub raw: Vec<f64>,
    pub clipped: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolSource {
    ExactModel,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolComparison {
    pub indices: SobolIndices,
    pub source: SobolSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub t_grid: Vec<f64>,
    /// `local[k][i] = theta_i(t_grid[k])`; rows of flat points are `None`.
    pub local: Vec<Option<Vec<f64>>>,
    pub global: Vec<f64>,
    pub sobol_first: Option<SobolComparison>,
    pub grid_size: usize,
    pub arc_length: ArcLength,
    pub degenerate_points: usize,
}

/// Arc-length weighted average of the local indices over the latent interval.
pub fn global_indices<M: LatentMaps + Sync>(
    artifact: &NeurAM<M>,
    grid_size: usize,
    arc_length: ArcLength,
) -> Result<SensitivityResult> {
    if grid_size < 2 {
        return Err(Error::invalid("grid size must be at least 2"));
    }
    let maps = &artifact.maps;
    let t_grid = artifact.latent_interval.grid(grid_size);
    let points: Vec<(Option<Vec<f64>>, Vec<f64>)> = t_grid
        .par_iter()
        .map(|&t| {
            let local = theta_from_gradient(&surrogate_gradient(maps, t));
            let geom = match arc_length {
                ArcLength::Chord => maps.decode(t),
                ArcLength::Derivative => maps.decode_deriv(t),
            };
            (local, geom)
        })
        .collect();
    let d = maps.dim();

    let mut num = vec![0.0; d];
    let mut den = 0.0;
    let degenerate;
    match arc_length {
        ArcLength::Chord => {
            degenerate = points.iter().filter(|p| p.0.is_none()).count();
            for k in 0..grid_size - 1 {
                let (a, b) = (&points[k], &points[k + 1]);
                let len = a.1.iter().zip(&b.1).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt();
                // a flat endpoint hands the segment to the other one
                let (wa, wb) = match (&a.0, &b.0) {
                    (Some(_), Some(_)) => (0.5, 0.5),
                    (Some(_), None) => (1.0, 0.0),
                    (None, Some(_)) => (0.0, 1.0),
                    (None, None) => continue,
                };
                for (w, th) in [(wa, &a.0), (wb, &b.0)] {
                    if let Some(th) = th {
                        for i in 0..d {
                            num[i] += w * len * th[i];
                        }
                    }
                }
                den += len;
            }
        }
        ArcLength::Derivative => {
            let speed: Vec<Option<f64>> = points
                .iter()
                .map(|(th, dd)| {
                    let s = dd.iter().map(|v| v * v).sum::<f64>().sqrt();
                    th.as_ref().and(s.is_finite().then_some(s))
                })
                .collect();
            degenerate = speed.iter().filter(|s| s.is_none()).count();
            let kept: Vec<usize> = (0..grid_size).filter(|&k| speed[k].is_some()).collect();
            for pair in kept.windows(2) {
                let (k0, k1) = (pair[0], pair[1]);
                let h = t_grid[k1] - t_grid[k0];
                let (s0, s1) = (speed[k0].unwrap(), speed[k1].unwrap());
                let (th0, th1) = (points[k0].0.as_ref().unwrap(), points[k1].0.as_ref().unwrap());
                for i in 0..d {
                    num[i] += 0.5 * h * (th0[i] * s0 + th1[i] * s1);
                }
                den += 0.5 * h * (s0 + s1);
            }
        }
    }

    if degenerate as f64 > MAX_DEGENERATE_FRACTION * grid_size as f64 {
        return Err(Error::DegenerateGrid { degenerate, total: grid_size });
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::invalid("manifold has zero length over the latent interval"));
    }
    let global = num.into_iter().map(|v| v / den).collect();
    let local = points.into_iter().map(|p| p.0).collect();
    Ok(SensitivityResult {
        t_grid,
        local,
        global,
        sobol_first: None,
        grid_size,
        arc_length,
        degenerate_points: degenerate,
    })
}

/// First-order Sobol' indices by the pick-freeze estimator
/// `S_i = mean(f(B) (f(A_B^i) - f(A))) / Var`, with `A`, `B` two independent
/// `n x d` sample matrices and `A_B^i` equal to `A` with column `i` from `B`.
pub fn sobol_first_order<F>(f: F, dist: &DistributionSpec, n: usize, seed: u64) -> Result<SobolIndices>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n < 100 {
        return Err(Error::invalid("Sobol' estimation needs at least 100 samples"));
    }
    let d = dist.dim();
    let both = sample_inputs(dist, 2 * n, seed)?;
    let (a, b) = both.split_at(n);
    let eval = |xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        xs.par_iter()
            .enumerate()
            .map(|(index, x)| {
                let y = f(x);
                if y.is_finite() { Ok(y) } else { Err(Error::NonFiniteSample { index }) }
            })
            .collect()
    };
    let fa = eval(a)?;
    let fb = eval(b)?;
    let all: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let (_, var) = crate::util::mean_var(&all);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("model output"));
    }
    let mut raw = Vec::with_capacity(d);
    for i in 0..d {
        let abi: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(xa, xb)| {
                let mut x = xa.clone();
                x[i] = xb[i];
                x
            })
            .collect();
        let fabi = eval(&abi)?;
        let s = (0..n).map(|k| fb[k] * (fabi[k] - fa[k])).sum::<f64>() / n as f64;
        raw.push(s / var);
    }
    let clipped = raw.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    Ok(SobolIndices { raw, clipped, n })
}

fn fmt_f(out: &mut String, v: f64) {
    out.push_str(&crate::util::fmt_f64(v));
}

impl SensitivityResult {
    /// Columns `t, theta_<name>...`, one row per grid point.
    pub fn local_csv(&self, names: &[String]) -> String {
        let mut s = String::from("t");
        for n in names {
            let _ = write!(s, ",theta_{n}");
        }
        s.push('\n');
        for (t, row) in self.t_grid.iter().zip(&self.local) {
            fmt_f(&mut s, *t);
            for i in 0..names.len() {
                s.push(',');
                fmt_f(&mut s, row.as_ref().map_or(f64::NAN, |r| r[i]));
            }
            s.push('\n');
        }
        s
    }

    /// Columns `input, global, sobol_first, sobol_first_raw`.
    pub fn summary_csv(&self, names: &[String]) -> String {
        let mut s = String::from("input,global,sobol_first,sobol_first_raw\n");
        for (i, n) in names.iter().enumerate() {
            s.push_str(n);
            s.push(',');
            fmt_f(&mut s, self.global[i]);
            let (c, r) = match &self.sobol_first {
                Some(cmp) => (cmp.indices.clipped[i], cmp.indices.raw[i]),
                None => (f64::NAN, f64::NAN),
            };
            s.push(',');
            fmt_f(&mut s, c);
            s.push(',');
            fmt_f(&mut s, r);
            s.push('\n');
        }
        s
    }
}
