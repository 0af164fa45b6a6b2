//! From hitting samples to spectral quantities: the Laplace transform
//! L_{x,y}(q), the spectral radius, its derivative, the eigenfunction table
//! and the dual eigenmeasure density.
//!
//! The root of q -> L(q) = 1 is found on a single fixed sample set (common
//! random numbers): given the samples, L-hat is a deterministic, strictly
//! decreasing function of q, so the stochastic root-finding problem becomes
//! plain bisection. Censored paths contribute 0, which biases L-hat (and
//! hence rho-hat) downward; the bias direction is part of the output
//! metadata and is controlled by the censor time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::pdmp::{sample_hit_set, Estimate, HitSampleSet};
use crate::quad::pairwise_sum;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivativeEstimate {
    /// Estimate of -L'(q) (nonnegative).
    pub value: f64,
    pub stderr: f64,
    /// Heavy-tail heuristic: set when the top 1% of samples carry more than
    /// half of the total mass, the finite-sample proxy for -L'(rho) = inf.
    pub divergent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralEstimate {
    pub rho_hat: f64,
    pub ci95: (f64, f64),
    /// Diagnostic: equals 1 by the root condition.
    pub l_at_rho: f64,
    pub minus_lprime_at_rho: DerivativeEstimate,
    pub hit_fraction: f64,
    pub censor_fraction: f64,
    pub n: usize,
    pub t_max: f64,
}

/// Monte Carlo estimate of L_{x,y}(q) from a fixed sample set.
pub fn laplace_estimate(set: &HitSampleSet, q: f64) -> Estimate {
    let values: Vec<f64> = set
        .samples
        .iter()
        .map(|s| if s.hit { (s.log_w - q * s.h).exp() } else { 0.0 })
        .collect();
    let (mean, stderr) = crate::quad::mean_stderr(&values);
    Estimate { mean, stderr }
}

/// Monte Carlo estimate of -L'_{x,y}(q), with the divergence heuristic.
pub fn laplace_derivative(set: &HitSampleSet, q: f64) -> DerivativeEstimate {
    let values: Vec<f64> = set
        .samples
        .iter()
        .map(|s| if s.hit { s.h * (s.log_w - q * s.h).exp() } else { 0.0 })
        .collect();
    let (mean, stderr) = crate::quad::mean_stderr(&values);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total = pairwise_sum(&sorted);
    let top = sorted.len().div_ceil(100);
    let top_mass = pairwise_sum(&sorted[..top]);
    let divergent = total > 0.0 && top_mass > 0.5 * total;
    DerivativeEstimate {
        value: mean,
        stderr,
        divergent,
    }
}

/// Solve L-hat(q) = 1 by bisection on the return-sample set (source ==
/// target == x0). The confidence interval comes from the delta method.
pub fn find_rho(set: &HitSampleSet, cbar_sup: f64) -> Result<SpectralEstimate> {
    let n = set.samples.len();
    let hits = set.samples.iter().filter(|s| s.hit).count();
    if hits == 0 {
        return Err(Error::NoHits);
    }
    let hit_fraction = hits as f64 / n as f64;
    let l_hat = |q: f64| laplace_estimate(set, q).mean;

    let mut q_hi = cbar_sup + 1.0;
    while l_hat(q_hi) >= 1.0 {
        q_hi += 1.0;
    }
    let floor = -cbar_sup - 100.0;
    let mut q_lo = q_hi - 1.0;
    let mut step = 1.0;
    while l_hat(q_lo) <= 1.0 {
        step *= 2.0;
        q_lo -= step;
        if q_lo < floor {
            let value = l_hat(floor);
            if value <= 1.0 {
                return Err(Error::BracketFailure { q_lo: floor, value });
            }
            q_lo = floor;
            break;
        }
    }
    while q_hi - q_lo > 1e-8 {
        let mid = 0.5 * (q_lo + q_hi);
        if l_hat(mid) >= 1.0 {
            q_lo = mid;
        } else {
            q_hi = mid;
        }
    }
    let rho_hat = 0.5 * (q_lo + q_hi);

    let l_est = laplace_estimate(set, rho_hat);
    let deriv = laplace_derivative(set, rho_hat);
    // delta method: sd(rho) = sd(L(rho)) / |L'(rho)|
    let rho_se = if deriv.value > 0.0 {
        l_est.stderr / deriv.value
    } else {
        f64::INFINITY
    };
    Ok(SpectralEstimate {
        rho_hat,
        ci95: (rho_hat - 1.96 * rho_se, rho_hat + 1.96 * rho_se),
        l_at_rho: l_est.mean,
        minus_lprime_at_rho: deriv,
        hit_fraction,
        censor_fraction: 1.0 - hit_fraction,
        n,
        t_max: set.censor_time,
    })
}

/// Eigenfunction estimates ell(x) = L_{x,x0}(rho) on a mass grid, with
/// log-log interpolation between points and flagged constant extrapolation
/// beyond the ends.
#[derive(Clone, Debug, Serialize)]
pub struct EllTable {
    pub grid: Vec<f64>,
    /// (ell-hat, stderr) per grid point; None where every path censored.
    pub values: Vec<Option<(f64, f64)>>,
    pub rho_used: f64,
    pub x0: f64,
}

impl EllTable {
    /// Interpolated value and an extrapolation flag.
    pub fn eval_flagged(&self, x: f64) -> (f64, bool) {
        let pts: Vec<(f64, f64)> = self
            .grid
            .iter()
            .zip(&self.values)
            .filter_map(|(&g, v)| v.map(|(ell, _)| (g.ln(), ell.ln())))
            .collect();
        assert!(!pts.is_empty(), "ell table has no valid points");
        let z = x.ln();
        if z <= pts[0].0 {
            return (pts[0].1.exp(), z < pts[0].0);
        }
        if z >= pts[pts.len() - 1].0 {
            return (pts[pts.len() - 1].1.exp(), z > pts[pts.len() - 1].0);
        }
        let j = pts.partition_point(|p| p.0 < z);
        let (z0, l0) = pts[j - 1];
        let (z1, l1) = pts[j];
        let w = (z - z0) / (z1 - z0);
        ((l0 + w * (l1 - l0)).exp(), false)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_flagged(x).0
    }

    /// Largest tabulated value at or below x (constant extrapolation
    /// included); used for tilted-thinning bounds.
    pub fn max_below(&self, x: f64) -> f64 {
        let mut best = self.eval(x);
        for (&g, v) in self.grid.iter().zip(&self.values) {
            if let Some((ell, _)) = v {
                if g <= x {
                    best = best.max(*ell);
                }
            }
        }
        // left extrapolation value covers masses below the grid
        if let Some(&(ell, _)) = self.values.iter().flatten().next() {
            best = best.max(ell);
        }
        best
    }
}

/// Build the eigenfunction table: one fresh hitting-sample set per grid
/// point, estimated at q = rho.
pub fn build_ell_table(
    model: &ValidatedModel,
    rho: f64,
    grid: &[f64],
    n_per_point: usize,
    t_max: f64,
    seed: u64,
) -> Result<EllTable> {
    let mut values = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        let set = sample_hit_set(model, x, model.x0(), n_per_point, t_max, seed, i as u32 + 1)?;
        if set.samples.iter().any(|s| s.hit) {
            let est = laplace_estimate(&set, rho);
            values.push(Some((est.mean, est.stderr)));
        } else {
            values.push(None);
        }
    }
    Ok(EllTable {
        grid: grid.to_vec(),
        values,
        rho_used: rho,
        x0: model.x0(),
    })
}

/// The eigenfunction ell in the three forms the tilted process can consume.
#[derive(Clone, Debug)]
pub enum EllFunction {
    /// ell = 1 (recurrent linear-growth case).
    One,
    /// Closed form (x/x0)^(theta0-1) of the homogeneous case.
    Closed { theta0: f64, x0: f64 },
    Table(EllTable),
}

impl EllFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            EllFunction::One => 1.0,
            EllFunction::Closed { theta0, x0 } => (x / x0).powf(theta0 - 1.0),
            EllFunction::Table(t) => t.eval(x),
        }
    }

    /// ell-bar(x) = x ell(x)
    pub fn eval_bar(&self, x: f64) -> f64 {
        x * self.eval(x)
    }

    /// sup over (0, x] of ell, the quantity a thinning bound needs. Infinite
    /// for a decreasing closed-form ell.
    pub fn sup_below(&self, x: f64) -> f64 {
        match self {
            EllFunction::One => 1.0,
            EllFunction::Closed { theta0, .. } => {
                if *theta0 >= 1.0 {
                    self.eval(x)
                } else {
                    f64::INFINITY
                }
            }
            EllFunction::Table(t) => t.max_below(x),
        }
    }
}

/// Unnormalized dual-eigenmeasure density 1/(c(y) y ell(y) |L'_{y,y}(rho)|).
pub fn nu_density_unnormalized(
    model: &ValidatedModel,
    ell: &EllFunction,
    minus_lprime: &DerivativeEstimate,
    y: f64,
) -> Result<f64> {
    if minus_lprime.divergent {
        return Err(Error::DivergentDerivative { y });
    }
    Ok(1.0 / (model.c(y) * y * ell.eval(y) * minus_lprime.value))
}

/// Normalize density samples on a grid so they integrate to 1 (trapezoid).
pub fn normalize_density(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let total = crate::quad::trapezoid(grid, values);
    values.iter().map(|v| v / total).collect()
}
