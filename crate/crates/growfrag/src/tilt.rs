//! The tilted process Y: same flow as the base process, jump kernel
//! reweighted by ell(post)/ell(pre). Y is recurrent where the base process
//! need not be, which turns eigen-quantities into ordinary ergodic averages:
//! excursion occupation measures, a stationary histogram, and a
//! change-of-measure estimator for the rescaled semigroup.
//!
//! Y is simulated directly by thinning with a global acceptance bound, not
//! by importance-weighting base paths: the importance weights grow without
//! bound in transient regimes, while direct thinning is exact. When
//! ell = 1 the tilt is trivial and the simulation consumes random draws in
//! exactly the base order, reproducing base paths bit for bit.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::model::ValidatedModel;
use crate::pde::{apply_classical, GridFunction, PdeGrid};
use crate::pdmp::{
    collect_paths, evolve, monte_carlo, Estimate, JumpLaw, Stop, Trajectory,
};
use crate::quad::{gauss_legendre_unit, mean_stderr, trapezoid};
use crate::spectral::EllFunction;

#[derive(Clone, Debug)]
pub struct TiltedModel {
    base: ValidatedModel,
    ell: EllFunction,
    rho: f64,
    /// Global bound on ell(xv)/ell(x) over all proposals; the dominating
    /// jump rate is ksup times this.
    accept_bound: f64,
}

impl TiltedModel {
    pub fn new(base: ValidatedModel, ell: EllFunction, rho: f64) -> Result<TiltedModel> {
        let accept_bound = match &ell {
            EllFunction::One => 1.0,
            EllFunction::Closed { theta0, .. } => {
                if *theta0 >= 1.0 {
                    // ell increasing: jumps only ever shrink it
                    1.0
                } else {
                    return Err(Error::InvalidConfig(format!(
                        "closed-form ell with exponent {} - 1 < 0 is unbounded near 0; \
                         thinning needs a finite acceptance bound",
                        theta0
                    )));
                }
            }
            EllFunction::Table(t) => {
                // worst tabulated ratio, padded for table coarseness
                let mut worst = 1.0f64;
                for (&x, v) in t.grid.iter().zip(&t.values) {
                    if v.is_some() {
                        worst = worst.max(t.max_below(x) / t.eval(x));
                    }
                }
                1.05 * worst
            }
        };
        Ok(TiltedModel {
            base,
            ell,
            rho,
            accept_bound,
        })
    }

    #[cfg(test)]
    pub(crate) fn with_accept_bound(mut self, bound: f64) -> TiltedModel {
        self.accept_bound = bound;
        self
    }

    pub fn base(&self) -> &ValidatedModel {
        &self.base
    }

    pub fn ell(&self) -> &EllFunction {
        &self.ell
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn accept_bound(&self) -> f64 {
        self.accept_bound
    }

    /// ell-bar(x) = x ell(x)
    pub fn ell_bar(&self, x: f64) -> f64 {
        self.ell.eval_bar(x)
    }
}

struct TiltedJump<'a> {
    tm: &'a TiltedModel,
}

impl JumpLaw for TiltedJump<'_> {
    fn dominating_rate(&self) -> f64 {
        self.tm.base.ksup() * self.tm.accept_bound
    }

    fn acceptance(&self, pre: f64, v: f64) -> Result<f64> {
        let base = self.tm.base.rate_k(pre) / self.tm.base.ksup();
        let tilt = self.tm.ell.eval(pre * v) / self.tm.ell.eval(pre);
        let prob = base * tilt / self.tm.accept_bound;
        if prob > 1.0 {
            return Err(Error::BoundViolated { x: pre, prob });
        }
        Ok(prob)
    }
}

/// Simulate Y over [0, t_end].
pub fn simulate_tilted(
    tm: &TiltedModel,
    x: f64,
    t_end: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let flow = Flow::new(tm.base.growth().clone());
    let mut events = Vec::new();
    let end = evolve(
        &tm.base,
        &flow,
        &TiltedJump { tm },
        x,
        Stop::Time(t_end),
        rng,
        |_, _, _| {},
        |time, pre, post| events.push(crate::pdmp::Event { time, pre, post }),
    )?;
    Ok(Trajectory {
        start: x,
        events,
        end_time: end.end_time,
        end_mass: end.end_mass,
        log_e: (end.end_mass / x).ln() + end.sum_jump_log,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct OccupationEstimate {
    pub value: f64,
    pub stderr: f64,
    pub completed: usize,
    /// Excursions that did not return before the censor time; excluded from
    /// the estimate, so a nonzero count flags downward bias.
    pub censored: usize,
}

/// Mean of int_0^{H(x0)} f(Y_s) ds over excursions of Y from x0, each
/// integral computed by per-segment Gauss-Legendre quadrature (exact
/// additivity in f by linearity).
pub fn occupation_measure<F>(
    tm: &TiltedModel,
    f: F,
    n_excursions: usize,
    t_max: f64,
    seed: u64,
    block: u32,
) -> Result<OccupationEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let flow = Flow::new(tm.base.growth().clone());
    let x0 = tm.base.x0();
    let (nodes, weights) = gauss_legendre_unit(8);
    let runs: Vec<Option<f64>> = collect_paths(n_excursions, seed, block, |_, rng| {
        let acc = std::cell::Cell::new(0.0);
        let flow_ref = &flow;
        let end = evolve(
            &tm.base,
            &flow,
            &TiltedJump { tm },
            x0,
            Stop::Hit {
                target: x0,
                t_max,
            },
            rng,
            |_, p, dt| {
                let mut seg = 0.0;
                for (&s, &w) in nodes.iter().zip(weights.iter()) {
                    seg += w * f(flow_ref.flow_map(p, s * dt).unwrap());
                }
                acc.set(acc.get() + seg * dt);
            },
            |_, _, _| {},
        )?;
        Ok(if end.hit { Some(acc.get()) } else { None })
    })?;
    let completed: Vec<f64> = runs.iter().flatten().cloned().collect();
    let censored = runs.len() - completed.len();
    if completed.len() < 2 {
        return Err(Error::NoHits);
    }
    let (value, stderr) = mean_stderr(&completed);
    Ok(OccupationEstimate {
        value,
        stderr,
        completed: completed.len(),
        censored,
    })
}

#[derive(Clone, Debug)]
pub struct StationaryHistogram {
    /// bins + 1 log-spaced edges.
    pub edges: Vec<f64>,
    /// Normalized density per bin (integrates to 1 over mass).
    pub density: Vec<f64>,
    pub time_in_bin: Vec<f64>,
    /// Fraction of the recorded window spent inside [edges[0], edges.last()].
    pub coverage: f64,
}

/// Time-average occupation histogram of one long Y path over
/// [t_burn, t_burn + t_run].
pub fn stationary_density(
    tm: &TiltedModel,
    t_burn: f64,
    t_run: f64,
    bins: usize,
    range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<StationaryHistogram> {
    assert!(bins >= 2 && range.0 > 0.0 && range.1 > range.0);
    let flow = Flow::new(tm.base.growth().clone());
    let edges = crate::quad::log_grid(range.0, range.1, bins + 1);
    let time_in_bin = std::cell::RefCell::new(vec![0.0; bins]);
    let t_end = t_burn + t_run;
    evolve(
        &tm.base,
        &flow,
        &TiltedJump { tm },
        tm.base.x0(),
        Stop::Time(t_end),
        rng,
        |t0, p, dt| {
            // clip the segment to the recording window
            let (lo, hi) = (t0.max(t_burn), (t0 + dt).min(t_end));
            if hi <= lo {
                return;
            }
            let start = flow.flow_map(p, lo - t0).unwrap();
            let seg = hi - lo;
            let mut times = time_in_bin.borrow_mut();
            for j in 0..bins {
                if edges[j + 1] <= start {
                    continue;
                }
                let t_in = if edges[j] <= start {
                    0.0
                } else {
                    flow.time_to_reach(start, edges[j]).unwrap()
                };
                if t_in >= seg {
                    break;
                }
                let t_out = flow.time_to_reach(start, edges[j + 1]).unwrap().min(seg);
                times[j] += t_out - t_in;
            }
        },
        |_, _, _| {},
    )?;
    let time_in_bin = time_in_bin.into_inner();
    let total: f64 = time_in_bin.iter().sum();
    let density = time_in_bin
        .iter()
        .enumerate()
        .map(|(j, t)| t / (total * (edges[j + 1] - edges[j])))
        .collect();
    Ok(StationaryHistogram {
        edges,
        density,
        time_in_bin,
        coverage: total / t_run,
    })
}

/// Positions of one long Y path sampled at t_burn + k * spacing,
/// k = 0..n - 1 (for decorrelated draws from the stationary law).
pub fn sample_positions(
    tm: &TiltedModel,
    t_burn: f64,
    spacing: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let flow = Flow::new(tm.base.growth().clone());
    let out = std::cell::RefCell::new(Vec::with_capacity(n));
    let t_end = t_burn + spacing * n as f64;
    evolve(
        &tm.base,
        &flow,
        &TiltedJump { tm },
        tm.base.x0(),
        Stop::Time(t_end),
        rng,
        |t0, p, dt| {
            let mut out = out.borrow_mut();
            loop {
                let k = out.len();
                if k >= n {
                    break;
                }
                let tk = t_burn + spacing * k as f64;
                if tk < t0 || tk >= t0 + dt {
                    break;
                }
                out.push(flow.flow_map(p, tk - t0).unwrap());
            }
        },
        |_, _, _| {},
    )?;
    let out = out.into_inner();
    debug_assert_eq!(out.len(), n);
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct ProfilePair {
    /// e^{-rho t} T_t f(x) by direct simulation of the base process.
    pub direct: Estimate,
    /// The same quantity via ell-bar(x) E[f(Y_t)/ell-bar(Y_t)].
    pub tilted: Estimate,
}

/// Estimate the rescaled semigroup both ways.
pub fn asymptotic_profile<F>(
    tm: &TiltedModel,
    f: F,
    x: f64,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<ProfilePair>
where
    F: Fn(f64) -> f64 + Sync,
{
    let fk = crate::pdmp::feynman_kac(&tm.base, x, t, &f, n, seed)?;
    let scale = (-tm.rho * t).exp();
    let direct = Estimate {
        mean: scale * fk.mean,
        stderr: scale * fk.stderr,
    };
    let lb = tm.ell_bar(x);
    let tilted = monte_carlo(n, seed, 1, |rng| {
        let flow = Flow::new(tm.base.growth().clone());
        let end = evolve(
            &tm.base,
            &flow,
            &TiltedJump { tm },
            x,
            Stop::Time(t),
            rng,
            |_, _, _| {},
            |_, _, _| {},
        )?;
        Ok(lb * f(end.end_mass) / tm.ell_bar(end.end_mass))
    })?;
    Ok(ProfilePair { direct, tilted })
}

#[derive(Clone, Debug)]
pub struct RatioCurve {
    /// (t, estimated ratio of discounted time-integrated semigroups).
    pub points: Vec<(f64, f64)>,
    /// Long-time limit predicted by the excursion occupation measure.
    pub target: f64,
}

/// Ratio of int_0^t e^{-rho s} T_s f(x) ds to the same with g, on a time
/// grid, against the occupation-measure prediction
/// <m0, f/ell-bar> / <m0, g/ell-bar>. Both integrals reuse the same seed,
/// so equal integrands give exactly equal estimates.
pub fn ratio_limit<F, G>(
    tm: &TiltedModel,
    f: F,
    g: G,
    x: f64,
    t_grid: &[f64],
    n_paths: usize,
    n_excursions: usize,
    t_max: f64,
    seed: u64,
) -> Result<RatioCurve>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let num = crate::pdmp::integrated_fk(&tm.base, x, t, tm.rho, &f, n_paths, seed)?;
        let den = crate::pdmp::integrated_fk(&tm.base, x, t, tm.rho, &g, n_paths, seed)?;
        points.push((t, num.mean / den.mean));
    }
    let occ_f = occupation_measure(tm, |y| f(y) / tm.ell_bar(y), n_excursions, t_max, seed, 2)?;
    let occ_g = occupation_measure(tm, |y| g(y) / tm.ell_bar(y), n_excursions, t_max, seed, 2)?;
    Ok(RatioCurve {
        points,
        target: occ_f.value / occ_g.value,
    })
}

/// Relative residual of the dual eigen-identity <nu, A f-bar> = rho <nu, f-bar>
/// for a density nu given on a PDE grid.
pub fn eigenmeasure_residual<F>(
    model: &ValidatedModel,
    grid: &PdeGrid,
    nu: &[f64],
    f_bar: F,
    rho: f64,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let xs = grid.xs();
    let fb = GridFunction {
        values: xs.iter().map(|&x| f_bar(x)).collect(),
        time: 0.0,
        label: "f-bar".into(),
    };
    let afb = apply_classical(model, grid, &fb);
    let pair = |h: &[f64]| {
        let vals: Vec<f64> = nu.iter().zip(h).map(|(n, v)| n * v).collect();
        trapezoid(&xs, &vals)
    };
    let lhs = pair(&afb.values);
    let rhs = rho * pair(&fb.values);
    if rhs == 0.0 {
        lhs.abs()
    } else {
        (lhs - rhs).abs() / rhs.abs()
    }
}
