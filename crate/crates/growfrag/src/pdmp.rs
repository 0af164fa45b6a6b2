//! Simulation of the mass process: deterministic flow punctuated by downward
//! jumps, its exponential functional, hitting times, and the Monte Carlo
//! semigroup estimator.
//!
//! Jump epochs are produced by thinning against the global rate bound Ksup,
//! which is exact for bounded rates. The exponential functional is tracked
//! through the jump-ratio product identity
//! log E_t = log(X_t / X_0) + sum over jumps of log(pre/post),
//! so no quadrature error enters the Laplace-transform estimates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::flow::Flow;
use crate::model::ValidatedModel;
use crate::quad::mean_stderr;
use crate::rng::stream_rng;

#[derive(Clone, Debug)]
pub struct Event {
    pub time: f64,
    pub pre: f64,
    pub post: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub start: f64,
    pub events: Vec<Event>,
    pub end_time: f64,
    pub end_mass: f64,
    pub log_e: f64,
}

#[derive(Clone, Debug)]
pub struct HitSample {
    pub target: f64,
    /// Hitting time; meaningful iff `hit`.
    pub h: f64,
    /// log of the exponential functional at the hit; meaningful iff `hit`.
    pub log_w: f64,
    pub hit: bool,
    pub censor_time: f64,
}

#[derive(Clone, Debug)]
pub struct HitSampleSet {
    pub source: f64,
    pub target: f64,
    pub censor_time: f64,
    pub samples: Vec<HitSample>,
    pub seed: u64,
    pub model_label: String,
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Jump mechanism driven by thinning: a dominating proposal rate plus an
/// acceptance probability that may depend on the pre-jump mass and the
/// proposed ratio.
pub(crate) trait JumpLaw: Sync {
    fn dominating_rate(&self) -> f64;
    fn acceptance(&self, pre: f64, v: f64) -> Result<f64>;
}

pub(crate) struct BaseJump<'a> {
    pub model: &'a ValidatedModel,
}

impl JumpLaw for BaseJump<'_> {
    fn dominating_rate(&self) -> f64 {
        self.model.ksup()
    }

    fn acceptance(&self, pre: f64, _v: f64) -> Result<f64> {
        Ok(self.model.rate_k(pre) / self.model.ksup())
    }
}

pub(crate) enum Stop {
    /// Run to a fixed horizon.
    Time(f64),
    /// Stop at the first up-crossing of `target`, censoring at `t_max`.
    Hit { target: f64, t_max: f64 },
}

pub(crate) struct PathEnd {
    pub end_time: f64,
    pub end_mass: f64,
    /// Sum of log(pre/post) over accepted jumps.
    pub sum_jump_log: f64,
    pub hit: bool,
}

/// Core event loop shared by the base and tilted simulations.
///
/// `on_segment(t0, p, dt)` is called for every maximal flow segment before
/// the state changes; `on_event(t, pre, post)` for every accepted jump. The
/// draw order per proposal is fixed (waiting time, ratio, acceptance) so
/// that a trivial tilt reproduces the base path bit for bit.
pub(crate) fn evolve<J, S, E>(
    model: &ValidatedModel,
    flow: &Flow,
    jump: &J,
    x: f64,
    stop: Stop,
    rng: &mut ChaCha8Rng,
    mut on_segment: S,
    mut on_event: E,
) -> Result<PathEnd>
where
    J: JumpLaw,
    S: FnMut(f64, f64, f64),
    E: FnMut(f64, f64, f64),
{
    let rate = jump.dominating_rate();
    let t_stop = match stop {
        Stop::Time(t) => t,
        Stop::Hit { t_max, .. } => t_max,
    };
    let mut t = 0.0;
    let mut p = x;
    let mut sum_jump_log = 0.0;
    loop {
        let dt_prop = if rate > 0.0 {
            -(1.0 - rng.gen::<f64>()).ln() / rate
        } else {
            f64::INFINITY
        };
        let t_jump = t + dt_prop;
        // A hit can only occur as a continuous up-crossing: the process has
        // no positive jumps, so crossings from below are the only way to
        // land exactly on the target.
        if let Stop::Hit { target, .. } = stop {
            if p < target {
                let t_cross = t + flow.time_to_reach(p, target)?;
                if t_cross <= t_jump && t_cross <= t_stop {
                    on_segment(t, p, t_cross - t);
                    return Ok(PathEnd {
                        end_time: t_cross,
                        end_mass: target,
                        sum_jump_log,
                        hit: true,
                    });
                }
            }
        }
        if t_jump <= t_stop {
            on_segment(t, p, dt_prop);
            let pre = flow.flow_map(p, dt_prop)?;
            t = t_jump;
            let mut u_ratio: f64 = rng.gen();
            if u_ratio == 0.0 {
                u_ratio = 0.5; // keep jumps strictly interior
            }
            let v = model.ratio_law().sample_from_uniform(u_ratio);
            let u_acc: f64 = rng.gen();
            let acc = jump.acceptance(pre, v)?;
            if u_acc < acc {
                let post = pre * v;
                on_event(t, pre, post);
                sum_jump_log += -v.ln();
                p = post;
            } else {
                p = pre;
            }
        } else {
            let dt = t_stop - t;
            on_segment(t, p, dt);
            let end_mass = flow.flow_map(p, dt)?;
            return Ok(PathEnd {
                end_time: t_stop,
                end_mass,
                sum_jump_log,
                hit: false,
            });
        }
    }
}

/// log of the exponential functional at the end of a time-horizon path.
fn log_e_at_end(model: &ValidatedModel, end: &PathEnd, start: f64) -> f64 {
    if model.growth().is_linear() {
        // exp integral of c(X)/X is exactly a*t for linear growth
        model.cbar_sup() * end.end_time
    } else {
        (end.end_mass / start).ln() + end.sum_jump_log
    }
}

/// Exact-in-law simulation of the process over [0, t_end].
pub fn simulate_path(
    model: &ValidatedModel,
    x: f64,
    t_end: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let flow = Flow::new(model.growth().clone());
    let mut events = Vec::new();
    let end = evolve(
        model,
        &flow,
        &BaseJump { model },
        x,
        Stop::Time(t_end),
        rng,
        |_, _, _| {},
        |time, pre, post| events.push(Event { time, pre, post }),
    )?;
    let log_e = log_e_at_end(model, &end, x);
    Ok(Trajectory {
        start: x,
        events,
        end_time: end.end_time,
        end_mass: end.end_mass,
        log_e,
    })
}

/// One sample of (H(y), log E_{H(y)}), censored at t_max.
pub fn sample_hitting(
    model: &ValidatedModel,
    x: f64,
    y: f64,
    t_max: f64,
    rng: &mut ChaCha8Rng,
) -> Result<HitSample> {
    let flow = Flow::new(model.growth().clone());
    let end = evolve(
        model,
        &flow,
        &BaseJump { model },
        x,
        Stop::Hit {
            target: y,
            t_max,
        },
        rng,
        |_, _, _| {},
        |_, _, _| {},
    )?;
    Ok(HitSample {
        target: y,
        h: end.end_time,
        log_w: (y / x).ln() + end.sum_jump_log,
        hit: end.hit,
        censor_time: t_max,
    })
}

/// n i.i.d. hitting samples from source x to target y; stream `i` of the
/// given (seed, block) pair drives path i regardless of scheduling.
pub fn sample_hit_set(
    model: &ValidatedModel,
    x: f64,
    y: f64,
    n: usize,
    t_max: f64,
    seed: u64,
    block: u32,
) -> Result<HitSampleSet> {
    let samples: Result<Vec<HitSample>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, block, i as u32);
            sample_hitting(model, x, y, t_max, &mut rng)
        })
        .collect();
    Ok(HitSampleSet {
        source: x,
        target: y,
        censor_time: t_max,
        samples: samples?,
        seed,
        model_label: model.label().to_string(),
    })
}

/// Monte Carlo semigroup estimate T_t f(x) = x E[E_t f(X_t)/X_t].
pub fn feynman_kac<F>(
    model: &ValidatedModel,
    x: f64,
    t: f64,
    f: F,
    n: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let flow = Flow::new(model.growth().clone());
    let values: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, 0, i as u32);
            let end = evolve(
                model,
                &flow,
                &BaseJump { model },
                x,
                Stop::Time(t),
                &mut rng,
                |_, _, _| {},
                |_, _, _| {},
            )?;
            let log_e = log_e_at_end(model, &end, x);
            Ok(x * log_e.exp() * (f(end.end_mass) / end.end_mass))
        })
        .collect();
    let values = values?;
    let (mean, stderr) = mean_stderr(&values);
    Ok(Estimate { mean, stderr })
}

/// Monte Carlo estimate of the time-integrated, discounted semigroup
/// int_0^t e^{-q s} T_s f(x) ds, by per-segment Gauss-Legendre quadrature
/// along each path.
pub fn integrated_fk<F>(
    model: &ValidatedModel,
    x: f64,
    t: f64,
    q: f64,
    f: F,
    n: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let flow = Flow::new(model.growth().clone());
    let (nodes, weights) = crate::quad::gauss_legendre_unit(8);
    let values: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, 0, i as u32);
            let acc = std::cell::Cell::new(0.0);
            let jump_log = std::cell::Cell::new(0.0);
            let flow_ref = &flow;
            evolve(
                model,
                &flow,
                &BaseJump { model },
                x,
                Stop::Time(t),
                &mut rng,
                |t0, p, dt| {
                    // E_{t0} = (p/x) * exp(jump_log so far)
                    let log_e0 = (p / x).ln() + jump_log.get();
                    let scale = x * (log_e0 - q * t0).exp() / p;
                    let mut seg = 0.0;
                    for (&s, &w) in nodes.iter().zip(weights.iter()) {
                        let tau = s * dt;
                        let pos = flow_ref.flow_map(p, tau).unwrap();
                        seg += w * (-q * tau).exp() * f(pos);
                    }
                    acc.set(acc.get() + scale * seg * dt);
                },
                |_, pre, post| {
                    jump_log.set(jump_log.get() + (pre / post).ln());
                },
            )?;
            Ok(acc.get())
        })
        .collect();
    let values = values?;
    let (mean, stderr) = mean_stderr(&values);
    Ok(Estimate { mean, stderr })
}

/// Mean and standard error of per-path values produced by `f` over n
/// independent streams; reduction is index-ordered and pairwise.
pub fn monte_carlo<F>(n: usize, seed: u64, block: u32, f: F) -> Result<Estimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let values: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, block, i as u32);
            f(&mut rng)
        })
        .collect();
    let values = values?;
    let (mean, stderr) = mean_stderr(&values);
    Ok(Estimate { mean, stderr })
}

/// Sum per-path values without averaging (used by CSV dumps).
pub fn collect_paths<F, T>(n: usize, seed: u64, block: u32, f: F) -> Result<Vec<T>>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
    T: Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, block, i as u32);
            f(i, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use approx::assert_abs_diff_eq;

    fn ub() -> ValidatedModel {
        presets::uniform_binary(1.0, 4.0, 1.0, 1.0).validate().unwrap()
    }

    fn levy() -> ValidatedModel {
        presets::levy(1.0, 4.0, 2.0, 1.0).validate().unwrap()
    }

    #[test]
    fn no_jumps_when_rate_is_zero() {
        let m = presets::uniform_binary(1.0, 0.0, 1.0, 1.0).validate().unwrap();
        let mut rng = stream_rng(1, 0, 0);
        let tr = simulate_path(&m, 1.0, 2.0, &mut rng).unwrap();
        assert!(tr.events.is_empty());
        assert_abs_diff_eq!(tr.end_mass, (2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn exponential_functional_is_exact_for_linear_growth() {
        let m = ub();
        let mut rng = stream_rng(2, 0, 0);
        let tr = simulate_path(&m, 1.0, 3.0, &mut rng).unwrap();
        assert_eq!(tr.log_e, 3.0);
        // product identity agrees
        let jump_log: f64 = tr.events.iter().map(|e| (e.pre / e.post).ln()).sum();
        assert_abs_diff_eq!(
            tr.log_e,
            (tr.end_mass / tr.start).ln() + jump_log,
            epsilon = 1e-9
        );
    }

    #[test]
    fn trajectory_invariants() {
        let m = levy();
        for i in 0..50 {
            let mut rng = stream_rng(3, 0, i);
            let tr = simulate_path(&m, 0.7, 2.0, &mut rng).unwrap();
            let mut prev_t = 0.0;
            for e in &tr.events {
                assert!(e.time > prev_t);
                assert!(e.post < e.pre);
                prev_t = e.time;
            }
            // uniform bound on the exponential functional
            assert!(tr.log_e <= m.cbar_sup() * tr.end_time + 1e-12);
        }
    }

    #[test]
    fn poisson_event_count_for_constant_rate() {
        let m = levy();
        let n = 100_000usize;
        let est = monte_carlo(n, 11, 0, |rng| {
            let tr = simulate_path(&m, 1.0, 1.0, rng)?;
            Ok(tr.events.len() as f64)
        })
        .unwrap();
        // Poisson(4) mean 4, sd 2
        assert!((est.mean - 4.0).abs() < 3.0 * est.stderr, "mean={}", est.mean);
    }

    #[test]
    fn deterministic_hit_without_jumps() {
        let m = presets::uniform_binary(1.0, 0.0, 1.0, 1.0).validate().unwrap();
        let mut rng = stream_rng(4, 0, 0);
        let s = sample_hitting(&m, 1.0, 2.0, 100.0, &mut rng).unwrap();
        assert!(s.hit);
        assert_abs_diff_eq!(s.h, (2.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.log_w, (2.0f64).ln(), epsilon = 1e-12);
        // downward target unreachable by pure growth
        let mut rng = stream_rng(4, 0, 1);
        let s = sample_hitting(&m, 1.0, 0.5, 50.0, &mut rng).unwrap();
        assert!(!s.hit);
    }

    #[test]
    fn levy_return_probability_is_half() {
        // P(H(x0) < inf) = 1 - psi'(Phi(0)) = 1/2 for (a, lambda, beta) = (1, 4, 2)
        let m = levy();
        let set = sample_hit_set(&m, 1.0, 1.0, 100_000, 200.0, 5, 0).unwrap();
        let frac =
            set.samples.iter().filter(|s| s.hit).count() as f64 / set.samples.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "hit fraction {frac}");
    }

    #[test]
    fn feynman_kac_identity_function_has_zero_variance() {
        let m = ub();
        let est = feynman_kac(&m, 2.0, 1.5, |y| y, 500, 6).unwrap();
        assert_abs_diff_eq!(est.mean, 2.0 * (1.5f64).exp(), epsilon = 1e-10);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn feynman_kac_no_jumps_is_deterministic() {
        let m = presets::uniform_binary(1.0, 0.0, 1.0, 1.0).validate().unwrap();
        let f = |y: f64| (y - 1.0).cos();
        let est = feynman_kac(&m, 1.0, 0.7, f, 100, 7).unwrap();
        let end = (0.7f64).exp();
        assert_abs_diff_eq!(est.mean, f(end), epsilon = 1e-12);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn identical_seeds_reproduce_paths_bit_for_bit() {
        let m = ub();
        let mut r1 = stream_rng(42, 3, 9);
        let mut r2 = stream_rng(42, 3, 9);
        let a = simulate_path(&m, 1.3, 5.0, &mut r1).unwrap();
        let b = simulate_path(&m, 1.3, 5.0, &mut r2).unwrap();
        assert_eq!(a.end_mass.to_bits(), b.end_mass.to_bits());
        assert_eq!(a.events.len(), b.events.len());
        for (ea, eb) in a.events.iter().zip(&b.events) {
            assert_eq!(ea.time.to_bits(), eb.time.to_bits());
            assert_eq!(ea.post.to_bits(), eb.post.to_bits());
        }
    }

    #[test]
    fn product_identity_matches_quadrature_for_general_growth() {
        use crate::model::{FragRate, FragmentationSpec, GrowthSpec, ModelSpec, RatioLaw};
        use std::sync::Arc;
        let m = ModelSpec {
            growth: GrowthSpec::General {
                c: Arc::new(|x: f64| x / (1.0 + x)),
                cbar_sup: 1.0,
            },
            frag: FragmentationSpec {
                rate: FragRate::Constant { b: 2.0 },
                ratio: RatioLaw::PowerBeta { beta: 2.0 },
            },
            x0: 1.0,
            label: "general".into(),
        }
        .validate()
        .unwrap();
        let flow = Flow::new(m.growth().clone());
        let (nodes, weights) = crate::quad::gauss_legendre_unit(16);
        for i in 0..5 {
            let mut rng = stream_rng(8, 0, i);
            let mut quad_log_e = 0.0;
            let end = evolve(
                &m,
                &flow,
                &BaseJump { model: &m },
                1.0,
                Stop::Time(2.0),
                &mut rng,
                |_, p, dt| {
                    for (&s, &w) in nodes.iter().zip(weights.iter()) {
                        let pos = flow.flow_map(p, s * dt).unwrap();
                        quad_log_e += w * dt * m.cbar(pos);
                    }
                },
                |_, _, _| {},
            )
            .unwrap();
            let prod_log_e = (end.end_mass / 1.0f64).ln() + end.sum_jump_log;
            assert!((prod_log_e - quad_log_e).abs() < 1e-6);
        }
    }

    #[test]
    fn thinning_reproduces_state_dependent_exponential_rate() {
        // Freeze the flow (c tiny) so the position stays near p; the
        // inter-jump times must then be Exponential(K(p)) even though the
        // proposals run at Ksup.
        use crate::model::{FragRate, FragmentationSpec, GrowthSpec, ModelSpec, RatioLaw};
        use std::sync::Arc;
        let p0 = 1.0;
        let m = ModelSpec {
            growth: GrowthSpec::General {
                c: Arc::new(|_x: f64| 1e-12),
                cbar_sup: 1.0,
            },
            frag: FragmentationSpec {
                rate: FragRate::Saturating { b: 4.0, gamma0: 1.0 },
                ratio: RatioLaw::SizeBiasedUniformBinary,
            },
            x0: 1.0,
            label: "frozen".into(),
        }
        .validate()
        .unwrap();
        let k_p = m.rate_k(p0); // = 2
        let flow = Flow {
            growth: m.growth().clone(),
            solver: crate::flow::FlowSolver::Numeric {
                rk4_step: 1.0,
                bisection_tol: 1e-12,
            },
        };
        let n = 100_000usize;
        let mut times: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = stream_rng(9, 0, i as u32);
                // first accepted jump time starting from p0
                let mut first: Option<f64> = None;
                let _ = evolve(
                    &m,
                    &flow,
                    &BaseJump { model: &m },
                    p0,
                    // P(no jump by 20) = e^{-40}: truncation is negligible
                    Stop::Time(20.0),
                    &mut rng,
                    |_, _, _| {},
                    |t, _, _| {
                        if first.is_none() {
                            first = Some(t);
                        }
                    },
                );
                first.unwrap()
            })
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Kolmogorov-Smirnov against Exp(K(p0)) at significance 1e-3
        let mut d: f64 = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let cdf = 1.0 - (-k_p * t).exp();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        let crit = ((2.0f64 / 1e-3).ln() / 2.0).sqrt() / (n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }
}
