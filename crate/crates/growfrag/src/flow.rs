//! Deterministic flow dx/dt = c(x) between jumps: closed forms for linear
//! growth, RK4 plus bisection otherwise.

use crate::error::{Error, Result};
use crate::model::GrowthSpec;

const MAX_RK4_STEPS: usize = 50_000_000;

#[derive(Clone, Debug)]
pub enum FlowSolver {
    /// Linear growth: flow_map(x, dt) = x e^{a dt} exactly.
    Exact,
    Numeric { rk4_step: f64, bisection_tol: f64 },
}

impl FlowSolver {
    pub fn for_growth(growth: &GrowthSpec) -> FlowSolver {
        if growth.is_linear() {
            FlowSolver::Exact
        } else {
            FlowSolver::Numeric {
                rk4_step: 1e-3,
                bisection_tol: 1e-12,
            }
        }
    }
}

/// Flow solver bound to a concrete growth rate.
#[derive(Clone, Debug)]
pub struct Flow {
    pub growth: GrowthSpec,
    pub solver: FlowSolver,
}

impl Flow {
    pub fn new(growth: GrowthSpec) -> Flow {
        let solver = FlowSolver::for_growth(&growth);
        Flow { growth, solver }
    }

    /// Position after following the flow for dt >= 0 from x.
    pub fn flow_map(&self, x: f64, dt: f64) -> Result<f64> {
        debug_assert!(dt >= 0.0);
        match &self.solver {
            FlowSolver::Exact => {
                let a = match self.growth {
                    GrowthSpec::Linear { a } => a,
                    _ => unreachable!(),
                };
                Ok(x * (a * dt).exp())
            }
            FlowSolver::Numeric { rk4_step, .. } => {
                let mut pos = x;
                let mut remaining = dt;
                let mut steps = 0usize;
                while remaining > 0.0 {
                    let h = remaining.min(*rk4_step);
                    pos = rk4_step_once(&self.growth, pos, h);
                    remaining -= h;
                    steps += 1;
                    if steps > MAX_RK4_STEPS || !pos.is_finite() {
                        return Err(Error::FlowDiverged { x, dt });
                    }
                }
                Ok(pos)
            }
        }
    }

    /// Time for the flow started at x to reach y >= x.
    pub fn time_to_reach(&self, x: f64, y: f64) -> Result<f64> {
        debug_assert!(y >= x);
        if y <= x {
            return Ok(0.0);
        }
        match &self.solver {
            FlowSolver::Exact => {
                let a = match self.growth {
                    GrowthSpec::Linear { a } => a,
                    _ => unreachable!(),
                };
                Ok((y / x).ln() / a)
            }
            FlowSolver::Numeric {
                rk4_step,
                bisection_tol,
            } => {
                // Step forward until y is bracketed, then bisect in time.
                let mut t_lo = 0.0;
                let mut p_lo = x;
                let mut steps = 0usize;
                loop {
                    let p_hi = rk4_step_once(&self.growth, p_lo, *rk4_step);
                    if p_hi >= y {
                        break;
                    }
                    t_lo += rk4_step;
                    p_lo = p_hi;
                    steps += 1;
                    if steps > MAX_RK4_STEPS || !p_hi.is_finite() {
                        return Err(Error::FlowDiverged { x, dt: t_lo });
                    }
                }
                let mut lo = 0.0;
                let mut hi = *rk4_step;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let p = rk4_step_once(&self.growth, p_lo, mid);
                    if p < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if (rk4_step_once(&self.growth, p_lo, hi) - y).abs() <= bisection_tol * y {
                        break;
                    }
                }
                Ok(t_lo + hi)
            }
        }
    }
}

fn rk4_step_once(growth: &GrowthSpec, x: f64, h: f64) -> f64 {
    let k1 = growth.rate(x);
    let k2 = growth.rate(x + 0.5 * h * k1);
    let k3 = growth.rate(x + 0.5 * h * k2);
    let k4 = growth.rate(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}
