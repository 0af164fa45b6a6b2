//! Problem definition: growth rate, fragmentation kernel, and the derived
//! quantities (K, Ksup, c-bar, moment ratios) every estimator consumes.
//!
//! The kernel is parameterized by the total jump rate K together with the
//! size-biased daughter-ratio law Q, which is exactly what simulation needs;
//! the classical kernel is recovered as k(x,y) = (x/y) * K(x) * q(y/x) / x.
//! Built-in ratio laws have full support in (0,1), which guarantees the
//! irreducibility the theory assumes; custom laws must ensure it themselves.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quad;

/// Growth rate c(x). Must be positive and bounded above by a linear function.
#[derive(Clone)]
pub enum GrowthSpec {
    /// c(x) = a * x
    Linear { a: f64 },
    /// Arbitrary positive rate with a declared finite bound on sup c(x)/x.
    General {
        c: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        cbar_sup: f64,
    },
}

impl fmt::Debug for GrowthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthSpec::Linear { a } => write!(f, "Linear {{ a: {a} }}"),
            GrowthSpec::General { cbar_sup, .. } => {
                write!(f, "General {{ cbar_sup: {cbar_sup} }}")
            }
        }
    }
}

impl GrowthSpec {
    pub fn rate(&self, x: f64) -> f64 {
        match self {
            GrowthSpec::Linear { a } => a * x,
            GrowthSpec::General { c, .. } => c(x),
        }
    }

    /// c(x)/x
    pub fn rate_bar(&self, x: f64) -> f64 {
        match self {
            GrowthSpec::Linear { a } => *a,
            GrowthSpec::General { c, .. } => c(x) / x,
        }
    }

    pub fn cbar_sup(&self) -> f64 {
        match self {
            GrowthSpec::Linear { a } => *a,
            GrowthSpec::General { cbar_sup, .. } => *cbar_sup,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, GrowthSpec::Linear { .. })
    }
}

/// Size-biased daughter-ratio law: the distribution of V = (post-jump mass) /
/// (pre-jump mass) followed by the tagged fragment.
#[derive(Clone, Debug, PartialEq)]
pub enum RatioLaw {
    /// Density 2v on (0,1): binary splitting with a uniform fragment pair.
    SizeBiasedUniformBinary,
    /// Density beta * v^(beta-1) on (0,1).
    PowerBeta { beta: f64 },
}

impl RatioLaw {
    pub fn beta(&self) -> f64 {
        match self {
            RatioLaw::SizeBiasedUniformBinary => 2.0,
            RatioLaw::PowerBeta { beta } => *beta,
        }
    }

    pub fn density(&self, v: f64) -> f64 {
        if !(0.0..1.0).contains(&v) {
            return 0.0;
        }
        let beta = self.beta();
        beta * v.powf(beta - 1.0)
    }

    /// Inverse-transform sample; consumes exactly one uniform draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        u.powf(1.0 / self.beta())
    }

    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        u.powf(1.0 / self.beta())
    }

    /// M(s) = E[V^s]; finite iff s > -beta.
    pub fn moment(&self, s: f64) -> Result<f64> {
        let beta = self.beta();
        if s <= -beta {
            return Err(Error::Diverged { s });
        }
        Ok(beta / (s + beta))
    }

    /// P(V < v0), used for the PDE boundary-leak estimate.
    pub fn cdf(&self, v0: f64) -> f64 {
        v0.clamp(0.0, 1.0).powf(self.beta())
    }
}

/// Total fragmentation rate K(x). Bounded by construction.
#[derive(Clone, Debug, PartialEq)]
pub enum FragRate {
    /// K(x) = b
    Constant { b: f64 },
    /// K(x) = b * x^gamma0 / (1 + x^gamma0)
    Saturating { b: f64, gamma0: f64 },
}

impl FragRate {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            FragRate::Constant { b } => *b,
            FragRate::Saturating { b, gamma0 } => {
                let p = x.powf(*gamma0);
                b * p / (1.0 + p)
            }
        }
    }

    pub fn ksup(&self) -> f64 {
        match self {
            FragRate::Constant { b } | FragRate::Saturating { b, .. } => *b,
        }
    }

    /// (beta0, gamma0, beta_inf, gamma_inf) in K(x) ~ beta0 x^gamma0 (x->0),
    /// K(x) ~ beta_inf x^gamma_inf (x->inf).
    pub fn asymptotics(&self) -> (f64, f64, f64, f64) {
        match self {
            FragRate::Constant { b } => (*b, 0.0, *b, 0.0),
            FragRate::Saturating { b, gamma0 } => (*b, *gamma0, *b, 0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FragmentationSpec {
    pub rate: FragRate,
    pub ratio: RatioLaw,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub growth: GrowthSpec,
    pub frag: FragmentationSpec,
    pub x0: f64,
    pub label: String,
}

/// Validation grid parameters.
#[derive(Clone, Debug)]
pub struct ValidationGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid {
            lo: 1e-4,
            hi: 1e4,
            n: 256,
        }
    }
}

impl ModelSpec {
    pub fn validate(self) -> Result<ValidatedModel> {
        self.validate_on(&ValidationGrid::default())
    }

    pub fn validate_on(self, grid: &ValidationGrid) -> Result<ValidatedModel> {
        let mut violations = Vec::new();
        if !(self.x0 > 0.0) {
            violations.push(Error::InvalidConfig(format!(
                "x0 must be positive, got {}",
                self.x0
            )));
        }
        let cbar_sup = self.growth.cbar_sup();
        let ksup = self.frag.rate.ksup();
        for &x in &quad::log_grid(grid.lo, grid.hi, grid.n) {
            let c = self.growth.rate(x);
            if !(c > 0.0) {
                violations.push(Error::InvalidConfig(format!(
                    "growth rate c({x}) = {c} is not positive"
                )));
                break;
            }
            let ratio = c / x;
            if ratio > cbar_sup * (1.0 + 1e-12) {
                violations.push(Error::CBoundViolated {
                    x,
                    ratio,
                    bound: cbar_sup,
                });
                break;
            }
        }
        for &x in &quad::log_grid(grid.lo, grid.hi, grid.n) {
            let k = self.frag.rate.value(x);
            if k > ksup * (1.0 + 1e-12) {
                violations.push(Error::KUnbounded {
                    x,
                    value: k,
                    bound: ksup,
                });
                break;
            }
        }
        // Normalization of the ratio density, by quadrature in u = sqrt(v)
        // (removes the integrable singularity of v^(beta-1) for beta > 1/2).
        let law = self.frag.ratio.clone();
        let integral = quad::adaptive_simpson(
            &|u: f64| 2.0 * u * law.density(u * u),
            0.0,
            1.0,
            1e-12,
        );
        if (integral - 1.0).abs() > 1e-10 {
            violations.push(Error::RatioDensityNotNormalized { integral });
        }
        if violations.is_empty() {
            Ok(ValidatedModel { spec: self })
        } else {
            Err(Error::ValidationFailed(violations))
        }
    }
}

/// A model that passed validation. Immutable; safe to share across workers.
#[derive(Clone, Debug)]
pub struct ValidatedModel {
    spec: ModelSpec,
}

impl ValidatedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn label(&self) -> &str {
        &self.spec.label
    }

    pub fn x0(&self) -> f64 {
        self.spec.x0
    }

    pub fn growth(&self) -> &GrowthSpec {
        &self.spec.growth
    }

    pub fn c(&self, x: f64) -> f64 {
        self.spec.growth.rate(x)
    }

    /// c(x)/x
    pub fn cbar(&self, x: f64) -> f64 {
        self.spec.growth.rate_bar(x)
    }

    pub fn cbar_sup(&self) -> f64 {
        self.spec.growth.cbar_sup()
    }

    pub fn rate_k(&self, x: f64) -> f64 {
        self.spec.frag.rate.value(x)
    }

    pub fn ksup(&self) -> f64 {
        self.spec.frag.rate.ksup()
    }

    pub fn ratio_law(&self) -> &RatioLaw {
        &self.spec.frag.ratio
    }

    /// M_x(s) = E[V^s] under the ratio law at x. Built-in laws do not depend
    /// on x, so this coincides with moment_sup.
    pub fn moment_ratio(&self, _x: f64, s: f64) -> Result<f64> {
        self.spec.frag.ratio.moment(s)
    }

    /// M(s) = sup_x M_x(s).
    pub fn moment_sup(&self, s: f64) -> Result<f64> {
        self.spec.frag.ratio.moment(s)
    }

    /// Size-biased kernel density k-bar(x, y) = K(x) q(y/x) / x, zero for y >= x.
    pub fn kernel_density(&self, x: f64, y: f64) -> f64 {
        if y <= 0.0 || y >= x {
            return 0.0;
        }
        self.rate_k(x) * self.spec.frag.ratio.density(y / x) / x
    }
}

/// Convenience constructors for the two showcase models.
pub mod presets {
    use super::*;

    /// Linear growth a, saturating rate b x^g/(1+x^g), uniform-binary ratios.
    pub fn uniform_binary(a: f64, b: f64, gamma0: f64, x0: f64) -> ModelSpec {
        ModelSpec {
            growth: GrowthSpec::Linear { a },
            frag: FragmentationSpec {
                rate: FragRate::Saturating { b, gamma0 },
                ratio: RatioLaw::SizeBiasedUniformBinary,
            },
            x0,
            label: format!("ub a={a} b={b} gamma0={gamma0}"),
        }
    }

    /// Linear growth a, constant rate lambda, power-beta ratios: the
    /// homogeneous model with closed-form analytics.
    pub fn levy(a: f64, lambda: f64, beta: f64, x0: f64) -> ModelSpec {
        ModelSpec {
            growth: GrowthSpec::Linear { a },
            frag: FragmentationSpec {
                rate: FragRate::Constant { b: lambda },
                ratio: RatioLaw::PowerBeta { beta },
            },
            x0,
            label: format!("levy a={a} lambda={lambda} beta={beta}"),
        }
    }
}
