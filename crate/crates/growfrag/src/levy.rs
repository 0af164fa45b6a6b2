//! Closed-form analytics for the homogeneous (linear-growth) case: the mass
//! process is the exponential of a compound-Poisson Levy process with drift,
//! and everything of interest is an explicit function of its Laplace
//! exponent. This module is the trusted oracle for the Monte Carlo
//! estimators.
//!
//! With drift a, total jump rate lambda and ratio density beta v^(beta-1),
//!   psi(theta)  = a theta - lambda theta / (beta + theta),   theta > -beta,
//!   kappa(theta) = psi(theta - 1) + a,
//!   theta0 = 1 - beta + sqrt(lambda beta / a),   rho = kappa(theta0) < a,
//!   L(q) = 1 - psi'(Phi(q - a)),   ell(x) = (x / x0)^(theta0 - 1).

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevyParams {
    /// Drift of the growth, c(x) = a x.
    pub a: f64,
    /// Total jump rate.
    pub lambda: f64,
    /// Power of the ratio law density beta v^(beta-1).
    pub beta: f64,
}

impl LevyParams {
    pub fn new(a: f64, lambda: f64, beta: f64) -> Result<LevyParams> {
        if !(a > 0.0 && lambda > 0.0 && beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "levy parameters must be positive: a={a}, lambda={lambda}, beta={beta}"
            )));
        }
        Ok(LevyParams { a, lambda, beta })
    }

    /// Laplace exponent of the log-mass process.
    pub fn psi(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(self.a * theta - self.lambda * theta / (self.beta + theta))
    }

    pub fn psi_prime(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        let d = self.beta + theta;
        Ok(self.a - self.lambda * self.beta / (d * d))
    }

    pub fn psi_second(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        let d = self.beta + theta;
        Ok(2.0 * self.lambda * self.beta / (d * d * d))
    }

    /// Cumulant of the growth-fragmentation operator: kappa(theta) =
    /// psi(theta-1) + a, so that x^theta is an eigenfunction with this
    /// eigenvalue.
    pub fn kappa(&self, theta: f64) -> Result<f64> {
        Ok(self.psi(theta - 1.0)? + self.a)
    }

    fn check_domain(&self, theta: f64) -> Result<()> {
        if theta <= -self.beta {
            Err(Error::OutOfDomain {
                theta,
                limit: -self.beta,
            })
        } else {
            Ok(())
        }
    }

    /// Minimizer theta0 of kappa and the spectral radius rho = kappa(theta0).
    pub fn theta0_rho(&self) -> Result<(f64, f64)> {
        let root = (self.lambda * self.beta / self.a).sqrt();
        if (root - self.beta).abs() < 1e-12 {
            return Err(Error::DriftZero);
        }
        let theta0 = 1.0 - self.beta + root;
        let rho = self.kappa(theta0)?;
        debug_assert!(rho < self.a);
        Ok((theta0, rho))
    }

    /// Right inverse of psi: Phi(q) = sup{theta : psi(theta) = q}, by
    /// safeguarded Newton on the increasing branch theta >= theta0 - 1.
    pub fn phi(&self, q: f64) -> Result<f64> {
        let (theta0, rho) = self.theta0_rho()?;
        let q_min = rho - self.a; // = psi(theta0 - 1)
        if q < q_min - 1e-12 {
            return Err(Error::OutOfDomain {
                theta: q,
                limit: q_min,
            });
        }
        let branch_lo = theta0 - 1.0;
        let mut lo = branch_lo;
        let mut hi = branch_lo + 1.0;
        while self.psi(hi)? < q {
            hi += hi - branch_lo;
        }
        let mut theta: f64 = branch_lo + 1.0;
        for _ in 0..200 {
            let val = self.psi(theta)? - q;
            if val > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            let deriv = self.psi_prime(theta)?;
            let mut next = if deriv > 0.0 { theta - val / deriv } else { theta };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi); // safeguard: fall back to bisection
            }
            if (next - theta).abs() <= 1e-14 * (1.0 + theta.abs()) {
                return Ok(next);
            }
            theta = next;
        }
        Ok(theta)
    }

    /// Closed-form first-return Laplace transform L_{x0,x0}(q) for q >= rho.
    pub fn l_closed(&self, q: f64) -> Result<f64> {
        let (_, rho) = self.theta0_rho()?;
        if q < rho - 1e-12 {
            return Err(Error::OutOfDomain {
                theta: q,
                limit: rho,
            });
        }
        Ok(1.0 - self.psi_prime(self.phi(q - self.a)?)?)
    }

    /// -L'_{x0,x0}(q) = psi''(Phi(q-a)) / psi'(Phi(q-a)); infinite at q = rho.
    pub fn minus_l_prime(&self, q: f64) -> Result<f64> {
        let phi = self.phi(q - self.a)?;
        Ok(self.psi_second(phi)? / self.psi_prime(phi)?)
    }

    /// Eigenfunction ell(x) = (x/x0)^(theta0 - 1).
    pub fn ell_closed(&self, x: f64, x0: f64) -> Result<f64> {
        let (theta0, _) = self.theta0_rho()?;
        Ok((x / x0).powf(theta0 - 1.0))
    }

    /// Local-CLT large-time value of T_t f(x):
    /// x^theta0 e^{t kappa(theta0)} / sqrt(2 pi t kappa''(theta0)) * int f(y) y^-(theta0+1) dy.
    pub fn asymptotic_value<F>(&self, t: f64, f: F, x: f64, support: (f64, f64)) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let (theta0, rho) = self.theta0_rho()?;
        let kpp = self.psi_second(theta0 - 1.0)?;
        let profile = crate::quad::adaptive_simpson(
            &|y: f64| f(y) * y.powf(-(theta0 + 1.0)),
            support.0,
            support.1,
            1e-12,
        );
        Ok(x.powf(theta0) * (t * rho).exp() / (2.0 * std::f64::consts::PI * t * kpp).sqrt()
            * profile)
    }
}
