//! Response distributions with their canonical (or log) links.
//!
//! Every likelihood quantity is expressed per observation as a function of the
//! linear predictor `eta` (offset included); fitting code only ever needs the
//! log-density and its first three `eta` derivatives.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Family {
    /// Binary outcome, logit link.
    Bernoulli,
    /// Counts, log link.
    Poisson,
    /// Overdispersed counts, log link, variance `mu + mu^2 / theta`.
    NegativeBinomial { theta: f64 },
    /// Continuous outcome with known variance, identity link.
    Gaussian { sigma2: f64 },
}

/// Log-density of one observation and its derivatives in `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub ll: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Derivatives of the negative-binomial terms in `log(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DispersionDerivs {
    pub dll: f64,
    pub dd1: f64,
    pub dd2: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln Γ(y+θ) − ln Γ(θ)`, summed exactly for small integer `y`.
fn ln_gamma_ratio(y: f64, theta: f64) -> f64 {
    if y.fract() == 0.0 && y < 64.0 {
        (0..y as u32).map(|k| (theta + k as f64).ln()).sum()
    } else {
        ln_gamma(y + theta) - ln_gamma(theta)
    }
}

/// `ψ(y+θ) − ψ(θ)`.
fn digamma_ratio(y: f64, theta: f64) -> f64 {
    if y.fract() == 0.0 && y < 64.0 {
        (0..y as u32).map(|k| 1.0 / (theta + k as f64)).sum()
    } else {
        digamma(y + theta) - digamma(theta)
    }
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::NegativeBinomial { theta } if !(theta > 0.0 && theta.is_finite()) => {
                Err(Error::Invalid(format!("negative binomial theta must be positive, got {theta}")))
            }
            Family::Gaussian { sigma2 } if !(sigma2 > 0.0 && sigma2.is_finite()) => {
                Err(Error::Invalid(format!("gaussian sigma2 must be positive, got {sigma2}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::NegativeBinomial { .. } => "negative_binomial",
            Family::Gaussian { .. } => "gaussian",
        }
    }

    pub fn link_name(&self) -> &'static str {
        match self {
            Family::Bernoulli => "logit",
            Family::Poisson | Family::NegativeBinomial { .. } => "log",
            Family::Gaussian { .. } => "identity",
        }
    }

    /// True when coefficients are conventionally reported exponentiated
    /// (odds ratios or rate ratios).
    pub fn exponentiated_scale(&self) -> bool {
        !matches!(self, Family::Gaussian { .. })
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            Family::NegativeBinomial { theta } => Some(theta),
            _ => None,
        }
    }

    pub fn with_theta(&self, theta: f64) -> Family {
        match self {
            Family::NegativeBinomial { .. } => Family::NegativeBinomial { theta },
            other => *other,
        }
    }

    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self {
            Family::Bernoulli => logistic(eta),
            Family::Poisson | Family::NegativeBinomial { .. } => eta.exp(),
            Family::Gaussian { .. } => eta,
        }
    }

    /// Link applied to a mean, clamped away from the boundary of its domain.
    pub fn link(&self, mu: f64) -> f64 {
        match self {
            Family::Bernoulli => {
                let p = mu.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
            Family::Poisson | Family::NegativeBinomial { .. } => mu.max(1e-10).ln(),
            Family::Gaussian { .. } => mu,
        }
    }

    /// Checks that an outcome value lies in the family's support.
    pub fn check_outcome(&self, y: f64) -> Result<()> {
        let ok = match self {
            Family::Bernoulli => y == 0.0 || y == 1.0,
            Family::Poisson | Family::NegativeBinomial { .. } => y >= 0.0 && y.fract() == 0.0,
            Family::Gaussian { .. } => y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("outcome {y} outside the {} support", self.name())))
        }
    }

    pub fn log_density(&self, y: f64, eta: f64) -> f64 {
        self.derivs(y, eta).ll
    }

    /// Log-density and its first three derivatives with respect to `eta`.
    pub fn derivs(&self, y: f64, eta: f64) -> Derivs {
        match *self {
            Family::Bernoulli => {
                let mu = logistic(eta);
                let v = mu * (1.0 - mu);
                Derivs { ll: y * eta - softplus(eta), d1: y - mu, d2: -v, d3: -v * (1.0 - 2.0 * mu) }
            }
            Family::Poisson => {
                let mu = eta.exp();
                Derivs { ll: y * eta - mu - ln_gamma(y + 1.0), d1: y - mu, d2: -mu, d3: -mu }
            }
            Family::NegativeBinomial { theta } => {
                let mu = eta.exp();
                let tm = theta + mu;
                let ll = ln_gamma_ratio(y, theta) - ln_gamma(y + 1.0) - theta * (mu / theta).ln_1p()
                    + y * (eta - tm.ln());
                let d1 = theta * (y - mu) / tm;
                let d2 = -theta * mu * (y + theta) / (tm * tm);
                let d3 = -theta * (y + theta) * mu * (theta - mu) / (tm * tm * tm);
                Derivs { ll, d1, d2, d3 }
            }
            Family::Gaussian { sigma2 } => {
                let r = y - eta;
                Derivs {
                    ll: -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - r * r / (2.0 * sigma2),
                    d1: r / sigma2,
                    d2: -1.0 / sigma2,
                    d3: 0.0,
                }
            }
        }
    }

    /// Expected information contributed by one observation at `eta`:
    /// `(dmu/deta)^2 / Var(y)`.
    pub fn info_weight(&self, eta: f64) -> f64 {
        match *self {
            Family::Bernoulli => {
                let mu = logistic(eta);
                mu * (1.0 - mu)
            }
            Family::Poisson => eta.exp(),
            Family::NegativeBinomial { theta } => {
                let mu = eta.exp();
                theta * mu / (theta + mu)
            }
            Family::Gaussian { sigma2 } => 1.0 / sigma2,
        }
    }

    /// Derivatives of `ll`, `d1` and `d2` with respect to `log(theta)`; zero
    /// for families without a free dispersion.
    pub fn dispersion_derivs(&self, y: f64, eta: f64) -> DispersionDerivs {
        match *self {
            Family::NegativeBinomial { theta } => {
                let mu = eta.exp();
                let tm = theta + mu;
                let dll = digamma_ratio(y, theta) - (mu / theta).ln_1p() + (mu - y) / tm;
                let dd1 = (y - mu) * mu / (tm * tm);
                let dd2 = -mu * (y * mu - y * theta + 2.0 * theta * mu) / (tm * tm * tm);
                DispersionDerivs { dll: theta * dll, dd1: theta * dd1, dd2: theta * dd2 }
            }
            _ => DispersionDerivs::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<Family> {
        vec![
            Family::Bernoulli,
            Family::Poisson,
            Family::NegativeBinomial { theta: 2.5 },
            Family::Gaussian { sigma2: 1.7 },
        ]
    }

    fn outcomes(f: &Family) -> Vec<f64> {
        match f {
            Family::Bernoulli => vec![0.0, 1.0],
            Family::Gaussian { .. } => vec![-1.3, 0.4, 2.2],
            _ => vec![0.0, 1.0, 3.0, 17.0, 120.0],
        }
    }

    #[test]
    fn eta_derivatives_match_finite_differences() {
        let h = 1e-5;
        for f in families() {
            for y in outcomes(&f) {
                for &eta in &[-2.3, -0.2, 0.0, 0.7, 2.1] {
                    let d = f.derivs(y, eta);
                    let up = f.derivs(y, eta + h);
                    let dn = f.derivs(y, eta - h);
                    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + b.abs());
                    assert!(close(d.d1, (up.ll - dn.ll) / (2.0 * h)), "{f:?} d1");
                    assert!(close(d.d2, (up.d1 - dn.d1) / (2.0 * h)), "{f:?} d2");
                    assert!(close(d.d3, (up.d2 - dn.d2) / (2.0 * h)), "{f:?} d3");
                }
            }
        }
    }

    #[test]
    fn dispersion_derivatives_match_finite_differences() {
        let h = 1e-5;
        for y in [0.0, 1.0, 4.0, 30.0, 200.0] {
            for &eta in &[-1.0, 0.5, 2.0] {
                let at = |lt: f64| Family::NegativeBinomial { theta: lt.exp() };
                let lt = 0.9f64;
                let d = at(lt).dispersion_derivs(y, eta);
                let up = at(lt + h).derivs(y, eta);
                let dn = at(lt - h).derivs(y, eta);
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + b.abs());
                assert!(close(d.dll, (up.ll - dn.ll) / (2.0 * h)), "dll y={y}");
                assert!(close(d.dd1, (up.d1 - dn.d1) / (2.0 * h)), "dd1 y={y}");
                assert!(close(d.dd2, (up.d2 - dn.d2) / (2.0 * h)), "dd2 y={y}");
            }
        }
    }

    #[test]
    fn negative_binomial_density_sums_to_one() {
        let f = Family::NegativeBinomial { theta: 1.3 };
        let eta = 1.1f64;
        let total: f64 = (0..2000).map(|y| f.log_density(y as f64, eta).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        // series and gamma-function branches agree
        let a = ln_gamma_ratio(63.0, 1.3);
        let b = ln_gamma(64.3) - ln_gamma(1.3);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn negative_binomial_approaches_poisson() {
        let nb = Family::NegativeBinomial { theta: 1e9 };
        for y in [0.0, 2.0, 7.0] {
            assert!((nb.log_density(y, 0.8) - Family::Poisson.log_density(y, 0.8)).abs() < 1e-7);
        }
    }

    #[test]
    fn bernoulli_is_stable_at_extremes() {
        let d = Family::Bernoulli.derivs(1.0, 800.0);
        assert!(d.ll.is_finite() && d.ll.abs() < 1e-300);
        let d = Family::Bernoulli.derivs(0.0, -800.0);
        assert!(d.ll.is_finite());
    }
}
