//! Fixed-effects GLM engine: weighted log-likelihood, score and expected
//! information, IRLS fitting and negative-binomial dispersion estimation.
//!
//! A collapsed row with weight `w` contributes its likelihood raised to the
//! power `w`, so every quantity here is a weighted sum over rows.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Design;
use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg::{collinear_columns, spd_inverse, to_row_major, KahanSum};
use crate::model::{GlmSpec, ModelData, ModelFrame};
use crate::optim::brent_minimize;

/// Coefficients beyond this magnitude on the link scale are treated as diverging.
pub const SEPARATION_BOUND: f64 = 20.0;

const LOG_THETA_MIN: f64 = -9.0;
const LOG_THETA_MAX: f64 = 18.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Row-major `p x p` covariance of `beta`.
    pub vcov: Vec<f64>,
    pub loglik: f64,
    pub theta_hat: Option<f64>,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
    pub grad_max_norm: f64,
    /// Sum of row weights, i.e. the number of original observations.
    pub n_obs: f64,
    pub n_rows: usize,
    pub runtime_seconds: f64,
}

impl GlmFit {
    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.beta.len(), self.beta.len(), &self.vcov)
    }
}

#[derive(Debug, Clone)]
pub struct GlmOptions {
    pub estimate_theta: bool,
    pub max_iter: usize,
    pub tol: f64,
    pub init_beta: Option<Vec<f64>>,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { estimate_theta: false, max_iter: 100, tol: 1e-8, init_beta: None }
    }
}

pub fn frame_loglik(frame: &ModelFrame, family: &Family, beta: &[f64]) -> f64 {
    let mut acc = KahanSum::default();
    for i in 0..frame.n() {
        acc.add(frame.w[i] * family.log_density(frame.y[i], frame.eta(beta, i)));
    }
    acc.value()
}

pub fn frame_score(frame: &ModelFrame, family: &Family, beta: &[f64]) -> DVector<f64> {
    let p = frame.p();
    let mut g = vec![KahanSum::default(); p];
    for i in 0..frame.n() {
        let d1 = frame.w[i] * family.derivs(frame.y[i], frame.eta(beta, i)).d1;
        for (acc, x) in g.iter_mut().zip(frame.row(i)) {
            acc.add(d1 * x);
        }
    }
    DVector::from_iterator(p, g.iter().map(KahanSum::value))
}

fn weighted_gram(frame: &ModelFrame, mut weight: impl FnMut(usize) -> f64) -> DMatrix<f64> {
    let p = frame.p();
    let mut m = vec![0.0; p * p];
    for i in 0..frame.n() {
        let a = weight(i);
        if a == 0.0 {
            continue;
        }
        let x = frame.row(i);
        for r in 0..p {
            let ar = a * x[r];
            if ar == 0.0 {
                continue;
            }
            let row = &mut m[r * p..r * p + r + 1];
            for (c, slot) in row.iter_mut().enumerate() {
                *slot += ar * x[c];
            }
        }
    }
    let mut out = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in 0..=r {
            out[(r, c)] = m[r * p + c];
            out[(c, r)] = m[r * p + c];
        }
    }
    out
}

pub fn frame_information(frame: &ModelFrame, family: &Family, beta: &[f64]) -> DMatrix<f64> {
    weighted_gram(frame, |i| frame.w[i] * family.info_weight(frame.eta(beta, i)))
}

/// Weighted log-likelihood; rows of a collapsed dataset count `weight` times.
pub fn loglik(spec: &GlmSpec, beta: &[f64], data: &impl ModelData) -> Result<f64> {
    let frame = data.model_frame(spec)?;
    frame.check_beta(beta)?;
    Ok(frame_loglik(&frame, &spec.family, beta))
}

/// Gradient of [`loglik`] with respect to the coefficients.
pub fn score(spec: &GlmSpec, beta: &[f64], data: &impl ModelData) -> Result<Vec<f64>> {
    let frame = data.model_frame(spec)?;
    frame.check_beta(beta)?;
    Ok(frame_score(&frame, &spec.family, beta).iter().copied().collect())
}

/// Expected information `Σ w x xᵀ v(η)`.
pub fn fisher_information(spec: &GlmSpec, beta: &[f64], data: &impl ModelData) -> Result<DMatrix<f64>> {
    let frame = data.model_frame(spec)?;
    frame.check_beta(beta)?;
    Ok(frame_information(&frame, &spec.family, beta))
}

/// Expected information of a single observation at a design point
/// (unit weight, unit exposure).
pub fn unit_information(spec: &GlmSpec, beta: &[f64], covariates: &[String], design: &Design) -> Result<DMatrix<f64>> {
    let x = spec.design_row(covariates, &design.values)?;
    if x.len() != beta.len() {
        return Err(Error::Dimension(format!(
            "coefficient vector has length {}, design row has {}",
            beta.len(),
            x.len()
        )));
    }
    let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    let v = spec.family.info_weight(eta);
    let x = DVector::from_vec(x);
    Ok(&x * x.transpose() * v)
}

/// Fits the GLM by IRLS. With `estimate_theta` and a negative-binomial
/// family, dispersion is re-estimated by profile maximum likelihood between
/// IRLS passes until both stabilize.
pub fn glm_fit(spec: &GlmSpec, data: &impl ModelData, estimate_theta: bool) -> Result<GlmFit> {
    let start = Instant::now();
    let frame = data.model_frame(spec)?;
    let mut fit = fit_frame(&frame, &spec.family, &GlmOptions { estimate_theta, ..Default::default() })?;
    fit.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(fit)
}

/// Names of design columns that are linear combinations of earlier ones.
pub fn check_rank(frame: &ModelFrame) -> Result<()> {
    let gram = weighted_gram(frame, |i| frame.w[i]);
    let dropped = collinear_columns(&gram, 1e-9);
    if dropped.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(dropped.into_iter().map(|k| frame.coef_names[k].clone()).collect()))
    }
}

fn initial_beta(frame: &ModelFrame, family: &Family) -> Vec<f64> {
    let mut beta = vec![0.0; frame.p()];
    if frame.coef_names.first().map(String::as_str) == Some(crate::model::INTERCEPT) {
        let tw = frame.total_weight();
        let mean_y = frame.w.iter().zip(&frame.y).map(|(w, y)| w * y).sum::<f64>() / tw;
        beta[0] = match family {
            Family::Poisson | Family::NegativeBinomial { .. } => {
                let mean_exposure = frame.w.iter().zip(&frame.offset).map(|(w, o)| w * o.exp()).sum::<f64>() / tw;
                family.link(mean_y / mean_exposure)
            }
            _ => family.link(mean_y),
        };
    }
    beta
}

struct IrlsOutcome {
    beta: Vec<f64>,
    loglik: f64,
    grad_max: f64,
    converged: bool,
    separated: bool,
    iterations: usize,
}

fn irls(frame: &ModelFrame, family: &Family, mut beta: Vec<f64>, max_iter: usize, tol: f64) -> Result<IrlsOutcome> {
    let mut ll = frame_loglik(frame, family, &beta);
    let mut iterations = 0;
    let mut grad = frame_score(frame, family, &beta);
    loop {
        let grad_max = grad.amax();
        let separated = beta.iter().any(|b| b.abs() > SEPARATION_BOUND);
        if separated || grad_max < tol || iterations >= max_iter {
            return Ok(IrlsOutcome {
                converged: !separated && grad_max < tol,
                beta,
                loglik: ll,
                grad_max,
                separated,
                iterations,
            });
        }
        iterations += 1;
        let info = frame_information(frame, family, &beta);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                // information collapsed to singular: fitted means hit the boundary
                return Ok(IrlsOutcome {
                    converged: false,
                    beta,
                    loglik: ll,
                    grad_max,
                    separated: true,
                    iterations,
                });
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let cand_ll = frame_loglik(frame, family, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = frame_score(frame, family, &beta);
        if !accepted {
            let grad_max = grad.amax();
            return Ok(IrlsOutcome {
                converged: grad_max < tol,
                beta,
                loglik: ll,
                grad_max,
                separated: false,
                iterations,
            });
        }
    }
}

/// Moment-based starting value for theta: `mean² / (var − mean)`.
fn initial_log_theta(frame: &ModelFrame) -> f64 {
    let tw = frame.total_weight();
    let mean = frame.w.iter().zip(&frame.y).map(|(w, y)| w * y).sum::<f64>() / tw;
    let var = frame.w.iter().zip(&frame.y).map(|(w, y)| w * (y - mean).powi(2)).sum::<f64>() / tw;
    let theta = if var > mean * 1.0001 && mean > 0.0 { mean * mean / (var - mean) } else { 100.0 };
    theta.ln().clamp(LOG_THETA_MIN, LOG_THETA_MAX)
}

/// Maximizes the weighted log-likelihood over `log(theta)` at fixed linear predictors.
pub(crate) fn profile_log_theta(frame: &ModelFrame, beta: &[f64]) -> f64 {
    let etas: Vec<f64> = (0..frame.n()).map(|i| frame.eta(beta, i)).collect();
    let negll = |lt: f64| {
        let fam = Family::NegativeBinomial { theta: lt.exp() };
        let mut acc = KahanSum::default();
        for (i, &eta) in etas.iter().enumerate() {
            acc.add(frame.w[i] * fam.log_density(frame.y[i], eta));
        }
        -acc.value()
    };
    brent_minimize(negll, LOG_THETA_MIN, LOG_THETA_MAX, 1e-11, 200).0
}

/// Fits a GLM to an already-built model frame.
pub fn fit_frame(frame: &ModelFrame, family: &Family, opts: &GlmOptions) -> Result<GlmFit> {
    family.validate()?;
    check_rank(frame)?;
    let start = Instant::now();
    let beta0 = match &opts.init_beta {
        Some(b) => {
            frame.check_beta(b)?;
            b.clone()
        }
        None => initial_beta(frame, family),
    };
    let estimate_theta = opts.estimate_theta && matches!(family, Family::NegativeBinomial { .. });

    let (family, out, outer_converged, total_iter) = if estimate_theta {
        let mut log_theta = initial_log_theta(frame);
        let mut beta = beta0;
        let mut total = 0;
        let mut done = false;
        let mut last = None;
        for _ in 0..opts.max_iter {
            let fam = Family::NegativeBinomial { theta: log_theta.exp() };
            let out = irls(frame, &fam, beta.clone(), opts.max_iter, opts.tol)?;
            total += out.iterations;
            beta = out.beta.clone();
            if out.separated {
                last = Some((fam, out));
                break;
            }
            let new_lt = profile_log_theta(frame, &beta);
            let change = (new_lt - log_theta).abs();
            log_theta = new_lt;
            let inner_ok = out.converged;
            last = Some((fam, out));
            if change < 1e-8 && inner_ok {
                done = true;
                break;
            }
        }
        let fam = Family::NegativeBinomial { theta: log_theta.exp() };
        let (_, mut out) = last.expect("at least one pass");
        if done {
            // refresh loglik and gradient at the final theta
            out.loglik = frame_loglik(frame, &fam, &out.beta);
            out.grad_max = frame_score(frame, &fam, &out.beta).amax();
            out.converged = out.grad_max < opts.tol.max(1e-7);
        }
        (fam, out, done, total)
    } else {
        let out = irls(frame, family, beta0, opts.max_iter, opts.tol)?;
        let it = out.iterations;
        (*family, out, true, it)
    };

    let info = frame_information(frame, &family, &out.beta);
    let vcov = spd_inverse(&info).unwrap_or_else(|_| DMatrix::from_element(frame.p(), frame.p(), f64::NAN));
    let se = (0..frame.p()).map(|k| vcov[(k, k)].max(0.0).sqrt()).collect();
    Ok(GlmFit {
        coef_names: frame.coef_names.clone(),
        beta: out.beta,
        se,
        vcov: to_row_major(&vcov),
        loglik: out.loglik,
        theta_hat: if estimate_theta { family.theta() } else { None },
        converged: out.converged && outer_converged,
        separated: out.separated,
        iterations: total_iter,
        grad_max_norm: out.grad_max,
        n_obs: frame.total_weight(),
        n_rows: frame.n(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
