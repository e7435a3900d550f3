//! Random-intercept GLMM: `g(mu_ij) = x_ij beta + b_j`, `b_j ~ N(0, tau2)`.
//!
//! The marginal likelihood integrates each cluster's random intercept out by
//! adaptive Gauss–Hermite quadrature centred at the cluster's posterior mode.
//! Gradients are analytic (the mode and curvature are differentiated
//! implicitly); standard errors come from a finite-difference Hessian of that
//! gradient.

use std::f64::consts::PI;
use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::glm::{fit_frame, frame_loglik, GlmFit, GlmOptions, SEPARATION_BOUND};
use crate::linalg::{spd_inverse, to_row_major, KahanSum};
use crate::model::{GlmmSpec, ModelData, ModelFrame};
use crate::optim::{bfgs, brent_minimize, hessian_from_gradient, BfgsOptions};
use crate::quadrature::GaussHermite;

/// Below this value of `ln tau2` the variance is treated as exactly zero.
pub const LOG_TAU2_FLOOR: f64 = -30.0;

/// Smallest tau2 a warm start begins from.
const WARM_TAU2_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMode {
    pub cluster: String,
    pub mode: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Row-major covariance of `beta`.
    pub vcov: Vec<f64>,
    pub tau2: f64,
    /// Delta-method standard error of `tau2`; absent on the boundary.
    pub tau2_se: Option<f64>,
    pub theta_hat: Option<f64>,
    /// Marginal log-likelihood at the estimates.
    pub loglik: f64,
    pub eb_modes: Vec<ClusterMode>,
    pub converged: bool,
    /// Some coefficient exceeded the separation bound; `converged` is then false.
    pub separated: bool,
    pub grad_max_norm: f64,
    pub iterations: usize,
    pub quad_points: usize,
    pub n_obs: f64,
    pub n_rows: usize,
    pub n_clusters: usize,
    /// `tau2` was fixed at zero because the likelihood decreases away from it.
    pub boundary: bool,
    /// Only one cluster: `tau2` is weakly identified.
    pub single_cluster_warning: bool,
    /// Marginal log-likelihood after each accepted optimizer step.
    pub loglik_trace: Vec<f64>,
    pub runtime_seconds: f64,
}

impl GlmmFit {
    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.beta.len(), self.beta.len(), &self.vcov)
    }

    /// Family with the fitted dispersion substituted in.
    pub fn fitted_family(&self, family: &Family) -> Family {
        match self.theta_hat {
            Some(t) => family.with_theta(t),
            None => *family,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmmFitOptions {
    pub quad_points: usize,
    /// Estimate the negative-binomial dispersion jointly (ignored for other families).
    pub estimate_theta: bool,
    /// Warm start: `(beta, tau2, theta)`.
    pub init: Option<(Vec<f64>, f64, Option<f64>)>,
    pub max_iter: usize,
    pub gtol: f64,
}

impl Default for GlmmFitOptions {
    fn default() -> Self {
        Self { quad_points: 15, estimate_theta: true, init: None, max_iter: 500, gtol: 1e-6 }
    }
}

impl GlmmFitOptions {
    pub fn warm_start(fit: &GlmmFit) -> Self {
        Self { init: Some((fit.beta.clone(), fit.tau2, fit.theta_hat)), quad_points: fit.quad_points, ..Self::default() }
    }
}

struct ClusterEval {
    ll: f64,
    grad: Vec<f64>,
    mode: f64,
}

/// Parameter layout shared by the objective and the optimizer:
/// `[beta (p), ln tau2, ln theta (if estimated)]`.
#[derive(Clone, Copy)]
struct Layout {
    p: usize,
    with_theta: bool,
}

impl Layout {
    fn len(&self) -> usize {
        self.p + 1 + usize::from(self.with_theta)
    }
}

fn tau2_of(log_tau2: f64) -> f64 {
    if log_tau2 < LOG_TAU2_FLOOR {
        0.0
    } else {
        log_tau2.exp()
    }
}

/// Marginal log-likelihood contribution of one cluster and, optionally, its
/// gradient in `[beta, ln tau2, ln theta]`.
#[allow(clippy::too_many_arguments)]
fn eval_cluster(
    frame: &ModelFrame,
    family: &Family,
    rows: Range<usize>,
    beta: &[f64],
    tau2: f64,
    gh: &GaussHermite,
    layout: Layout,
    want_grad: bool,
) -> std::result::Result<ClusterEval, ()> {
    let p = layout.p;
    let eta: Vec<f64> = rows.clone().map(|i| frame.eta(beta, i)).collect();
    let w = &frame.w[rows.clone()];
    let y = &frame.y[rows.clone()];
    let x = |k: usize| frame.row(rows.start + k);
    let n = eta.len();
    let mut grad = if want_grad { vec![0.0; layout.len()] } else { Vec::new() };

    if tau2 == 0.0 {
        let mut ll = KahanSum::default();
        for k in 0..n {
            let d = family.derivs(y[k], eta[k]);
            ll.add(w[k] * d.ll);
            if want_grad {
                for (g, xv) in grad[..p].iter_mut().zip(x(k)) {
                    *g += w[k] * d.d1 * xv;
                }
                if layout.with_theta {
                    grad[p + 1] += w[k] * family.dispersion_derivs(y[k], eta[k]).dll;
                }
            }
        }
        return Ok(ClusterEval { ll: ll.value(), grad, mode: 0.0 });
    }

    let inv = 1.0 / tau2;
    // (sum w ll, sum w d1, sum w d2) at b
    let sums = |b: f64| {
        let (mut ll, mut s1, mut s2) = (KahanSum::default(), 0.0, 0.0);
        for k in 0..n {
            let d = family.derivs(y[k], eta[k] + b);
            ll.add(w[k] * d.ll);
            s1 += w[k] * d.d1;
            s2 += w[k] * d.d2;
        }
        (ll.value() - 0.5 * b * b * inv, s1 - b * inv, s2 - inv)
    };

    // posterior mode by damped Newton; h is concave for every family here
    let mut b = 0.0;
    let (mut h, mut h1, mut h2) = sums(b);
    let mut converged = false;
    for _ in 0..200 {
        if !(h.is_finite() && h2 < 0.0) {
            return Err(());
        }
        let step = -h1 / h2;
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = b + t * step;
            let s = sums(cand);
            if s.0.is_finite() && s.0 >= h - 1e-13 * h.abs().max(1.0) {
                next = Some((cand, s));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, s)) = next else {
            converged = h1.abs() <= 1e-8 * (-h2);
            break;
        };
        let moved = (cand - b).abs();
        b = cand;
        (h, h1, h2) = s;
        if moved <= 1e-12 * (1.0 + b.abs()) || h1 == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(());
    }

    let curvature = -h2;
    let sigma = curvature.powf(-0.5);
    let log_norm = 0.5 * (2.0 * PI * tau2).ln();
    let q = gh.len();
    let mut log_terms = Vec::with_capacity(q);
    let mut node_b = Vec::with_capacity(q);
    let mut node_h1 = Vec::with_capacity(q);
    let mut node_g: Vec<Vec<f64>> = Vec::with_capacity(if want_grad { q } else { 0 });
    let mut node_dll = Vec::with_capacity(q);
    for (z, omega) in gh.nodes.iter().zip(&gh.weights) {
        let bk = b + std::f64::consts::SQRT_2 * sigma * z;
        let mut ll = KahanSum::default();
        let mut s1 = 0.0;
        let mut g = if want_grad { vec![0.0; p] } else { Vec::new() };
        let mut dll = 0.0;
        for k in 0..n {
            let e = eta[k] + bk;
            if want_grad {
                let d = family.derivs(y[k], e);
                ll.add(w[k] * d.ll);
                s1 += w[k] * d.d1;
                for (gm, xv) in g.iter_mut().zip(x(k)) {
                    *gm += w[k] * d.d1 * xv;
                }
                if layout.with_theta {
                    dll += w[k] * family.dispersion_derivs(y[k], e).dll;
                }
            } else {
                ll.add(w[k] * family.log_density(y[k], e));
            }
        }
        let hk = ll.value() - 0.5 * bk * bk * inv - log_norm;
        log_terms.push(omega.ln() + z * z + hk);
        node_b.push(bk);
        node_h1.push(s1 - bk * inv);
        node_g.push(g);
        node_dll.push(dll);
    }
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_terms.iter().map(|a| (a - max).exp()).sum();
    let ll = (std::f64::consts::SQRT_2 * sigma).ln() + max + total.ln();
    if !ll.is_finite() {
        return Err(());
    }
    if !want_grad {
        return Ok(ClusterEval { ll, grad, mode: b });
    }

    // curvature derivatives at the mode
    let mut s3 = 0.0;
    let mut a_beta = vec![0.0; p];
    let mut b_beta = vec![0.0; p];
    let (mut dd1, mut dd2) = (0.0, 0.0);
    for k in 0..n {
        let e = eta[k] + b;
        let d = family.derivs(y[k], e);
        s3 += w[k] * d.d3;
        for m in 0..p {
            a_beta[m] += w[k] * d.d2 * x(k)[m];
            b_beta[m] += w[k] * d.d3 * x(k)[m];
        }
        if layout.with_theta {
            let dd = family.dispersion_derivs(y[k], e);
            dd1 += w[k] * dd.dd1;
            dd2 += w[k] * dd.dd2;
        }
    }
    let pi: Vec<f64> = log_terms.iter().map(|a| (a - max).exp() / total).collect();
    let zs = &gh.nodes;
    // d ell / d theta given partials of h', h'' at the mode and of h at each node
    let chain = |dh1: f64, dh2: f64, dh_node: &dyn Fn(usize) -> f64| {
        let db = dh1 / curvature;
        let dcurv = -(dh2 + s3 * db);
        let dlog_sigma = -0.5 * dcurv / curvature;
        let dsigma = sigma * dlog_sigma;
        let mut acc = dlog_sigma;
        for kq in 0..q {
            let dbk = db + std::f64::consts::SQRT_2 * zs[kq] * dsigma;
            acc += pi[kq] * (dh_node(kq) + node_h1[kq] * dbk);
        }
        acc
    };
    for m in 0..p {
        grad[m] = chain(a_beta[m], b_beta[m], &|kq| node_g[kq][m]);
    }
    grad[p] = chain(b * inv, inv, &|kq| 0.5 * node_b[kq] * node_b[kq] * inv - 0.5);
    if layout.with_theta {
        grad[p + 1] = chain(dd1, dd2, &|kq| node_dll[kq]);
    }
    Ok(ClusterEval { ll, grad, mode: b })
}

struct Objective<'a> {
    frame: &'a ModelFrame,
    family: Family,
    gh: GaussHermite,
    layout: Layout,
}

impl Objective<'_> {
    fn split<'x>(&self, params: &'x [f64]) -> (&'x [f64], f64, Family) {
        let p = self.layout.p;
        let family = if self.layout.with_theta { self.family.with_theta(params[p + 1].exp()) } else { self.family };
        (&params[..p], tau2_of(params[p]), family)
    }

    fn clusters(&self, params: &[f64], want_grad: bool) -> Result<Vec<ClusterEval>> {
        let (beta, tau2, family) = self.split(params);
        (0..self.frame.n_clusters())
            .into_par_iter()
            .map(|j| {
                eval_cluster(self.frame, &family, self.frame.cluster_rows(j), beta, tau2, &self.gh, self.layout, want_grad)
                    .map_err(|_| {
                        Error::Numerical(format!(
                            "posterior mode search failed for cluster `{}`",
                            self.frame.cluster_labels[j]
                        ))
                    })
            })
            .collect()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let parts = self.clusters(params, false)?;
        Ok(parts.iter().map(|c| c.ll).collect::<KahanSum>().value())
    }

    fn value_grad(&self, params: &[f64]) -> Result<(f64, DVector<f64>)> {
        let parts = self.clusters(params, true)?;
        let ll = parts.iter().map(|c| c.ll).collect::<KahanSum>().value();
        let mut g = DVector::zeros(self.layout.len());
        for c in &parts {
            for (gk, v) in g.iter_mut().zip(&c.grad) {
                *gk += v;
            }
        }
        Ok((ll, g))
    }
}

/// Marginal log-likelihood of the random-intercept model, with the
/// dispersion (if any) taken from the spec's family.
pub fn marginal_loglik(
    spec: &GlmmSpec,
    beta: &[f64],
    tau2: f64,
    data: &impl ModelData,
    quad_points: usize,
) -> Result<f64> {
    if quad_points == 0 {
        return Err(Error::Invalid("quad_points must be at least 1".into()));
    }
    if !(tau2 >= 0.0 && tau2.is_finite()) {
        return Err(Error::Invalid(format!("tau2 must be nonnegative, got {tau2}")));
    }
    let frame = glmm_frame(spec, data)?;
    frame.check_beta(beta)?;
    let obj = Objective {
        frame: &frame,
        family: spec.family(),
        gh: GaussHermite::new(quad_points),
        layout: Layout { p: frame.p(), with_theta: false },
    };
    let mut params = beta.to_vec();
    params.push(if tau2 == 0.0 { f64::NEG_INFINITY } else { tau2.ln() });
    obj.value(&params)
}

fn glmm_frame(spec: &GlmmSpec, data: &impl ModelData) -> Result<ModelFrame> {
    if data.dataset().cluster_name() != spec.cluster {
        return Err(Error::Schema(format!(
            "`{}` is not the dataset's cluster column (`{}`)",
            spec.cluster,
            data.dataset().cluster_name()
        )));
    }
    data.model_frame(&spec.glm)
}

/// Score of the marginal log-likelihood in `tau2` at `tau2 = 0`:
/// `½ Σ_j [(Σ_i w d1)² + Σ_i w d2]`.
fn boundary_score(frame: &ModelFrame, family: &Family, beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..frame.n_clusters() {
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in frame.cluster_rows(j) {
            let d = family.derivs(frame.y[i], frame.eta(beta, i));
            s1 += frame.w[i] * d.d1;
            s2 += frame.w[i] * d.d2;
        }
        total += 0.5 * (s1 * s1 + s2);
    }
    total
}

/// Maximum-likelihood fit of the random-intercept GLMM.
pub fn glmm_fit(spec: &GlmmSpec, data: &impl ModelData, opts: &GlmmFitOptions) -> Result<GlmmFit> {
    let start = Instant::now();
    if opts.quad_points == 0 {
        return Err(Error::Invalid("quad_points must be at least 1".into()));
    }
    let frame = glmm_frame(spec, data)?;
    let family = spec.family();
    let with_theta = opts.estimate_theta && matches!(family, Family::NegativeBinomial { .. });
    let glm = fit_frame(&frame, &family, &GlmOptions { estimate_theta: with_theta, ..Default::default() })?;
    let glm_family = match glm.theta_hat {
        Some(t) => family.with_theta(t),
        None => family,
    };
    let layout = Layout { p: frame.p(), with_theta };
    let obj = Objective { frame: &frame, family: glm_family, gh: GaussHermite::new(opts.quad_points), layout };
    let p = frame.p();
    let n_clusters = frame.n_clusters();

    let on_boundary = boundary_score(&frame, &glm_family, &glm.beta) <= 0.0;
    if on_boundary && glm.converged {
        return boundary_fit(&obj, &glm, opts, start);
    }

    let mut x0 = glm.beta.clone();
    let mut tau2_start = 0.1;
    let mut theta_start = glm.theta_hat;
    if let Some((b, t2, th)) = &opts.init {
        frame.check_beta(b)?;
        x0 = b.clone();
        if *t2 > 0.0 {
            // near zero the likelihood is convex in ln tau2 and BFGS crawls
            tau2_start = t2.max(WARM_TAU2_FLOOR);
        }
        if th.is_some() {
            theta_start = *th;
        }
    }
    x0.push(tau2_start.ln());
    if with_theta {
        x0.push(theta_start.unwrap_or(1.0).ln());
    }
    let mut h0 = DMatrix::zeros(layout.len(), layout.len());
    h0.view_mut((0, 0), (p, p)).copy_from(&glm.vcov_matrix());
    if !h0.iter().all(|v| v.is_finite()) {
        h0 = DMatrix::identity(layout.len(), layout.len()) * 1e-2;
    }
    h0[(p, p)] = 2.0 / n_clusters as f64;
    if with_theta {
        h0[(p + 1, p + 1)] = 1.0 / n_clusters as f64;
    }

    let negated = |x: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (f, g) = obj.value_grad(x.as_slice())?;
        Ok((-f, -g))
    };
    let bfgs_opts = BfgsOptions { max_iter: opts.max_iter, gtol: opts.gtol, initial_inverse_hessian: Some(h0) };
    let mut res = bfgs(negated, DVector::from_vec(x0), &bfgs_opts)?;
    if !res.converged {
        // restart once with ln tau2 re-seeded by a line search at the current beta
        let mut x1 = res.x.clone();
        let profile = |lt: f64| {
            let mut y = x1.clone();
            y[p] = lt;
            obj.value(y.as_slice()).map_or(f64::INFINITY, |v| -v)
        };
        let (lt, _) = brent_minimize(profile, LOG_TAU2_FLOOR / 2.0, 3.0, 1e-6, 200);
        x1[p] = lt;
        if let Ok(again) = bfgs(negated, x1, &bfgs_opts) {
            if again.f <= res.f || again.converged {
                res = again;
            }
        }
    }
    let mut x = res.x.clone();
    let mut f = res.f;
    let mut g = res.grad.clone();
    let mut trace: Vec<f64> = res.trace.iter().map(|v| -v).collect();

    // Newton polishing with a finite-difference Hessian of the analytic gradient
    let grad_only = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(-obj.value_grad(x.as_slice())?.1) };
    let mut hess = None;
    if tau2_of(x[p]) > 0.0 {
        for _ in 0..4 {
            let h = hessian_from_gradient(grad_only, &x, 1e-5)?;
            let Some(ch) = h.clone().cholesky() else {
                break;
            };
            if g.amax() < 1e-9 {
                hess = Some(h);
                break;
            }
            let cand = &x - ch.solve(&g);
            let Ok((fc, gc)) = negated(&cand) else {
                hess = Some(h);
                break;
            };
            if fc.is_finite() && (fc <= f || gc.amax() < g.amax()) && gc.amax() <= g.amax() {
                x = cand;
                f = fc;
                g = gc;
                trace.push(-f);
                hess = None;
            } else {
                hess = Some(h);
                break;
            }
        }
    }
    let tau2 = tau2_of(x[p]);
    if tau2 == 0.0 {
        return boundary_fit(&obj, &glm, opts, start);
    }
    let hess = match hess {
        Some(h) => h,
        None => hessian_from_gradient(grad_only, &x, 1e-5)?,
    };
    let cov = spd_inverse(&hess)
        .unwrap_or_else(|_| DMatrix::from_element(layout.len(), layout.len(), f64::NAN));
    let parts = obj.clusters(x.as_slice(), false)?;
    let grad_max = g.amax();
    let beta: Vec<f64> = x.as_slice()[..p].to_vec();
    let separated = is_separated(&beta);
    let beta_cov = cov.view((0, 0), (p, p)).into_owned();
    Ok(GlmmFit {
        coef_names: frame.coef_names.clone(),
        se: (0..p).map(|k| beta_cov[(k, k)].max(0.0).sqrt()).collect(),
        vcov: to_row_major(&beta_cov),
        beta,
        tau2,
        tau2_se: Some(tau2 * cov[(p, p)].max(0.0).sqrt()),
        theta_hat: if with_theta { Some(x[p + 1].exp()) } else { family.theta() },
        loglik: -f,
        eb_modes: modes(&frame, &parts),
        converged: grad_max < opts.gtol && !separated,
        separated,
        grad_max_norm: grad_max,
        iterations: res.iterations,
        quad_points: opts.quad_points,
        n_obs: frame.total_weight(),
        n_rows: frame.n(),
        n_clusters,
        boundary: false,
        single_cluster_warning: n_clusters == 1,
        loglik_trace: trace,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn is_separated(beta: &[f64]) -> bool {
    beta.iter().any(|b| !b.is_finite() || b.abs() > SEPARATION_BOUND)
}

fn modes(frame: &ModelFrame, parts: &[ClusterEval]) -> Vec<ClusterMode> {
    frame
        .cluster_labels
        .iter()
        .zip(parts)
        .map(|(l, c)| ClusterMode { cluster: l.clone(), mode: c.mode })
        .collect()
}

fn boundary_fit(obj: &Objective, glm: &GlmFit, opts: &GlmmFitOptions, start: Instant) -> Result<GlmmFit> {
    let frame = obj.frame;
    let p = frame.p();
    let mut x = glm.beta.clone();
    x.push(f64::NEG_INFINITY);
    if obj.layout.with_theta {
        x.push(glm.theta_hat.unwrap_or(1.0).ln());
    }
    // Hessian over beta (and ln theta) with tau2 held at zero
    let free: Vec<usize> = (0..p).chain(obj.layout.with_theta.then_some(p + 1)).collect();
    let embed = |v: &DVector<f64>| {
        let mut full = x.clone();
        for (k, &idx) in free.iter().enumerate() {
            full[idx] = v[k];
        }
        full
    };
    let x_free = DVector::from_iterator(free.len(), free.iter().map(|&k| x[k]));
    let grad_free = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let g = obj.value_grad(&embed(v))?.1;
        Ok(DVector::from_iterator(free.len(), free.iter().map(|&k| -g[k])))
    };
    let h = hessian_from_gradient(grad_free, &x_free, 1e-5)?;
    let cov = spd_inverse(&h).unwrap_or_else(|_| glm.vcov_matrix());
    let beta_cov = cov.view((0, 0), (p, p)).into_owned();
    let (ll, g) = obj.value_grad(&x)?;
    let grad_max = free.iter().map(|&k| g[k].abs()).fold(0.0, f64::max);
    let parts = obj.clusters(&x, false)?;
    debug_assert!((ll - frame_loglik(frame, &obj.family, &glm.beta)).abs() < 1e-6 * ll.abs().max(1.0));
    Ok(GlmmFit {
        coef_names: frame.coef_names.clone(),
        beta: glm.beta.clone(),
        se: (0..p).map(|k| beta_cov[(k, k)].max(0.0).sqrt()).collect(),
        vcov: to_row_major(&beta_cov),
        tau2: 0.0,
        tau2_se: None,
        theta_hat: obj.family.theta(),
        loglik: ll,
        eb_modes: modes(frame, &parts),
        converged: glm.converged && grad_max < opts.gtol.max(1e-6),
        separated: glm.separated,
        grad_max_norm: grad_max,
        iterations: glm.iterations,
        quad_points: opts.quad_points,
        n_obs: frame.total_weight(),
        n_rows: frame.n(),
        n_clusters: frame.n_clusters(),
        boundary: true,
        single_cluster_warning: frame.n_clusters() == 1,
        loglik_trace: vec![ll],
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedValue {
    /// Zero-based row of the input dataset.
    pub row: usize,
    pub cluster: String,
    pub linear_predictor: f64,
    pub fitted: f64,
}

/// Conditional means `g⁻¹(x β̂ + b̂_j + offset)` in input row order.
pub fn fitted_values(fit: &GlmmFit, spec: &GlmmSpec, data: &impl ModelData) -> Result<Vec<FittedValue>> {
    let frame = glmm_frame(spec, data)?;
    frame.check_beta(&fit.beta)?;
    let family = fit.fitted_family(&spec.family());
    let mut mode_of = Vec::with_capacity(frame.n_clusters());
    for label in &frame.cluster_labels {
        let m = fit
            .eb_modes
            .iter()
            .find(|c| &c.cluster == label)
            .ok_or_else(|| Error::Invalid(format!("cluster `{label}` was not part of the fit")))?;
        mode_of.push(m.mode);
    }
    let mut out: Vec<FittedValue> = (0..frame.n())
        .map(|i| {
            let eta = frame.eta(&fit.beta, i) + mode_of[frame.cluster[i] as usize];
            FittedValue {
                row: frame.source_rows[i],
                cluster: frame.cluster_labels[frame.cluster[i] as usize].clone(),
                linear_predictor: eta,
                fitted: family.inverse_link(eta),
            }
        })
        .collect();
    out.sort_by_key(|v| v.row);
    Ok(out)
}
