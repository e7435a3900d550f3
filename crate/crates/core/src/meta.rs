//! Divide and recombine: per-cluster GLM fits pooled by meta-analysis.
//!
//! Every pooling routine sorts its input by cluster label first, so the
//! result does not depend on the order estimates arrive in.

use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{fit_frame, GlmOptions};
use crate::linalg::{spd_inverse, spd_log_det, symmetrize, to_row_major};
use crate::model::{GlmSpec, ModelData, INTERCEPT};
use crate::optim::brent_minimize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoOutcomeVariation,
    Nonconvergence,
    RankDeficient,
}

impl ExclusionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionReason::NoOutcomeVariation => "no_outcome_variation",
            ExclusionReason::Nonconvergence => "nonconvergence",
            ExclusionReason::RankDeficient => "rank_deficient",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "no_outcome_variation" => Some(ExclusionReason::NoOutcomeVariation),
            "nonconvergence" => Some(ExclusionReason::Nonconvergence),
            "rank_deficient" => Some(ExclusionReason::RankDeficient),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum EstimateStatus {
    Included,
    Excluded(ExclusionReason),
}

/// One cluster's coefficient vector with its within-cluster covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeEstimate {
    pub cluster: String,
    pub coef_names: Vec<String>,
    /// Empty when excluded.
    pub beta: Vec<f64>,
    /// Row-major covariance; empty when excluded.
    pub cov: Vec<f64>,
    pub n: usize,
    pub theta: Option<f64>,
    pub status: EstimateStatus,
}

impl PracticeEstimate {
    pub fn is_included(&self) -> bool {
        self.status == EstimateStatus::Included
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.beta.len(), self.beta.len(), &self.cov)
    }

    fn excluded(cluster: String, coef_names: Vec<String>, n: usize, reason: ExclusionReason) -> Self {
        Self { cluster, coef_names, beta: vec![], cov: vec![], n, theta: None, status: EstimateStatus::Excluded(reason) }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PracticeFitOptions {
    /// Estimate a negative-binomial dispersion in each cluster.
    pub estimate_theta: bool,
    /// Subtract pooled column means from every non-intercept design column
    /// before fitting; see [`uncenter`].
    pub center: bool,
}

/// Weighted means of the non-intercept design columns over all partitions.
pub fn design_means<D: ModelData>(partitions: &[D], spec: &GlmSpec) -> Result<Vec<f64>> {
    let mut sums: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for part in partitions {
        let f = part.model_frame(spec)?;
        let s = sums.get_or_insert_with(|| vec![0.0; f.p()]);
        for i in 0..f.n() {
            for (acc, x) in s.iter_mut().zip(f.row(i)) {
                *acc += f.w[i] * x;
            }
        }
        total += f.total_weight();
    }
    let mut means: Vec<f64> = sums.unwrap_or_default().into_iter().map(|s| s / total).collect();
    if spec.intercept && !means.is_empty() {
        means[0] = 0.0;
    }
    Ok(means)
}

/// Fits the fixed-effects GLM separately in every partition. Degenerate
/// clusters are returned as exclusions rather than errors.
pub fn fit_per_practice<D: ModelData>(
    partitions: &[D],
    spec: &GlmSpec,
    opts: &PracticeFitOptions,
) -> Result<Vec<PracticeEstimate>> {
    let means = if opts.center { Some(design_means(partitions, spec)?) } else { None };
    partitions
        .par_iter()
        .map(|part| {
            let data = part.dataset();
            let label = data.cluster_labels().first().cloned().unwrap_or_default();
            let n = part.n_observations();
            let mut frame = part.model_frame(spec)?;
            if let Some(m) = &means {
                let p = frame.p();
                for i in 0..frame.n() {
                    for k in 0..p {
                        frame.x[i * p + k] -= m[k];
                    }
                }
            }
            let names = frame.coef_names.clone();
            let first = frame.y[0];
            if frame.y.iter().all(|&y| y == first) {
                return Ok(PracticeEstimate::excluded(label, names, n, ExclusionReason::NoOutcomeVariation));
            }
            let fit = match fit_frame(&frame, &spec.family, &GlmOptions { estimate_theta: opts.estimate_theta, ..Default::default() }) {
                Ok(f) => f,
                Err(Error::RankDeficient(_)) => {
                    return Ok(PracticeEstimate::excluded(label, names, n, ExclusionReason::RankDeficient))
                }
                Err(Error::Numerical(_)) => {
                    return Ok(PracticeEstimate::excluded(label, names, n, ExclusionReason::Nonconvergence))
                }
                Err(e) => return Err(e),
            };
            let cov_ok = fit.vcov.iter().all(|v| v.is_finite()) && spd_log_det(&fit.vcov_matrix()).is_some();
            if !fit.converged || fit.separated || !cov_ok {
                return Ok(PracticeEstimate::excluded(label, names, n, ExclusionReason::Nonconvergence));
            }
            Ok(PracticeEstimate {
                cluster: label,
                coef_names: names,
                beta: fit.beta,
                cov: fit.vcov,
                n,
                theta: fit.theta_hat,
                status: EstimateStatus::Included,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniMethod {
    Fixed,
    Reml,
    Mom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaStructure {
    /// `Sigma = 0`: generalized-least-squares pooling.
    Zero,
    /// Only the intercept variance `Sigma[0,0]` is free.
    InterceptOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvMethod {
    Reml,
    Mom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniMetaResult {
    pub beta: f64,
    pub se: f64,
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub cluster: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Row-major covariance of `beta`.
    pub vcov: Vec<f64>,
    /// Between-cluster variance of the intercept.
    pub tau2: f64,
    /// Row-major between-cluster covariance (zero outside `[0,0]`).
    pub sigma: Vec<f64>,
    pub method: String,
    pub clusters_used: usize,
    pub clusters_excluded: usize,
    pub exclusions: Vec<Exclusion>,
    pub n_obs: usize,
    pub runtime_seconds: f64,
}

impl MetaResult {
    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.beta.len(), self.beta.len(), &self.vcov)
    }
}

/// Included estimates sorted by cluster label, plus the exclusions.
fn sorted_included(estimates: &[PracticeEstimate]) -> (Vec<&PracticeEstimate>, Vec<Exclusion>) {
    let mut inc: Vec<&PracticeEstimate> = estimates.iter().filter(|e| e.is_included()).collect();
    inc.sort_by(|a, b| a.cluster.cmp(&b.cluster));
    let mut exc: Vec<Exclusion> = estimates
        .iter()
        .filter_map(|e| match e.status {
            EstimateStatus::Excluded(reason) => Some(Exclusion { cluster: e.cluster.clone(), reason }),
            EstimateStatus::Included => None,
        })
        .collect();
    exc.sort_by(|a, b| a.cluster.cmp(&b.cluster));
    (inc, exc)
}

fn dl_tau2(y: &[f64], v: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().map(|s| 1.0 / s).collect();
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let q: f64 = w.iter().zip(y).map(|(w, y)| w * (y - mean).powi(2)).sum();
    let c = sw - w.iter().map(|w| w * w).sum::<f64>() / sw;
    if c > 0.0 {
        ((q - (y.len() as f64 - 1.0)) / c).max(0.0)
    } else {
        0.0
    }
}

/// Restricted log-likelihood of the univariate random-effects model.
pub fn uni_reml_objective(y: &[f64], v: &[f64], tau2: f64) -> f64 {
    let w: Vec<f64> = v.iter().map(|s| 1.0 / (s + tau2)).collect();
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let rss: f64 = w.iter().zip(y).map(|(w, y)| w * (y - mean).powi(2)).sum();
    -0.5 * w.iter().map(|w| -w.ln()).sum::<f64>() - 0.5 * sw.ln() - 0.5 * rss
}

fn reml_tau2(y: &[f64], v: &[f64]) -> f64 {
    let spread = {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        y.iter().map(|x| (x - m).powi(2)).sum::<f64>() / y.len() as f64
    };
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    let hi = (10.0 * (spread + vmax)).max(1e-8).ln();
    let lo = hi - 40.0;
    let (lt, f) = brent_minimize(|lt| -uni_reml_objective(y, v, lt.exp()), lo, hi, 1e-12, 500);
    if -uni_reml_objective(y, v, 0.0) <= f {
        0.0
    } else {
        lt.exp()
    }
}

/// Pools coefficient `k` across clusters under `beta_kj ~ N(beta_k, s2_kj + tau2)`.
/// With `estimate_tau2 = false`, `tau2` is fixed at zero.
pub fn uni_meta(
    estimates: &[PracticeEstimate],
    k: usize,
    method: UniMethod,
    estimate_tau2: bool,
) -> Result<UniMetaResult> {
    let (inc, _) = sorted_included(estimates);
    if inc.is_empty() {
        return Err(Error::Empty("no included cluster estimates".into()));
    }
    if let Some(e) = inc.iter().find(|e| k >= e.beta.len()) {
        return Err(Error::Dimension(format!("cluster `{}` has no coefficient {k}", e.cluster)));
    }
    let random = estimate_tau2 && method != UniMethod::Fixed;
    if random && inc.len() < 2 {
        return Err(Error::Invalid("random-effects pooling needs at least two clusters".into()));
    }
    let y: Vec<f64> = inc.iter().map(|e| e.beta[k]).collect();
    let p = inc[0].beta.len();
    let v: Vec<f64> = inc.iter().map(|e| e.cov[k * p + k]).collect();
    if v.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Numerical("within-cluster variance must be positive".into()));
    }
    let tau2 = match (random, method) {
        (false, _) | (_, UniMethod::Fixed) => 0.0,
        (true, UniMethod::Mom) => dl_tau2(&y, &v),
        (true, UniMethod::Reml) => reml_tau2(&y, &v),
    };
    let w: Vec<f64> = v.iter().map(|s| 1.0 / (s + tau2)).collect();
    let sw: f64 = w.iter().sum();
    let beta = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    Ok(UniMetaResult { beta, se: sw.powf(-0.5), tau2 })
}

/// Univariate pooling of every coefficient; between-cluster variance is
/// estimated for the intercept only and fixed at zero elsewhere.
pub fn uni_meta_all(estimates: &[PracticeEstimate], method: UniMethod) -> Result<MetaResult> {
    let start = Instant::now();
    let (inc, exc) = sorted_included(estimates);
    let first = inc.first().ok_or_else(|| Error::Empty("no included cluster estimates".into()))?;
    let names = first.coef_names.clone();
    let p = names.len();
    let mut beta = Vec::with_capacity(p);
    let mut se = Vec::with_capacity(p);
    let mut tau2 = 0.0;
    for k in 0..p {
        let r = uni_meta(estimates, k, method, k == 0 && names[0] == INTERCEPT)?;
        if k == 0 {
            tau2 = r.tau2;
        }
        beta.push(r.beta);
        se.push(r.se);
    }
    let vcov = DMatrix::from_diagonal(&DVector::from_iterator(p, se.iter().map(|s| s * s)));
    let mut sigma = vec![0.0; p * p];
    sigma[0] = tau2;
    Ok(MetaResult {
        coef_names: names,
        beta,
        se,
        vcov: to_row_major(&vcov),
        tau2,
        sigma,
        method: format!("univariate_{}", method_name(method)),
        clusters_used: inc.len(),
        clusters_excluded: exc.len(),
        n_obs: inc.iter().map(|e| e.n).sum(),
        exclusions: exc,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn method_name(m: UniMethod) -> &'static str {
    match m {
        UniMethod::Fixed => "fixed",
        UniMethod::Reml => "reml",
        UniMethod::Mom => "mom",
    }
}

struct Prepared {
    y: Vec<DVector<f64>>,
    /// `S_j⁻¹`
    w: Vec<DMatrix<f64>>,
    log_det_s: Vec<f64>,
}

fn prepare(inc: &[&PracticeEstimate]) -> (Prepared, Vec<String>) {
    let mut out = Prepared { y: vec![], w: vec![], log_det_s: vec![] };
    let mut singular = vec![];
    for e in inc {
        let s = e.cov_matrix();
        match (spd_inverse(&s), spd_log_det(&s)) {
            (Ok(w), Some(ld)) => {
                out.y.push(DVector::from_column_slice(&e.beta));
                out.w.push(w);
                out.log_det_s.push(ld);
            }
            _ => singular.push(e.cluster.clone()),
        }
    }
    (out, singular)
}

/// `(V_j⁻¹, ln|V_j|)` for `V_j = S_j + sigma e0 e0ᵀ` by a rank-one update.
fn inflate(w: &DMatrix<f64>, log_det_s: f64, sigma: f64) -> (DMatrix<f64>, f64) {
    if sigma == 0.0 {
        return (w.clone(), log_det_s);
    }
    let col = w.column(0).into_owned();
    let denom = 1.0 + sigma * w[(0, 0)];
    let mut wi = w - (&col * col.transpose()) * (sigma / denom);
    symmetrize(&mut wi);
    (wi, log_det_s + denom.ln())
}

struct Gls {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
    reml: f64,
}

fn gls(prep: &Prepared, sigma: f64) -> Result<Gls> {
    let p = prep.y[0].len();
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    let mut log_det_v = 0.0;
    let mut ws = Vec::with_capacity(prep.y.len());
    for j in 0..prep.y.len() {
        let (wj, ld) = inflate(&prep.w[j], prep.log_det_s[j], sigma);
        a += &wj;
        b += &wj * &prep.y[j];
        log_det_v += ld;
        ws.push(wj);
    }
    symmetrize(&mut a);
    let cov = spd_inverse(&a)?;
    let beta = &cov * &b;
    let mut rss = 0.0;
    for j in 0..prep.y.len() {
        let r = &prep.y[j] - &beta;
        rss += (r.transpose() * &ws[j] * &r)[(0, 0)];
    }
    let log_det_a = spd_log_det(&a).ok_or_else(|| Error::Numerical("pooled information is singular".into()))?;
    Ok(Gls { beta, cov, reml: -0.5 * log_det_v - 0.5 * log_det_a - 0.5 * rss })
}

/// Matrix method-of-moments estimate of `Sigma[0,0]`.
fn mom_sigma00(prep: &Prepared) -> Result<f64> {
    let j = prep.y.len() as f64;
    let p = prep.y[0].len();
    let mut sw = DMatrix::zeros(p, p);
    let mut swy = DVector::zeros(p);
    for k in 0..prep.y.len() {
        sw += &prep.w[k];
        swy += &prep.w[k] * &prep.y[k];
    }
    let a = spd_inverse(&sw)?;
    let ybar = &a * swy;
    let mut q = DMatrix::zeros(p, p);
    let mut waw = DMatrix::zeros(p, p);
    for k in 0..prep.y.len() {
        let d = &prep.y[k] - &ybar;
        q += &prep.w[k] * &d * d.transpose();
        waw += &prep.w[k] * &a * &prep.w[k];
    }
    let b = sw - waw;
    if !(b[(0, 0)] > 0.0) {
        return Ok(0.0);
    }
    Ok(((q[(0, 0)] - (j - 1.0)) / b[(0, 0)]).max(0.0))
}

fn reml_sigma00(prep: &Prepared) -> Result<f64> {
    let v00: Vec<f64> = prep.w.iter().map(|w| 1.0 / w[(0, 0)]).collect();
    let y0: Vec<f64> = prep.y.iter().map(|y| y[0]).collect();
    let m = y0.iter().sum::<f64>() / y0.len() as f64;
    let spread = y0.iter().map(|x| (x - m).powi(2)).sum::<f64>() / y0.len() as f64;
    let hi = (10.0 * (spread + v00.iter().cloned().fold(0.0, f64::max))).max(1e-8).ln();
    let lo = hi - 40.0;
    let mut failure = None;
    let (ls, f) = brent_minimize(
        |ls| match gls(prep, ls.exp()) {
            Ok(g) => -g.reml,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        lo,
        hi,
        1e-12,
        500,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let at_zero = -gls(prep, 0.0)?.reml;
    Ok(if at_zero <= f { 0.0 } else { ls.exp() })
}

/// Multivariate pooling under `beta_j ~ MVN(beta, S_j + Sigma)`.
pub fn mv_meta(estimates: &[PracticeEstimate], structure: SigmaStructure, method: MvMethod) -> Result<MetaResult> {
    let start = Instant::now();
    let (inc, mut exc) = sorted_included(estimates);
    let (prep, singular) = prepare(&inc);
    for c in singular {
        exc.push(Exclusion { cluster: c, reason: ExclusionReason::RankDeficient });
    }
    exc.sort_by(|a, b| a.cluster.cmp(&b.cluster));
    if prep.y.is_empty() {
        return Err(Error::Empty("no included cluster estimates".into()));
    }
    let used: Vec<&&PracticeEstimate> = inc.iter().filter(|e| !exc.iter().any(|x| x.cluster == e.cluster)).collect();
    let names = used[0].coef_names.clone();
    let p = names.len();
    if prep.y.iter().any(|y| y.len() != p) {
        return Err(Error::Dimension("cluster estimates differ in length".into()));
    }
    let (sigma, label) = match structure {
        SigmaStructure::Zero => (0.0, "fixed".to_string()),
        SigmaStructure::InterceptOnly => {
            if prep.y.len() < 2 {
                return Err(Error::Invalid("random-effects pooling needs at least two clusters".into()));
            }
            match method {
                MvMethod::Reml => (reml_sigma00(&prep)?, "multivariate_reml".to_string()),
                MvMethod::Mom => (mom_sigma00(&prep)?, "multivariate_mom".to_string()),
            }
        }
    };
    let g = gls(&prep, sigma)?;
    let mut sig = vec![0.0; p * p];
    sig[0] = sigma;
    Ok(MetaResult {
        coef_names: names,
        beta: g.beta.iter().copied().collect(),
        se: (0..p).map(|k| g.cov[(k, k)].max(0.0).sqrt()).collect(),
        vcov: to_row_major(&g.cov),
        tau2: sigma,
        sigma: sig,
        method: label,
        clusters_used: used.len(),
        clusters_excluded: exc.len(),
        n_obs: used.iter().map(|e| e.n).sum(),
        exclusions: exc,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Maps a result fitted on centered columns back to the original columns:
/// the intercept absorbs `-Σ beta_k mean_k`.
pub fn uncenter(result: &MetaResult, means: &[f64]) -> MetaResult {
    let p = result.beta.len();
    let mut l = DMatrix::identity(p, p);
    for k in 1..p {
        l[(0, k)] = -means[k];
    }
    let beta = &l * DVector::from_column_slice(&result.beta);
    let mut cov = &l * result.vcov_matrix() * l.transpose();
    symmetrize(&mut cov);
    MetaResult {
        beta: beta.iter().copied().collect(),
        se: (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect(),
        vcov: to_row_major(&cov),
        ..result.clone()
    }
}

/// Size-weighted average of per-cluster dispersion estimates.
pub fn aggregate_dispersion(estimates: &[PracticeEstimate]) -> Result<f64> {
    let (inc, _) = sorted_included(estimates);
    let (mut num, mut den) = (0.0, 0.0);
    for e in inc {
        if let Some(t) = e.theta {
            num += e.n as f64 * t;
            den += e.n as f64;
        }
    }
    if den == 0.0 {
        return Err(Error::Empty("no dispersion estimates to aggregate".into()));
    }
    Ok(num / den)
}

/// Writes estimates as CSV: label, size, dispersion, status, coefficients and
/// the upper triangle of each covariance (`cov_i_j`).
pub fn write_estimates_csv<W: Write>(estimates: &[PracticeEstimate], writer: W) -> Result<()> {
    let names = estimates.first().map(|e| e.coef_names.clone()).unwrap_or_default();
    let p = names.len();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cluster".to_string(), "n".into(), "theta".into(), "status".into()];
    header.extend(names.iter().map(|n| format!("beta:{n}")));
    for i in 0..p {
        for j in i..p {
            header.push(format!("cov_{i}_{j}"));
        }
    }
    w.write_record(&header)?;
    for e in estimates {
        if e.coef_names != names {
            return Err(Error::Dimension("estimates have different coefficient names".into()));
        }
        let mut rec = vec![
            e.cluster.clone(),
            e.n.to_string(),
            e.theta.map(|t| format!("{t:e}")).unwrap_or_default(),
            match e.status {
                EstimateStatus::Included => "included".to_string(),
                EstimateStatus::Excluded(r) => format!("excluded:{}", r.as_str()),
            },
        ];
        if e.is_included() {
            rec.extend(e.beta.iter().map(|b| format!("{b:e}")));
            for i in 0..p {
                for j in i..p {
                    rec.push(format!("{:e}", e.cov[i * p + j]));
                }
            }
        } else {
            rec.extend(std::iter::repeat_n(String::new(), p + p * (p + 1) / 2));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates_csv<R: Read>(reader: R) -> Result<Vec<PracticeEstimate>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let names: Vec<String> =
        header.iter().filter_map(|h| h.strip_prefix("beta:")).map(str::to_string).collect();
    let p = names.len();
    if header.len() != 4 + p + p * (p + 1) / 2 {
        return Err(Error::Schema("estimate CSV has an unexpected number of columns".into()));
    }
    let num = |s: &str, row: usize| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse { row, message: format!("`{s}` is not a number") })
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let status = match &rec[3] {
            "included" => EstimateStatus::Included,
            s => EstimateStatus::Excluded(
                s.strip_prefix("excluded:")
                    .and_then(ExclusionReason::parse)
                    .ok_or_else(|| Error::Parse { row, message: format!("unknown status `{s}`") })?,
            ),
        };
        let n = rec[1].parse::<usize>().map_err(|_| Error::Parse { row, message: "bad cluster size".into() })?;
        let theta = if rec[2].is_empty() { None } else { Some(num(&rec[2], row)?) };
        let (mut beta, mut cov) = (vec![], vec![]);
        if status == EstimateStatus::Included {
            beta = (0..p).map(|k| num(&rec[4 + k], row)).collect::<Result<_>>()?;
            cov = vec![0.0; p * p];
            let mut c = 4 + p;
            for a in 0..p {
                for b in a..p {
                    let v = num(&rec[c], row)?;
                    cov[a * p + b] = v;
                    cov[b * p + a] = v;
                    c += 1;
                }
            }
        }
        out.push(PracticeEstimate { cluster: rec[0].to_string(), coef_names: names.clone(), beta, cov, n, theta, status });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_by_practice, Column, ColumnSchema, Dataset, Kind};
    use crate::family::Family;
    use crate::model::Term;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn est(label: &str, beta: Vec<f64>, cov: Vec<f64>) -> PracticeEstimate {
        let p = beta.len();
        PracticeEstimate {
            cluster: label.into(),
            coef_names: (0..p).map(|k| if k == 0 { INTERCEPT.to_string() } else { format!("x{k}") }).collect(),
            beta,
            cov,
            n: 10,
            theta: None,
            status: EstimateStatus::Included,
        }
    }

    #[test]
    fn fixed_pooling_of_two_estimates() {
        let e = vec![est("a", vec![1.0], vec![1.0]), est("b", vec![3.0], vec![1.0])];
        let r = uni_meta(&e, 0, UniMethod::Fixed, false).unwrap();
        assert!((r.beta - 2.0).abs() < 1e-15);
        assert!((r.se - 0.5f64.sqrt()).abs() < 1e-12);
        let single = uni_meta(&e[..1], 0, UniMethod::Fixed, false).unwrap();
        assert_eq!((single.beta, single.se), (1.0, 1.0));
    }

    #[test]
    fn dersimonian_laird_hand_case() {
        let e = vec![est("a", vec![0.0], vec![1.0]), est("b", vec![2.0], vec![1.0])];
        let r = uni_meta(&e, 0, UniMethod::Mom, true).unwrap();
        assert_eq!(r.tau2, 1.0);
        // the matrix moment estimator reduces to the same value
        let m = mv_meta(&e, SigmaStructure::InterceptOnly, MvMethod::Mom).unwrap();
        assert!((m.tau2 - 1.0).abs() < 1e-14);
        assert!(uni_meta(&e[..1], 0, UniMethod::Mom, true).is_err());
    }

    #[test]
    fn reml_objective_is_continuous_at_zero_and_nonnegative() {
        let y = [0.1, -0.2, 0.05, 0.0];
        let v = [0.5, 0.4, 0.6, 0.3];
        let near = uni_reml_objective(&y, &v, 1e-12);
        assert!((near - uni_reml_objective(&y, &v, 0.0)).abs() < 1e-10);
        let e: Vec<_> = y.iter().zip(&v).enumerate().map(|(i, (a, b))| est(&i.to_string(), vec![*a], vec![*b])).collect();
        assert_eq!(uni_meta(&e, 0, UniMethod::Reml, true).unwrap().tau2, 0.0);
        // strongly heterogeneous estimates give a positive estimate at the objective's maximum
        let y = [-3.0, 2.5, 0.4, 4.0, -1.0];
        let v = [0.2, 0.3, 0.25, 0.2, 0.3];
        let e: Vec<_> = y.iter().zip(&v).enumerate().map(|(i, (a, b))| est(&i.to_string(), vec![*a], vec![*b])).collect();
        let t = uni_meta(&e, 0, UniMethod::Reml, true).unwrap().tau2;
        assert!(t > 1.0);
        for f in [0.99, 1.01] {
            assert!(uni_reml_objective(&y, &v, t) >= uni_reml_objective(&y, &v, t * f));
        }
    }

    #[test]
    fn gls_pooling_matches_closed_form() {
        let e = vec![
            est("a", vec![1.0, 0.5], vec![0.5, 0.1, 0.1, 0.3]),
            est("b", vec![1.4, 0.2], vec![0.4, -0.05, -0.05, 0.2]),
            est("c", vec![0.8, 0.7], vec![0.6, 0.0, 0.0, 0.5]),
        ];
        let r = mv_meta(&e, SigmaStructure::Zero, MvMethod::Reml).unwrap();
        let mut a = DMatrix::zeros(2, 2);
        let mut b = DVector::zeros(2);
        for x in &e {
            let w = x.cov_matrix().try_inverse().unwrap();
            b += &w * DVector::from_column_slice(&x.beta);
            a += w;
        }
        let resid = &a * DVector::from_column_slice(&r.beta) - &b;
        assert!(resid.amax() < 1e-10);
        // identical identity covariances give the arithmetic mean
        let e2 = vec![est("a", vec![1.0, 2.0], vec![1.0, 0.0, 0.0, 1.0]), est("b", vec![3.0, 0.0], vec![1.0, 0.0, 0.0, 1.0])];
        let r2 = mv_meta(&e2, SigmaStructure::Zero, MvMethod::Reml).unwrap();
        assert!((r2.beta[0] - 2.0).abs() < 1e-14 && (r2.beta[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_gls_equals_univariate_fixed() {
        let e = vec![
            est("a", vec![1.0, 0.5], vec![0.5, 0.0, 0.0, 0.3]),
            est("b", vec![1.4, 0.2], vec![0.4, 0.0, 0.0, 0.2]),
        ];
        let r = mv_meta(&e, SigmaStructure::Zero, MvMethod::Reml).unwrap();
        for k in 0..2 {
            let u = uni_meta(&e, k, UniMethod::Fixed, false).unwrap();
            assert!((r.beta[k] - u.beta).abs() < 1e-14);
            assert!((r.se[k] - u.se).abs() < 1e-14);
        }
    }

    #[test]
    fn intercept_reml_recovers_known_variance() {
        // estimates drawn with Sigma[0,0] = 0.5 around (1, -0.5)
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 200;
        let mut ests = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut e = Vec::new();
            for j in 0..100 {
                let s0: f64 = 0.1 + 0.2 * rng.random::<f64>();
                let s1: f64 = 0.05 + 0.1 * rng.random::<f64>();
                let z: [f64; 3] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                let b0 = 1.0 + 0.5f64.sqrt() * z[0] + s0.sqrt() * z[1];
                let b1 = -0.5 + s1.sqrt() * z[2];
                e.push(est(&format!("{j:03}"), vec![b0, b1], vec![s0, 0.0, 0.0, s1]));
            }
            ests.push(mv_meta(&e, SigmaStructure::InterceptOnly, MvMethod::Reml).unwrap().tau2);
        }
        let mean = ests.iter().sum::<f64>() / reps as f64;
        let sd = (ests.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd / (reps as f64).sqrt(), "mean {mean}, sd {sd}");
    }

    #[test]
    fn dispersion_aggregation() {
        let mut a = est("a", vec![0.0], vec![1.0]);
        a.theta = Some(1.0);
        a.n = 100;
        let mut b = est("b", vec![0.0], vec![1.0]);
        b.theta = Some(2.0);
        b.n = 300;
        assert!((aggregate_dispersion(&[a.clone(), b.clone()]).unwrap() - 1.75).abs() < 1e-15);
        assert_eq!(aggregate_dispersion(&[a.clone()]).unwrap(), 1.0);
        b.n = 100;
        assert!((aggregate_dispersion(&[a, b]).unwrap() - 1.5).abs() < 1e-15);
        assert!(aggregate_dispersion(&[est("c", vec![0.0], vec![1.0])]).is_err());
    }

    fn practice_data() -> Dataset {
        // cluster "a": varying outcome; "b": all zero; "c": two rows only
        let y = vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let x = vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let c = vec!["a", "a", "a", "a", "a", "a", "b", "b", "b", "c", "c"];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = rng.random::<u8>();
        Dataset::from_columns(
            vec![
                ColumnSchema::outcome("y", Kind::Binary),
                ColumnSchema::covariate("x", Kind::Continuous),
                ColumnSchema::new("c", crate::data::Role::Cluster, Kind::Categorical(vec![])),
            ],
            vec![
                Column::Numeric(y),
                Column::Numeric(x),
                Column::Categorical { levels: vec!["a".into(), "b".into(), "c".into()], codes: c.iter().map(|s| (s.as_bytes()[0] - b'a') as u32).collect() },
            ],
        )
        .unwrap()
    }

    #[test]
    fn per_practice_exclusions() {
        let d = practice_data();
        let parts = partition_by_practice(&d);
        let spec = GlmSpec::new(Family::Bernoulli, "y", vec![Term::main("x")]);
        let e = fit_per_practice(&parts, &spec, &PracticeFitOptions::default()).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].status, EstimateStatus::Included);
        assert_eq!(e[1].status, EstimateStatus::Excluded(ExclusionReason::NoOutcomeVariation));
        // two points with distinct x and outcomes separate perfectly
        assert!(matches!(e[2].status, EstimateStatus::Excluded(_)));

        let mut buf = Vec::new();
        write_estimates_csv(&e, &mut buf).unwrap();
        let back = read_estimates_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].status, e[1].status);
        for (a, b) in back[0].beta.iter().zip(&e[0].beta) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn centering_round_trips_through_uncenter() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..5u8))).collect();
        let c: Vec<f64> = (0..n).map(|i| (i % 4) as f64).collect();
        let y: Vec<f64> =
            x.iter().map(|&xi| f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (0.5 - 0.3 * xi).exp())))).collect();
        let d = Dataset::from_columns(
            vec![ColumnSchema::outcome("y", Kind::Binary), ColumnSchema::covariate("x", Kind::Continuous), ColumnSchema::cluster("c")],
            vec![Column::Numeric(y), Column::Numeric(x), Column::Numeric(c)],
        )
        .unwrap();
        let parts = partition_by_practice(&d);
        let spec = GlmSpec::new(Family::Bernoulli, "y", vec![Term::main("x")]);
        let plain = fit_per_practice(&parts, &spec, &PracticeFitOptions::default()).unwrap();
        let centered = fit_per_practice(&parts, &spec, &PracticeFitOptions { center: true, ..Default::default() }).unwrap();
        let means = design_means(&parts, &spec).unwrap();
        let a = mv_meta(&plain, SigmaStructure::Zero, MvMethod::Reml).unwrap();
        let b = uncenter(&mv_meta(&centered, SigmaStructure::Zero, MvMethod::Reml).unwrap(), &means);
        for k in 0..2 {
            assert!((a.beta[k] - b.beta[k]).abs() < 1e-7);
            assert!((a.se[k] - b.se[k]).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn pooling_is_permutation_invariant(seed in 0u64..1000, shift in 0usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut e: Vec<PracticeEstimate> = (0..7)
                .map(|j| {
                    let v0 = 0.1 + rng.random::<f64>();
                    let v1 = 0.1 + rng.random::<f64>();
                    let c = 0.05 * (rng.random::<f64>() - 0.5);
                    est(&format!("p{j}"), vec![rng.random::<f64>(), rng.random::<f64>()], vec![v0, c, c, v1])
                })
                .collect();
            let before = mv_meta(&e, SigmaStructure::InterceptOnly, MvMethod::Reml).unwrap();
            let uni_before = uni_meta_all(&e, UniMethod::Reml).unwrap();
            e.rotate_left(shift);
            e.swap(0, 6);
            let mut after = mv_meta(&e, SigmaStructure::InterceptOnly, MvMethod::Reml).unwrap();
            let mut uni_after = uni_meta_all(&e, UniMethod::Reml).unwrap();
            after.runtime_seconds = before.runtime_seconds;
            uni_after.runtime_seconds = uni_before.runtime_seconds;
            prop_assert_eq!(before, after);
            prop_assert_eq!(uni_before, uni_after);
        }

        #[test]
        fn fixed_se_shrinks_as_estimates_are_added(vs in proptest::collection::vec(0.01f64..10.0, 2..12)) {
            let e: Vec<_> = vs.iter().enumerate().map(|(i, v)| est(&format!("{i:02}"), vec![0.0], vec![*v])).collect();
            let mut prev = f64::INFINITY;
            for k in 1..=e.len() {
                let se = uni_meta(&e[..k], 0, UniMethod::Fixed, false).unwrap().se;
                prop_assert!(se <= prev);
                prev = se;
            }
        }
    }
}
