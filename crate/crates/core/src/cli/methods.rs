//! One entry point per estimation strategy, all returning a common report.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    bin_column_name, bin_continuous, collapse, enumerate_designs, levels_from_data, partition_by_practice, BinScheme,
    Dataset, DesignGrid,
};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::glmm::{glmm_fit, GlmmFit, GlmmFitOptions};
use crate::meta::{
    aggregate_dispersion, design_means, fit_per_practice, mv_meta, uncenter, uni_meta_all, Exclusion, MetaResult,
    MvMethod, PracticeEstimate, PracticeFitOptions, SigmaStructure, UniMethod,
};
use crate::model::GlmmSpec;
use crate::subsample::{self, HistoryEntry, SubsampleMode, SubsampleOptions, SubsampleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    /// GLMM on every row.
    Full,
    /// GLMM on the collapsed, weighted table.
    Weighted,
    /// Per-practice GLMs pooled coefficient by coefficient.
    MetaUni,
    /// Per-practice GLMs pooled jointly.
    MetaMv,
    /// Per-practice GLMs pooled with no between-practice variance.
    MetaFixed,
    /// Sequential D-optimal subsampling taking whole designs.
    Subsample,
    /// Sequential D-optimal subsampling taking a fraction of each design.
    SubsampleModified,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Weighted => "weighted",
            Method::MetaUni => "meta_uni",
            Method::MetaMv => "meta_mv",
            Method::MetaFixed => "meta_fixed",
            Method::Subsample => "subsample",
            Method::SubsampleModified => "subsample_modified",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::Subsample | Method::SubsampleModified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Tau2Mode {
    /// Free between-practice variance for the intercept only.
    InterceptOnly,
    /// No between-practice variance.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MetaEstimator {
    Reml,
    Mom,
}

#[derive(Debug, Clone)]
pub struct MethodParams {
    pub quad_points: usize,
    /// Estimate the negative-binomial dispersion (otherwise held at the
    /// family's value).
    pub estimate_theta: bool,
    /// Continuous columns to bin before collapsing.
    pub bins: Vec<(String, BinScheme)>,
    pub tau2_mode: Tau2Mode,
    pub meta_estimator: MetaEstimator,
    pub center: bool,
    /// Final subsample size as a share of the rows.
    pub target_fraction: f64,
    /// Share of a design's pool rows taken per step in the modified variant.
    pub step_fraction: f64,
    pub n0: usize,
    /// Grid levels per covariate; covariates not listed use their observed values.
    pub grid_levels: Vec<(String, Vec<f64>)>,
    pub exclusive: Vec<Vec<String>>,
    pub seed: Option<u64>,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            quad_points: 15,
            estimate_theta: true,
            bins: Vec::new(),
            tau2_mode: Tau2Mode::InterceptOnly,
            meta_estimator: MetaEstimator::Reml,
            center: false,
            target_fraction: 0.1,
            step_fraction: SubsampleMode::DEFAULT_FRACTION,
            n0: 10_000,
            grid_levels: Vec::new(),
            exclusive: Vec::new(),
            seed: None,
        }
    }
}

impl MethodParams {
    pub fn validate(&self, method: Method) -> Result<()> {
        if self.quad_points == 0 {
            return Err(Error::Invalid("--quad-points must be at least 1".into()));
        }
        if method.is_stochastic() {
            if self.seed.is_none() {
                return Err(Error::Invalid(format!("method {} needs --seed", method.name())));
            }
            if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
                return Err(Error::Invalid("--target-fraction must lie in (0, 1]".into()));
            }
            if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
                return Err(Error::Invalid("--step-fraction must lie in (0, 1]".into()));
            }
            if self.n0 == 0 {
                return Err(Error::Invalid("--n0 must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Link-scale estimates from any method, with what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub formula: String,
    pub family: Family,
    pub link: String,
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Row-major covariance of `beta`.
    pub vcov: Vec<f64>,
    pub tau2: f64,
    pub tau2_se: Option<f64>,
    pub theta: Option<f64>,
    /// Marginal log-likelihood (GLMM methods on their own input only).
    pub loglik: Option<f64>,
    pub converged: bool,
    /// Observations the estimates are based on.
    pub n_obs: usize,
    /// Rows actually processed (collapsed rows for `weighted`).
    pub n_rows: usize,
    pub clusters_used: usize,
    pub clusters_excluded: usize,
    pub exclusions: Vec<Exclusion>,
    pub seed: Option<u64>,
    pub runtime_seconds: f64,
    /// Distinct realized designs taken by subsampling.
    pub designs_visited: Option<usize>,
    pub history: Option<Vec<HistoryEntry>>,
}

/// A report plus the intermediate objects some outputs need.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub report: FitReport,
    pub glmm: Option<GlmmFit>,
    pub estimates: Option<Vec<PracticeEstimate>>,
    pub subsample: Option<SubsampleState>,
}

fn glmm_options(params: &MethodParams) -> GlmmFitOptions {
    GlmmFitOptions { quad_points: params.quad_points, estimate_theta: params.estimate_theta, ..Default::default() }
}

fn from_glmm(method: Method, spec: &GlmmSpec, fit: &GlmmFit, n_rows: usize, seed: Option<u64>) -> FitReport {
    let family = fit.fitted_family(&spec.family());
    FitReport {
        method,
        formula: spec.glm.formula(),
        family,
        link: family.link_name().into(),
        coef_names: fit.coef_names.clone(),
        beta: fit.beta.clone(),
        se: fit.se.clone(),
        vcov: fit.vcov.clone(),
        tau2: fit.tau2,
        tau2_se: fit.tau2_se,
        theta: fit.theta_hat,
        loglik: Some(fit.loglik),
        converged: fit.converged,
        n_obs: fit.n_obs.round() as usize,
        n_rows,
        clusters_used: fit.n_clusters,
        clusters_excluded: 0,
        exclusions: Vec::new(),
        seed,
        runtime_seconds: 0.0,
        designs_visited: None,
        history: None,
    }
}

fn from_meta(method: Method, spec: &GlmmSpec, m: &MetaResult, theta: Option<f64>, n_rows: usize) -> FitReport {
    let family = match theta {
        Some(t) => spec.family().with_theta(t),
        None => spec.family(),
    };
    FitReport {
        method,
        formula: spec.glm.formula(),
        family,
        link: family.link_name().into(),
        coef_names: m.coef_names.clone(),
        beta: m.beta.clone(),
        se: m.se.clone(),
        vcov: m.vcov.clone(),
        tau2: m.tau2,
        tau2_se: None,
        theta: family.theta(),
        loglik: None,
        converged: true,
        n_obs: m.n_obs,
        n_rows,
        clusters_used: m.clusters_used,
        clusters_excluded: m.clusters_excluded,
        exclusions: m.exclusions.clone(),
        seed: None,
        runtime_seconds: 0.0,
        designs_visited: None,
        history: None,
    }
}

/// Drops covariates the model does not use so they cannot split collapse groups.
pub fn model_columns(spec: &GlmmSpec, data: &Dataset) -> Result<Dataset> {
    if data.cluster_name() != spec.cluster {
        return Err(Error::Schema(format!(
            "model clusters on `{}` but the schema cluster column is `{}`",
            spec.cluster,
            data.cluster_name()
        )));
    }
    let names = spec.glm.factor_names();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    data.select(&refs)
}

/// Bins the requested continuous columns and collapses replicated rows.
pub fn collapse_for_model(data: &Dataset, bins: &[(String, BinScheme)]) -> Result<crate::data::CollapsedDataset> {
    let mut binned = data.clone();
    for (col, scheme) in bins {
        if !binned.has_column(&bin_column_name(col)) {
            binned = bin_continuous(&binned, col, scheme)?;
        }
    }
    let names: Vec<&str> = bins.iter().map(|(c, _)| c.as_str()).collect();
    collapse(&binned, &names)
}

/// Covariates with more distinct values than this need explicit grid levels.
pub const MAX_OBSERVED_LEVELS: usize = 50;

/// Design grid for subsampling over the model's covariates.
pub fn design_grid(spec: &GlmmSpec, data: &Dataset, params: &MethodParams) -> Result<DesignGrid> {
    let mut levels = Vec::new();
    for name in spec.glm.factor_names() {
        if let Some((_, l)) = params.grid_levels.iter().find(|(n, _)| *n == name) {
            levels.push((name, l.clone()));
            continue;
        }
        let observed = levels_from_data(data, &[name.as_str()])?.remove(0);
        if observed.1.len() > MAX_OBSERVED_LEVELS {
            return Err(Error::Invalid(format!(
                "covariate `{name}` has {} distinct values; give its grid with --levels",
                observed.1.len()
            )));
        }
        levels.push(observed);
    }
    enumerate_designs(&levels, &params.exclusive)
}

/// Runs one method end to end; the runtime covers everything after the
/// data were loaded.
pub fn run_method(method: Method, spec: &GlmmSpec, data: &Dataset, params: &MethodParams) -> Result<MethodOutput> {
    params.validate(method)?;
    spec.family().validate()?;
    let start = Instant::now();
    let data = model_columns(spec, data)?;
    let mut out = match method {
        Method::Full => {
            let fit = glmm_fit(spec, &data, &glmm_options(params))?;
            let report = from_glmm(method, spec, &fit, data.n_rows(), None);
            MethodOutput { report, glmm: Some(fit), estimates: None, subsample: None }
        }
        Method::Weighted => {
            let collapsed = collapse_for_model(&data, &params.bins)?;
            let fit = glmm_fit(spec, &collapsed, &glmm_options(params))?;
            let report = from_glmm(method, spec, &fit, collapsed.n_rows(), None);
            MethodOutput { report, glmm: Some(fit), estimates: None, subsample: None }
        }
        Method::MetaUni | Method::MetaMv | Method::MetaFixed => {
            let parts = partition_by_practice(&data);
            let with_theta = params.estimate_theta && matches!(spec.family(), Family::NegativeBinomial { .. });
            let opts = PracticeFitOptions { estimate_theta: with_theta, center: params.center };
            let estimates = fit_per_practice(&parts, &spec.glm, &opts)?;
            let mut pooled = match method {
                Method::MetaUni => {
                    let m = match params.meta_estimator {
                        MetaEstimator::Reml => UniMethod::Reml,
                        MetaEstimator::Mom => UniMethod::Mom,
                    };
                    uni_meta_all(&estimates, if params.tau2_mode == Tau2Mode::Zero { UniMethod::Fixed } else { m })?
                }
                Method::MetaMv => {
                    let structure = match params.tau2_mode {
                        Tau2Mode::InterceptOnly => SigmaStructure::InterceptOnly,
                        Tau2Mode::Zero => SigmaStructure::Zero,
                    };
                    let m = match params.meta_estimator {
                        MetaEstimator::Reml => MvMethod::Reml,
                        MetaEstimator::Mom => MvMethod::Mom,
                    };
                    mv_meta(&estimates, structure, m)?
                }
                _ => mv_meta(&estimates, SigmaStructure::Zero, MvMethod::Reml)?,
            };
            if params.center {
                pooled = uncenter(&pooled, &design_means(&parts, &spec.glm)?);
            }
            let theta = if with_theta { Some(aggregate_dispersion(&estimates)?) } else { None };
            let report = from_meta(method, spec, &pooled, theta, data.n_rows());
            MethodOutput { report, glmm: None, estimates: Some(estimates), subsample: None }
        }
        Method::Subsample | Method::SubsampleModified => {
            let grid = design_grid(spec, &data, params)?;
            let n = data.n_rows();
            let target_n = ((params.target_fraction * n as f64).ceil() as usize).clamp(1, n);
            let seed = params.seed.expect("validated");
            let opts = SubsampleOptions {
                n0: params.n0.min(target_n),
                target_n,
                mode: if method == Method::Subsample {
                    SubsampleMode::FullDesign
                } else {
                    SubsampleMode::Fraction(params.step_fraction)
                },
                seed,
                fit: glmm_options(params),
            };
            let run = subsample::run(&data, spec, &grid, &opts)?;
            let mut report = from_glmm(method, spec, &run.fit, run.state.subsample_size(), Some(seed));
            let mut visited: Vec<usize> = run.state.history.iter().map(|h| h.realized_index).collect();
            visited.sort_unstable();
            visited.dedup();
            report.designs_visited = Some(visited.len());
            report.history = Some(run.state.history.clone());
            MethodOutput { report, glmm: Some(run.fit), estimates: None, subsample: Some(run.state) }
        }
    };
    out.report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{itsa_spec, simulate_itsa_logistic, ItsaParams};

    fn small() -> Dataset {
        let p = ItsaParams { n_rows: 3000, n_clusters: 12, tau2: 0.1, ..Default::default() };
        simulate_itsa_logistic(&p, 17).unwrap().data
    }

    #[test]
    fn weighted_matches_full_through_the_dispatcher() {
        let data = small();
        let spec = itsa_spec();
        let params = MethodParams::default();
        let full = run_method(Method::Full, &spec, &data, &params).unwrap().report;
        let weighted = run_method(Method::Weighted, &spec, &data, &params).unwrap().report;
        assert!(weighted.n_rows < full.n_rows);
        assert_eq!(weighted.n_obs, full.n_obs);
        for (a, b) in full.beta.iter().zip(&weighted.beta) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn meta_methods_report_exclusions_and_counts() {
        let data = small();
        let spec = itsa_spec();
        for method in [Method::MetaUni, Method::MetaMv, Method::MetaFixed] {
            let out = run_method(method, &spec, &data, &MethodParams::default()).unwrap();
            let r = &out.report;
            assert_eq!(r.clusters_used + r.clusters_excluded, 12);
            assert_eq!(r.beta.len(), 12);
            assert_eq!(out.estimates.unwrap().len(), 12);
            if method == Method::MetaFixed {
                assert_eq!(r.tau2, 0.0);
            }
        }
    }

    #[test]
    fn stochastic_methods_need_a_seed() {
        let data = small();
        let err = run_method(Method::Subsample, &itsa_spec(), &data, &MethodParams::default());
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn continuous_grid_needs_levels() {
        let data = crate::simulate::simulate_negbin_consults(
            &crate::simulate::ConsultParams { n_rows: 2000, n_clusters: 10, ..Default::default() },
            1,
        )
        .unwrap()
        .data;
        let spec = crate::simulate::consult_spec(1.0);
        let err = design_grid(&spec, &data, &MethodParams::default());
        assert!(err.is_err());
        let (levels, groups) = crate::simulate::consult_design_levels();
        let params = MethodParams { grid_levels: levels, exclusive: groups, ..Default::default() };
        assert_eq!(design_grid(&spec, &data, &params).unwrap().len(), 72);
    }
}
