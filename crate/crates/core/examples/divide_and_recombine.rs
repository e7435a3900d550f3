//! Fit the GLM separately in every practice and pool the estimates by
//! fixed-effect, univariate and multivariate random-effects meta-analysis.
//!
//! cargo run --release --example divide_and_recombine

use tallglmm::data::partition_by_practice;
use tallglmm::glmm::{glmm_fit, GlmmFitOptions};
use tallglmm::meta::{fit_per_practice, mv_meta, uni_meta_all, MvMethod, PracticeFitOptions, SigmaStructure, UniMethod};
use tallglmm::simulate::{itsa_spec, simulate_itsa_logistic, ItsaParams};

fn main() -> tallglmm::Result<()> {
    let params = ItsaParams { n_rows: 40_000, n_clusters: 40, ..Default::default() };
    let sim = simulate_itsa_logistic(&params, 11)?;
    let spec = itsa_spec();

    let parts = partition_by_practice(&sim.data);
    let estimates = fit_per_practice(&parts, &spec.glm, &PracticeFitOptions::default())?;
    let fixed = mv_meta(&estimates, SigmaStructure::Zero, MvMethod::Reml)?;
    let uni = uni_meta_all(&estimates, UniMethod::Reml)?;
    let mv = mv_meta(&estimates, SigmaStructure::InterceptOnly, MvMethod::Reml)?;
    let full = glmm_fit(&spec, &sim.data, &GlmmFitOptions::default())?;

    println!("{} practices used, {} excluded", mv.clusters_used, mv.clusters_excluded);
    for e in &mv.exclusions {
        println!("  excluded {}: {}", e.cluster, e.reason.as_str());
    }
    println!("{:<26} {:>10} {:>10} {:>10} {:>10}", "term", "full", "fixed", "uni", "mv");
    for (k, name) in full.coef_names.iter().enumerate() {
        println!(
            "{name:<26} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            full.beta[k], fixed.beta[k], uni.beta[k], mv.beta[k]
        );
    }
    println!("{:<26} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", "tau2", full.tau2, fixed.tau2, uni.tau2, mv.tau2);
    Ok(())
}
