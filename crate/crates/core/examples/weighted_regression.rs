//! Collapse replicated rows into integer weights and fit the GLMM to the
//! weighted table. With only discrete columns the result matches the
//! full-data fit.
//!
//! cargo run --release --example weighted_regression

use std::time::Instant;

use tallglmm::data::collapse;
use tallglmm::glmm::{glmm_fit, GlmmFitOptions};
use tallglmm::simulate::{itsa_spec, simulate_itsa_logistic, ItsaParams};

fn main() -> tallglmm::Result<()> {
    let params = ItsaParams { n_rows: 50_000, n_clusters: 50, ..Default::default() };
    let sim = simulate_itsa_logistic(&params, 7)?;
    let spec = itsa_spec();
    let opts = GlmmFitOptions::default();

    let t = Instant::now();
    let full = glmm_fit(&spec, &sim.data, &opts)?;
    let full_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let collapsed = collapse(&sim.data, &[])?;
    let weighted = glmm_fit(&spec, &collapsed, &opts)?;
    let weighted_secs = t.elapsed().as_secs_f64();

    println!(
        "{} rows collapsed to {} ({:.1}% smaller)",
        collapsed.source_rows(),
        collapsed.n_rows(),
        100.0 * (1.0 - collapsed.n_rows() as f64 / collapsed.source_rows() as f64)
    );
    println!("{:<26} {:>12} {:>12} {:>10}", "term", "full", "weighted", "truth");
    for (k, name) in full.coef_names.iter().enumerate() {
        println!("{name:<26} {:>12.6} {:>12.6} {:>10.3}", full.beta[k], weighted.beta[k], sim.truth.beta[k]);
    }
    println!("{:<26} {:>12.6} {:>12.6} {:>10.3}", "tau2", full.tau2, weighted.tau2, sim.truth.tau2);
    println!("{:<26} {:>12.4} {:>12.4}", "marginal loglik", full.loglik, weighted.loglik);
    println!("{:<26} {:>12.2} {:>12.2}", "seconds", full_secs, weighted_secs);
    Ok(())
}
