//! Grow a subsample by D-optimal design selection, once taking every pool
//! row of the selected design and once a quarter of them.
//!
//! cargo run --release --example sequential_subsampling

use std::collections::BTreeSet;

use tallglmm::data::enumerate_designs;
use tallglmm::glmm::GlmmFitOptions;
use tallglmm::simulate::{itsa_design_levels, itsa_spec, simulate_itsa_logistic, ItsaParams};
use tallglmm::subsample::{run, SubsampleMode, SubsampleOptions};

fn main() -> tallglmm::Result<()> {
    let params = ItsaParams { n_rows: 100_000, n_clusters: 50, ..Default::default() };
    let sim = simulate_itsa_logistic(&params, 3)?;
    let spec = itsa_spec();
    let grid = enumerate_designs(&itsa_design_levels(), &[])?;

    for mode in [SubsampleMode::FullDesign, SubsampleMode::modified()] {
        let opts = SubsampleOptions { n0: 5_000, target_n: 10_000, mode, seed: 1, fit: GlmmFitOptions::default() };
        let out = run(&sim.data, &spec, &grid, &opts)?;
        let visited: BTreeSet<usize> = out.state.history.iter().map(|h| h.realized_index).collect();
        println!(
            "{mode:?}: {} steps, {} distinct designs, final size {}, {:.1}s",
            out.state.history.len(),
            visited.len(),
            out.state.subsample_size(),
            out.runtime_seconds
        );
        for h in &out.state.history {
            println!("  {:>2}  chosen {:?}  realized {:?}  +{}", h.iteration, h.chosen, h.realized, h.rows_added);
        }
        for (name, (b, t)) in out.fit.coef_names.iter().zip(out.fit.beta.iter().zip(&sim.truth.beta)) {
            println!("      {name:<26} {b:>9.3}  (truth {t:.3})");
        }
    }
    Ok(())
}
