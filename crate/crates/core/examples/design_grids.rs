//! Enumerate the candidate design grids of the two case studies and count
//! how many of them occur in simulated data.
//!
//! cargo run --release --example design_grids

use std::collections::BTreeMap;

use tallglmm::data::enumerate_designs;
use tallglmm::simulate::{
    consult_design_levels, itsa_design_levels, simulate_itsa_logistic, simulate_negbin_consults, ConsultParams,
    ItsaParams,
};

fn main() -> tallglmm::Result<()> {
    let itsa = enumerate_designs(&itsa_design_levels(), &[])?;
    let data = simulate_itsa_logistic(&ItsaParams { n_rows: 20_000, ..Default::default() }, 1)?.data;
    report("interrupted time series", &itsa, &data)?;

    let (levels, groups) = consult_design_levels();
    let consults = enumerate_designs(&levels, &groups)?;
    let data = simulate_negbin_consults(&ConsultParams { n_rows: 20_000, ..Default::default() }, 1)?.data;
    report("consultations", &consults, &data)?;
    Ok(())
}

fn report(name: &str, grid: &tallglmm::data::DesignGrid, data: &tallglmm::data::Dataset) -> tallglmm::Result<()> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in grid.assign(data)? {
        *counts.entry(d).or_default() += 1;
    }
    let sizes: Vec<usize> = counts.values().copied().collect();
    println!(
        "{name}: {} designs over {:?}, {} present, rows per present design {}..{}",
        grid.len(),
        grid.covariates,
        counts.len(),
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0)
    );
    Ok(())
}
