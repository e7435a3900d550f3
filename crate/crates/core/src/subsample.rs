//! Sequential D-optimal subsampling over a grid of covariate designs.
//!
//! Starting from a random sample, each step fits the GLMM to the current
//! subsample, picks the grid design whose addition maximizes the determinant
//! of the expected information, and moves pool rows with the nearest design
//! still available into the subsample.
//!
//! In fraction mode a design is drawn from once: after a random share of its
//! pool rows has been moved, the design is retired and its remaining rows
//! stay in the pool without being selectable again.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design, DesignGrid};
use crate::error::{Error, Result};
use crate::glm::{frame_information, unit_information};
use crate::glmm::{glmm_fit, GlmmFit, GlmmFitOptions};
use crate::model::{GlmSpec, GlmmSpec, ModelData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleMode {
    /// Move every pool row with the selected design.
    FullDesign,
    /// Move a random `ceil(p * count)` of them and retire the design.
    Fraction(f64),
}

impl SubsampleMode {
    pub const DEFAULT_FRACTION: f64 = 0.25;

    pub fn modified() -> Self {
        SubsampleMode::Fraction(Self::DEFAULT_FRACTION)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SubsampleMode::Fraction(p) if !(p > 0.0 && p <= 1.0) => {
                Err(Error::Invalid(format!("subsample fraction must lie in (0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub chosen_index: usize,
    pub chosen: Vec<f64>,
    pub realized_index: usize,
    pub realized: Vec<f64>,
    pub rows_added: usize,
    pub utility: f64,
    pub cumulative_size: usize,
}

/// Subsample and pool as row indices into the original dataset, with pool
/// rows bucketed by grid design.
#[derive(Debug, Clone)]
pub struct SubsampleState {
    pub grid: DesignGrid,
    /// Sorted rows currently in the subsample.
    subsample_rows: Vec<usize>,
    /// Sorted pool rows for each grid design.
    pool: Vec<Vec<usize>>,
    /// Designs already drawn from in fraction mode.
    retired: Vec<bool>,
    pub history: Vec<HistoryEntry>,
    pub seed: u64,
    pub target_n: usize,
    rng: ChaCha8Rng,
    last_fit: Option<GlmmFit>,
}

impl SubsampleState {
    pub fn subsample_rows(&self) -> &[usize] {
        &self.subsample_rows
    }

    /// Pool rows in ascending order.
    pub fn pool_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.pool.iter().flatten().copied().collect();
        rows.sort_unstable();
        rows
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_rows.len()
    }

    pub fn pool_size(&self) -> usize {
        self.pool.iter().map(Vec::len).sum()
    }

    pub fn pool_count(&self, design: usize) -> usize {
        self.pool[design].len()
    }

    /// Grid indices of designs that still have pool rows and have not been retired.
    pub fn available(&self) -> Vec<usize> {
        (0..self.pool.len()).filter(|&d| !self.pool[d].is_empty() && !self.retired[d]).collect()
    }

    pub fn is_retired(&self, design: usize) -> bool {
        self.retired[design]
    }

    pub fn subsample(&self, data: &Dataset) -> Result<Dataset> {
        data.take(&self.subsample_rows)
    }

    pub fn pool_data(&self, data: &Dataset) -> Result<Dataset> {
        data.take(&self.pool_rows())
    }

    /// Most recent GLMM fit, used to warm-start the next one.
    pub fn last_fit(&self) -> Option<&GlmmFit> {
        self.last_fit.as_ref()
    }

    /// Writes the history with one `chosen:<covariate>` and one
    /// `realized:<covariate>` column per grid covariate.
    pub fn write_history_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.grid.covariates.iter().map(|c| format!("chosen:{c}")));
        header.extend(self.grid.covariates.iter().map(|c| format!("realized:{c}")));
        header.extend(["rows_added", "utility", "cumulative_size"].map(String::from));
        w.write_record(&header)?;
        for h in &self.history {
            let mut rec = vec![h.iteration.to_string()];
            rec.extend(h.chosen.iter().map(|v| v.to_string()));
            rec.extend(h.realized.iter().map(|v| v.to_string()));
            rec.push(h.rows_added.to_string());
            rec.push(format!("{:e}", h.utility));
            rec.push(h.cumulative_size.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simple random sample of `n0` rows without replacement; the rest form the pool.
pub fn initial_sample(data: &Dataset, grid: &DesignGrid, n0: usize, seed: u64) -> Result<SubsampleState> {
    let n = data.n_rows();
    if n0 == 0 || n0 > n {
        return Err(Error::Invalid(format!("initial sample size {n0} must lie in 1..={n}")));
    }
    if grid.is_empty() {
        return Err(Error::Invalid("design grid is empty".into()));
    }
    let assigned = grid.assign(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_sample = vec![false; n];
    for i in sample(&mut rng, n, n0) {
        in_sample[i] = true;
    }
    let mut pool = vec![Vec::new(); grid.len()];
    let mut subsample_rows = Vec::with_capacity(n0);
    for (row, &d) in assigned.iter().enumerate() {
        if in_sample[row] {
            subsample_rows.push(row);
        } else {
            pool[d].push(row);
        }
    }
    Ok(SubsampleState {
        grid: grid.clone(),
        subsample_rows,
        retired: vec![false; pool.len()],
        pool,
        history: Vec::new(),
        seed,
        target_n: n,
        rng,
        last_fit: None,
    })
}

/// `det(current + I_unit(d))`, the reciprocal of the generalized variance
/// after adding one observation at `candidate`. A singular augmented matrix
/// scores 0.
pub fn utility(
    spec: &GlmSpec,
    beta: &[f64],
    covariates: &[String],
    candidate: &Design,
    current_information: &DMatrix<f64>,
) -> Result<f64> {
    let unit = unit_information(spec, beta, covariates, candidate)?;
    if unit.shape() != current_information.shape() {
        return Err(Error::Dimension("information matrices differ in size".into()));
    }
    Ok(augmented_det(current_information + unit))
}

fn augmented_det(m: DMatrix<f64>) -> f64 {
    match m.cholesky() {
        Some(ch) => {
            let d: f64 = ch.l_dirty().diagonal().iter().map(|v| v * v).product();
            if d.is_finite() && d > 0.0 {
                d
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// Utilities of every grid design, in grid order.
pub fn grid_utilities(
    spec: &GlmSpec,
    beta: &[f64],
    grid: &DesignGrid,
    current_information: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    grid.designs
        .par_iter()
        .map(|d| utility(spec, beta, &grid.covariates, d, current_information))
        .collect()
}

/// Argmax of the utilities, ties to the lowest index.
pub fn argmax(utilities: &[f64]) -> (usize, f64) {
    let mut best = (0, utilities[0]);
    for (k, &u) in utilities.iter().enumerate().skip(1) {
        if u > best.1 {
            best = (k, u);
        }
    }
    best
}

/// Best design over the whole grid at `beta`, given the current information.
pub fn select_design(
    spec: &GlmSpec,
    beta: &[f64],
    grid: &DesignGrid,
    current_information: &DMatrix<f64>,
) -> Result<(usize, f64)> {
    if grid.is_empty() {
        return Err(Error::Invalid("design grid is empty".into()));
    }
    Ok(argmax(&grid_utilities(spec, beta, grid, current_information)?))
}

/// Closest design (Euclidean on raw values) among `available` grid indices,
/// ties to the lowest index. `None` when nothing is available.
pub fn nearest_design(grid: &DesignGrid, target: usize, available: &[usize]) -> Option<usize> {
    let t = &grid.designs[target];
    let mut best: Option<(usize, f64)> = None;
    for &k in available {
        let d = t.distance(&grid.designs[k]);
        match best {
            Some((bk, bd)) if d > bd || (d == bd && k > bk) => {}
            _ => best = Some((k, d)),
        }
    }
    best.map(|(k, _)| k)
}

/// One iteration: fit, select, resolve, move rows. On error the state is
/// left untouched so the run can be resumed.
pub fn step(
    state: &mut SubsampleState,
    data: &Dataset,
    spec: &GlmmSpec,
    mode: SubsampleMode,
    fit_opts: &GlmmFitOptions,
) -> Result<GlmmFit> {
    mode.validate()?;
    let available = state.available();
    if available.is_empty() {
        return Err(Error::Empty("no selectable designs remain in the pool".into()));
    }
    let fit = fit_subsample(state, data, spec, fit_opts)?;
    let iteration = state.history.len() + 1;
    if !fit.converged {
        return Err(Error::Numerical(format!(
            "GLMM fit at subsampling step {iteration} did not converge (max gradient {:.3e})",
            fit.grad_max_norm
        )));
    }
    let sub = state.subsample(data)?;
    let glm = spec.glm.with_family(fit.fitted_family(&spec.family()));
    let frame = sub.model_frame(&glm)?;
    let info = frame_information(&frame, &glm.family, &fit.beta);
    let (chosen, u) = select_design(&glm, &fit.beta, &state.grid, &info)?;
    let realized = nearest_design(&state.grid, chosen, &available).expect("pool is not empty");

    let bucket = &state.pool[realized];
    let count = bucket.len();
    let take = match mode {
        SubsampleMode::FullDesign => count,
        SubsampleMode::Fraction(p) => ((p * count as f64).ceil() as usize).clamp(1, count),
    };
    let moved: Vec<usize> = if take == count {
        bucket.clone()
    } else {
        let mut picks: Vec<usize> = sample(&mut state.rng, count, take).into_iter().map(|i| bucket[i]).collect();
        picks.sort_unstable();
        picks
    };
    state.pool[realized].retain(|r| moved.binary_search(r).is_err());
    if matches!(mode, SubsampleMode::Fraction(_)) {
        state.retired[realized] = true;
    }
    state.subsample_rows.extend_from_slice(&moved);
    state.subsample_rows.sort_unstable();
    state.history.push(HistoryEntry {
        iteration,
        chosen_index: chosen,
        chosen: state.grid.designs[chosen].values.clone(),
        realized_index: realized,
        realized: state.grid.designs[realized].values.clone(),
        rows_added: moved.len(),
        utility: u,
        cumulative_size: state.subsample_rows.len(),
    });
    state.last_fit = Some(fit.clone());
    Ok(fit)
}

fn fit_subsample(state: &SubsampleState, data: &Dataset, spec: &GlmmSpec, base: &GlmmFitOptions) -> Result<GlmmFit> {
    let sub = state.subsample(data)?;
    let mut opts = base.clone();
    if let Some(prev) = &state.last_fit {
        opts.init = Some((prev.beta.clone(), prev.tau2, prev.theta_hat));
    }
    glmm_fit(spec, &sub, &opts)
}

#[derive(Debug, Clone)]
pub struct SubsampleOptions {
    pub n0: usize,
    pub target_n: usize,
    pub mode: SubsampleMode,
    pub seed: u64,
    pub fit: GlmmFitOptions,
}

#[derive(Debug, Clone)]
pub struct SubsampleRun {
    pub state: SubsampleState,
    pub fit: GlmmFit,
    pub runtime_seconds: f64,
}

/// Steps until the subsample reaches `target_n` rows or the pool runs dry,
/// then fits the GLMM to the final subsample.
pub fn run(data: &Dataset, spec: &GlmmSpec, grid: &DesignGrid, opts: &SubsampleOptions) -> Result<SubsampleRun> {
    let start = Instant::now();
    opts.mode.validate()?;
    if opts.target_n > data.n_rows() || opts.target_n < opts.n0 {
        return Err(Error::Invalid(format!(
            "target size {} must lie between the initial size {} and the data size {}",
            opts.target_n,
            opts.n0,
            data.n_rows()
        )));
    }
    let mut state = initial_sample(data, grid, opts.n0, opts.seed)?;
    state.target_n = opts.target_n;
    while state.subsample_size() < opts.target_n && !state.available().is_empty() {
        step(&mut state, data, spec, opts.mode, &opts.fit)?;
    }
    let fit = fit_subsample(&state, data, spec, &opts.fit)?;
    state.last_fit = Some(fit.clone());
    Ok(SubsampleRun { state, fit, runtime_seconds: start.elapsed().as_secs_f64() })
}
