use super::dataset::{format_number, Column, Dataset, Standardization};
use super::schema::{ColumnSchema, Kind, Role};
use crate::error::{Error, Result};

/// Suffix of the categorical column added by [`bin_continuous`].
pub const BIN_SUFFIX: &str = "__bin";

pub fn bin_column_name(column: &str) -> String {
    format!("{column}{BIN_SUFFIX}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum BinScheme {
    Quartiles,
    Cutpoints(Vec<f64>),
}

fn continuous_values<'a>(dataset: &'a Dataset, column: &str) -> Result<&'a [f64]> {
    let spec = dataset.column_schema(column)?;
    if spec.kind != Kind::Continuous {
        return Err(Error::Schema(format!("column `{column}` is not continuous")));
    }
    dataset.numeric(column)
}

/// Rescales a continuous column to sample mean 0 and sample variance 1
/// (denominator N-1). The transform parameters are kept on the dataset.
pub fn standardize(dataset: &Dataset, column: &str) -> Result<Dataset> {
    let values = continuous_values(dataset, column)?;
    let n = values.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("cannot standardize `{column}` with one row")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) || sd <= 1e-300 {
        return Err(Error::Degenerate(format!("column `{column}` has zero variance")));
    }
    let scaled = values.iter().map(|x| (x - mean) / sd).collect();
    let mut out = dataset.with_column(column, Kind::Continuous, Column::Numeric(scaled))?;
    out.transforms.push(Standardization { column: column.to_string(), mean, sd });
    Ok(out)
}

/// Nearest-rank percentile of sorted data, `pct` in (0, 100].
fn nearest_rank(sorted: &[f64], pct: f64) -> usize {
    let n = sorted.len();
    let rank = (pct / 100.0 * n as f64).ceil() as usize;
    rank.clamp(1, n) - 1
}

/// Quartile boundaries: the midpoint between the nearest-rank quartile and
/// the next order statistic, so every bin is a right-open interval.
fn quartile_cuts(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts = Vec::new();
    for pct in [25.0, 50.0, 75.0] {
        let i = nearest_rank(&sorted, pct);
        let cut = if i + 1 < n { 0.5 * (sorted[i] + sorted[i + 1]) } else { sorted[i] };
        if cuts.last().map_or(true, |&last| cut > last) {
            cuts.push(cut);
        }
    }
    cuts
}

fn interval_label(lo: Option<f64>, hi: Option<f64>) -> String {
    let lo = lo.map_or("-inf".to_string(), format_number);
    let hi = hi.map_or("inf".to_string(), format_number);
    format!("[{lo},{hi})")
}

/// Adds a categorical `<column>__bin` covariate holding the bin of each value.
/// Intervals are right-open; the maximum lands in the top bin.
pub fn bin_continuous(dataset: &Dataset, column: &str, scheme: &BinScheme) -> Result<Dataset> {
    let values = continuous_values(dataset, column)?;
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let (cuts, labels) = match scheme {
        BinScheme::Quartiles => {
            if distinct.len() < 4 {
                return Err(Error::Degenerate(format!(
                    "column `{column}` has {} distinct values, quartiles need 4",
                    distinct.len()
                )));
            }
            let cuts = quartile_cuts(values);
            let labels = (1..=cuts.len() + 1).map(|q| format!("Q{q}")).collect();
            (cuts, labels)
        }
        BinScheme::Cutpoints(cuts) => {
            if cuts.is_empty() || cuts.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Invalid("cutpoints must be nonempty and strictly increasing".into()));
            }
            if distinct.len() < cuts.len() + 1 {
                return Err(Error::Degenerate(format!(
                    "column `{column}` has {} distinct values for {} bins",
                    distinct.len(),
                    cuts.len() + 1
                )));
            }
            let mut labels = Vec::with_capacity(cuts.len() + 1);
            for i in 0..=cuts.len() {
                let lo = if i == 0 { None } else { Some(cuts[i - 1]) };
                let hi = cuts.get(i).copied();
                labels.push(interval_label(lo, hi));
            }
            (cuts.clone(), labels)
        }
    };

    let codes = values.iter().map(|&x| cuts.partition_point(|&c| c <= x) as u32).collect();
    let spec = ColumnSchema::new(bin_column_name(column), Role::Covariate, Kind::Categorical(labels.clone()));
    dataset.with_added_column(spec, Column::Categorical { levels: labels, codes })
}
