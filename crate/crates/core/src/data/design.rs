use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// One combination of covariate levels, one entry per grid covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub values: Vec<f64>,
}

impl Design {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn distance(&self, other: &Design) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// All admissible designs in lexicographic order over the declared levels
/// (the first covariate varies slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGrid {
    pub covariates: Vec<String>,
    pub levels: Vec<Vec<f64>>,
    pub designs: Vec<Design>,
    pub exclusion_groups: Vec<Vec<String>>,
    #[serde(skip)]
    index: HashMap<Vec<u64>, usize>,
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Enumerates the Cartesian product of covariate levels, dropping designs in
/// which more than one member of an exclusion group equals 1.
pub fn enumerate_designs(levels: &[(String, Vec<f64>)], exclusion_groups: &[Vec<String>]) -> Result<DesignGrid> {
    if levels.is_empty() {
        return Err(Error::Invalid("design grid needs at least one covariate".into()));
    }
    let covariates: Vec<String> = levels.iter().map(|(n, _)| n.clone()).collect();
    for (name, lv) in levels {
        if lv.is_empty() {
            return Err(Error::Invalid(format!("covariate `{name}` has no levels")));
        }
        let mut sorted = lv.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != lv.len() {
            return Err(Error::Invalid(format!("covariate `{name}` has duplicate levels")));
        }
    }
    let groups = exclusion_groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|name| {
                    covariates
                        .iter()
                        .position(|c| c == name)
                        .ok_or_else(|| Error::Invalid(format!("exclusion group names unknown covariate `{name}`")))
                })
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let level_lists: Vec<&Vec<f64>> = levels.iter().map(|(_, l)| l).collect();
    let mut designs = Vec::new();
    let mut counter = vec![0usize; level_lists.len()];
    'outer: loop {
        let values: Vec<f64> = counter.iter().zip(&level_lists).map(|(&i, l)| l[i]).collect();
        if groups.iter().all(|g| g.iter().filter(|&&c| values[c] == 1.0).count() <= 1) {
            designs.push(Design::new(values));
        }
        for pos in (0..counter.len()).rev() {
            counter[pos] += 1;
            if counter[pos] < level_lists[pos].len() {
                continue 'outer;
            }
            counter[pos] = 0;
        }
        break;
    }
    Ok(DesignGrid::from_parts(
        covariates,
        level_lists.into_iter().cloned().collect(),
        designs,
        exclusion_groups.to_vec(),
    ))
}

impl DesignGrid {
    fn from_parts(
        covariates: Vec<String>,
        levels: Vec<Vec<f64>>,
        designs: Vec<Design>,
        exclusion_groups: Vec<Vec<String>>,
    ) -> Self {
        let index = designs.iter().enumerate().map(|(i, d)| (key(&d.values), i)).collect();
        Self { covariates, levels, designs, exclusion_groups, index }
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn index_of(&self, values: &[f64]) -> Option<usize> {
        if self.index.is_empty() && !self.designs.is_empty() {
            return self.designs.iter().position(|d| d.values == values);
        }
        self.index.get(&key(values)).copied()
    }

    /// Assigns every row of `dataset` to a grid design. Each covariate value is
    /// snapped to its nearest declared level, which is exact for discrete
    /// covariates and bins continuous ones onto the grid.
    pub fn assign(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        let columns = self
            .covariates
            .iter()
            .map(|c| dataset.numeric(c))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(dataset.n_rows());
        let mut values = vec![0.0; columns.len()];
        for row in 0..dataset.n_rows() {
            for (k, col) in columns.iter().enumerate() {
                values[k] = snap(col[row], &self.levels[k]);
            }
            let idx = self.index_of(&values).ok_or_else(|| Error::Parse {
                row: row + 1,
                message: format!("covariate combination {values:?} is not in the design grid"),
            })?;
            out.push(idx);
        }
        Ok(out)
    }
}

fn snap(x: f64, levels: &[f64]) -> f64 {
    let mut best = levels[0];
    for &l in &levels[1..] {
        if (x - l).abs() < (x - best).abs() {
            best = l;
        }
    }
    best
}

/// Distinct values of each named numeric column, ascending.
pub fn levels_from_data(dataset: &Dataset, covariates: &[&str]) -> Result<Vec<(String, Vec<f64>)>> {
    covariates
        .iter()
        .map(|&name| {
            let mut v = dataset.numeric(name)?.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            Ok((name.to_string(), v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary(name: &str) -> (String, Vec<f64>) {
        (name.to_string(), vec![0.0, 1.0])
    }

    pub(crate) fn itsa_levels() -> Vec<(String, Vec<f64>)> {
        vec![
            ("time".into(), (1..=19).map(f64::from).collect()),
            binary("case"),
            binary("intervention1"),
            binary("intervention2"),
        ]
    }

    #[test]
    fn itsa_grid_has_152_designs() {
        let grid = enumerate_designs(&itsa_levels(), &[]).unwrap();
        assert_eq!(grid.len(), 152);
        assert_eq!(grid.designs[0].values, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(grid.designs[151].values, vec![19.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn consult_grid_has_72_designs() {
        let ages = vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
        let levels = vec![
            ("age".to_string(), ages),
            binary("gender"),
            binary("moderate"),
            binary("high"),
            binary("veryhigh"),
        ];
        let groups = vec![vec!["moderate".into(), "high".into(), "veryhigh".into()]];
        assert_eq!(enumerate_designs(&levels, &groups).unwrap().len(), 72);
    }

    #[test]
    fn single_binary_covariate() {
        assert_eq!(enumerate_designs(&[binary("x")], &[]).unwrap().len(), 2);
    }

    #[test]
    fn nearest_level_assignment() {
        assert_eq!(snap(0.2, &[-0.5, 0.0, 0.5]), 0.0);
        assert_eq!(snap(0.3, &[-0.5, 0.0, 0.5]), 0.5);
        assert_eq!(snap(-2.7, &[-1.5, 0.0]), -1.5);
    }

    proptest! {
        #[test]
        fn count_matches_brute_force(
            plain in proptest::collection::vec(1usize..5, 0..3),
            group_sizes in proptest::collection::vec(1usize..4, 0..3),
        ) {
            let mut levels = Vec::new();
            for (i, &n) in plain.iter().enumerate() {
                levels.push((format!("c{i}"), (0..n).map(|v| v as f64 * 0.5).collect::<Vec<_>>()));
            }
            let mut groups = Vec::new();
            for (g, &size) in group_sizes.iter().enumerate() {
                let names: Vec<String> = (0..size).map(|k| format!("g{g}_{k}")).collect();
                for n in &names {
                    levels.push(binary(n));
                }
                groups.push(names);
            }
            prop_assume!(!levels.is_empty());
            let grid = enumerate_designs(&levels, &groups).unwrap();

            // closed form: product of level counts, with (g+1) replacing 2^g per group
            let closed: usize = plain.iter().product::<usize>()
                * group_sizes.iter().map(|g| g + 1).product::<usize>();
            prop_assert_eq!(grid.len(), closed);

            // brute force over the full product
            let total: usize = levels.iter().map(|(_, l)| l.len()).product();
            let mut brute = Vec::new();
            for mut idx in 0..total {
                let mut vals = vec![0.0; levels.len()];
                for k in (0..levels.len()).rev() {
                    let n = levels[k].1.len();
                    vals[k] = levels[k].1[idx % n];
                    idx /= n;
                }
                let ok = groups.iter().all(|g| {
                    g.iter().filter(|name| {
                        let pos = levels.iter().position(|(n, _)| n == *name).unwrap();
                        vals[pos] == 1.0
                    }).count() <= 1
                });
                if ok {
                    brute.push(vals);
                }
            }
            let got: Vec<Vec<f64>> = grid.designs.iter().map(|d| d.values.clone()).collect();
            prop_assert_eq!(got, brute);
        }
    }
}
