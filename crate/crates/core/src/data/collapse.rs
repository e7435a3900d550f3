use std::collections::HashMap;
use std::io::Write;

use super::dataset::{format_number, Column, Dataset};
use super::schema::{Kind, Role};
use super::transform::bin_column_name;
use crate::error::{Error, Result};

/// Unique (outcome, covariates, cluster, exposure) rows with multiplicity
/// weights. Continuous covariates that were collapsed on their bins hold the
/// within-group mean of the raw values.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedDataset {
    data: Dataset,
    weights: Vec<u64>,
    mean_columns: Vec<String>,
    source_rows: usize,
}

impl CollapsedDataset {
    /// Representative rows. Columns listed in [`Self::mean_columns`] carry group means.
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn mean_columns(&self) -> &[String] {
        &self.mean_columns
    }

    /// Row count M of the collapsed table.
    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    /// Row count N of the dataset that was collapsed.
    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    /// Writes the table with `<col>__mean` columns and a trailing `weight` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let schema = self.data.schema();
        let keep: Vec<usize> = (0..schema.len())
            .filter(|&i| !self.mean_columns.contains(&schema[i].name))
            .collect();
        let means: Vec<usize> = self
            .mean_columns
            .iter()
            .map(|c| self.data.column_index(c))
            .collect::<Result<_>>()?;
        let mut header: Vec<String> = keep.iter().map(|&i| schema[i].name.clone()).collect();
        header.extend(self.mean_columns.iter().map(|c| format!("{c}__mean")));
        header.push("weight".into());
        w.write_record(&header)?;
        let cols: Vec<&Column> = schema.iter().map(|c| self.data.column(&c.name).unwrap()).collect();
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = keep.iter().map(|&i| cols[i].cell(row)).collect();
            rec.extend(means.iter().map(|&i| cols[i].cell(row)));
            rec.push(format_number(self.weights[row] as f64));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Collapses replicated rows. Every column except the listed continuous ones
/// forms the key (exposure is keyed by exact value); listed continuous columns
/// must already have a bin column and are replaced by their group mean.
pub fn collapse(dataset: &Dataset, continuous_columns: &[&str]) -> Result<CollapsedDataset> {
    for &c in continuous_columns {
        let spec = dataset.column_schema(c)?;
        if spec.kind != Kind::Continuous || spec.role != Role::Covariate {
            return Err(Error::Schema(format!("`{c}` is not a continuous covariate")));
        }
        if !dataset.has_column(&bin_column_name(c)) {
            return Err(Error::Schema(format!(
                "continuous column `{c}` has no bin column `{}`; bin it first",
                bin_column_name(c)
            )));
        }
    }
    let schema = dataset.schema();
    let key_cols: Vec<&Column> = schema
        .iter()
        .filter(|s| !continuous_columns.contains(&s.name.as_str()))
        .map(|s| dataset.column(&s.name))
        .collect::<Result<_>>()?;
    let mean_cols: Vec<&[f64]> = continuous_columns
        .iter()
        .map(|c| dataset.numeric(c))
        .collect::<Result<_>>()?;

    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut first_rows: Vec<usize> = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut key = Vec::with_capacity(key_cols.len());
    for row in 0..dataset.n_rows() {
        key.clear();
        for col in &key_cols {
            key.push(match col {
                Column::Numeric(v) => (v[row] + 0.0).to_bits(),
                Column::Categorical { codes, .. } => codes[row] as u64,
            });
        }
        let g = match index.get(&key) {
            Some(&g) => g,
            None => {
                index.insert(key.clone(), first_rows.len());
                first_rows.push(row);
                weights.push(0);
                sums.push(vec![0.0; mean_cols.len()]);
                first_rows.len() - 1
            }
        };
        weights[g] += 1;
        for (s, col) in sums[g].iter_mut().zip(&mean_cols) {
            *s += col[row];
        }
    }

    let mut data = dataset.take(&first_rows)?;
    for (k, &c) in continuous_columns.iter().enumerate() {
        let means = sums.iter().zip(&weights).map(|(s, &w)| s[k] / w as f64).collect();
        data = data.with_column(c, Kind::Continuous, Column::Numeric(means))?;
    }
    Ok(CollapsedDataset {
        data,
        weights,
        mean_columns: continuous_columns.iter().map(|s| s.to_string()).collect(),
        source_rows: dataset.n_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::ColumnSchema;
    use crate::data::transform::{bin_continuous, BinScheme};
    use proptest::prelude::*;

    fn dataset(y: &[f64], x: &[f64], cl: &[f64]) -> Dataset {
        Dataset::from_columns(
            vec![
                ColumnSchema::outcome("y", Kind::Binary),
                ColumnSchema::covariate("x", Kind::Binary),
                ColumnSchema::cluster("practice"),
            ],
            vec![
                Column::Numeric(y.to_vec()),
                Column::Numeric(x.to_vec()),
                Column::Numeric(cl.to_vec()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identical_rows_merge() {
        let c = collapse(&dataset(&[1.0; 3], &[0.0; 3], &[0.0; 3]), &[]).unwrap();
        assert_eq!(c.n_rows(), 1);
        assert_eq!(c.weights(), &[3]);
        assert_eq!(c.source_rows(), 3);
    }

    #[test]
    fn cluster_is_part_of_the_key() {
        let c = collapse(&dataset(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 1.0]), &[]).unwrap();
        assert_eq!(c.weights(), &[1, 1]);
    }

    #[test]
    fn group_mean_of_binned_continuous() {
        let d = Dataset::from_columns(
            vec![
                ColumnSchema::outcome("y", Kind::Count),
                ColumnSchema::covariate("age", Kind::Continuous),
                ColumnSchema::cluster("practice"),
                ColumnSchema::exposure("years"),
            ],
            vec![
                Column::Numeric(vec![2.0, 2.0, 2.0]),
                Column::Numeric(vec![40.0, 44.0, 70.0]),
                Column::Numeric(vec![1.0, 1.0, 1.0]),
                Column::Numeric(vec![1.5, 1.5, 1.5]),
            ],
        )
        .unwrap();
        assert!(collapse(&d, &["age"]).is_err());
        let binned = bin_continuous(&d, "age", &BinScheme::Cutpoints(vec![50.0])).unwrap();
        let c = collapse(&binned, &["age"]).unwrap();
        assert_eq!(c.weights(), &[2, 1]);
        assert_eq!(c.data().numeric("age").unwrap(), &[42.0, 70.0]);

        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "y,practice,years,age__bin,age__mean,weight\n2,1,1.5,\"[-inf,50)\",42,2\n2,1,1.5,\"[50,inf)\",70,1\n"
        );
    }

    proptest! {
        #[test]
        fn weights_conserve_mass(rows in proptest::collection::vec((0u8..2, 0u8..3, 0u8..4), 1..200)) {
            let y: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
            let x: Vec<f64> = rows.iter().map(|r| (r.1 % 2) as f64).collect();
            let cl: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
            let d = dataset(&y, &x, &cl);
            let c = collapse(&d, &[]).unwrap();
            prop_assert_eq!(c.weights().iter().sum::<u64>() as usize, d.n_rows());
            prop_assert!(c.n_rows() <= d.n_rows());
            prop_assert!(c.n_rows() <= 2 * 2 * 4);
        }
    }
}
