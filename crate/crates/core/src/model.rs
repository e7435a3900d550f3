//! Model specifications and the numeric model frame every fitter works on.

use serde::{Deserialize, Serialize};

use crate::data::{CollapsedDataset, Column, Dataset, Kind};
use crate::error::{Error, Result};
use crate::family::Family;

pub const INTERCEPT: &str = "(Intercept)";

/// A main effect (one factor) or an interaction (product of several columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub factors: Vec<String>,
}

impl Term {
    pub fn main(name: impl Into<String>) -> Self {
        Self { factors: vec![name.into()] }
    }

    pub fn interaction<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self { factors: names.into_iter().map(Into::into).collect() }
    }

    pub fn name(&self) -> String {
        self.factors.join(":")
    }
}

/// Fixed-effects part of a model: family, outcome, terms, intercept and an
/// optional exposure column entering the linear predictor as `ln(exposure)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub family: Family,
    pub outcome: String,
    pub terms: Vec<Term>,
    pub intercept: bool,
    pub offset: Option<String>,
}

impl GlmSpec {
    pub fn new(family: Family, outcome: impl Into<String>, terms: Vec<Term>) -> Self {
        Self { family, outcome: outcome.into(), terms, intercept: true, offset: None }
    }

    pub fn with_offset(mut self, exposure: impl Into<String>) -> Self {
        self.offset = Some(exposure.into());
        self
    }

    pub fn with_family(&self, family: Family) -> Self {
        Self { family, ..self.clone() }
    }

    /// Parses `y ~ a + b + a:b`, with `a*b` expanding to `a + b + a:b` and
    /// `- 1` (or `0 +`) dropping the intercept.
    pub fn parse(formula: &str, family: Family) -> Result<Self> {
        let (lhs, rhs) = formula
            .split_once('~')
            .ok_or_else(|| Error::Invalid(format!("formula `{formula}` has no `~`")))?;
        let outcome = lhs.trim();
        if outcome.is_empty() {
            return Err(Error::Invalid("formula has no outcome".into()));
        }
        let mut intercept = true;
        let mut terms: Vec<Term> = Vec::new();
        let rhs = rhs.replace("- 1", "+ -1").replace("-1", "+ -1");
        for raw in rhs.split('+') {
            let part = raw.trim();
            match part {
                "" => continue,
                "1" => intercept = true,
                "0" | "-1" => intercept = false,
                _ if part.contains('*') => {
                    let names: Vec<&str> = part.split('*').map(str::trim).collect();
                    if names.iter().any(|n| n.is_empty()) {
                        return Err(Error::Invalid(format!("bad term `{part}`")));
                    }
                    // main effects first, then interactions of increasing order
                    for order in 1..=names.len() {
                        for mask in 1u32..(1 << names.len()) {
                            if mask.count_ones() as usize == order {
                                let t = Term::interaction(
                                    names.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| *n),
                                );
                                if !terms.contains(&t) {
                                    terms.push(t);
                                }
                            }
                        }
                    }
                }
                _ => {
                    let names: Vec<&str> = part.split(':').map(str::trim).collect();
                    if names.iter().any(|n| n.is_empty()) {
                        return Err(Error::Invalid(format!("bad term `{part}`")));
                    }
                    let t = Term::interaction(names);
                    if !terms.contains(&t) {
                        terms.push(t);
                    }
                }
            }
        }
        Ok(Self { family, outcome: outcome.to_string(), terms, intercept, offset: None })
    }

    pub fn formula(&self) -> String {
        let mut rhs: Vec<String> = self.terms.iter().map(Term::name).collect();
        if !self.intercept {
            rhs.push("-1".into());
        }
        if rhs.is_empty() {
            rhs.push("1".into());
        }
        format!("{} ~ {}", self.outcome, rhs.join(" + "))
    }

    /// Distinct data columns used by the terms, in order of first appearance.
    pub fn factor_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in self.terms.iter().flat_map(|t| &t.factors) {
            if !out.contains(f) {
                out.push(f.clone());
            }
        }
        out
    }

    /// Builds the covariate row for a design point given by column values.
    /// Only numeric factors can appear in designs.
    pub fn design_row(&self, names: &[String], values: &[f64]) -> Result<Vec<f64>> {
        if names.len() != values.len() {
            return Err(Error::Dimension("design names and values differ in length".into()));
        }
        let lookup = |f: &str| -> Result<f64> {
            names
                .iter()
                .position(|n| n == f)
                .map(|i| values[i])
                .ok_or_else(|| Error::Invalid(format!("design does not set covariate `{f}`")))
        };
        let mut row = Vec::with_capacity(self.terms.len() + 1);
        if self.intercept {
            row.push(1.0);
        }
        for t in &self.terms {
            let mut v = 1.0;
            for f in &t.factors {
                v *= lookup(f)?;
            }
            row.push(v);
        }
        Ok(row)
    }
}

/// A random-intercept GLMM: fixed effects plus one intercept per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmmSpec {
    pub glm: GlmSpec,
    pub cluster: String,
}

impl GlmmSpec {
    pub fn new(glm: GlmSpec, cluster: impl Into<String>) -> Self {
        Self { glm, cluster: cluster.into() }
    }

    pub fn family(&self) -> Family {
        self.glm.family
    }
}

/// Dense numeric view of a dataset under a model: rows are sorted by cluster
/// (stably) so each cluster occupies a contiguous block.
#[derive(Debug, Clone)]
pub struct ModelFrame {
    pub coef_names: Vec<String>,
    /// Row-major `n x p` design matrix.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub offset: Vec<f64>,
    pub cluster: Vec<u32>,
    pub cluster_labels: Vec<String>,
    /// `cluster_starts[j]..cluster_starts[j+1]` are the rows of cluster `j`.
    pub cluster_starts: Vec<usize>,
    /// Source dataset row of each frame row.
    pub source_rows: Vec<usize>,
}

impl ModelFrame {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.coef_names.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_labels.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn eta(&self, beta: &[f64], i: usize) -> f64 {
        self.offset[i] + self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn cluster_rows(&self, j: usize) -> std::ops::Range<usize> {
        self.cluster_starts[j]..self.cluster_starts[j + 1]
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {}, design has {} columns",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }

    /// Subtracts the weighted mean from every non-intercept column.
    pub fn center_columns(&mut self, intercept: bool) {
        let p = self.p();
        let tw = self.total_weight();
        let start = usize::from(intercept);
        for k in start..p {
            let mean = (0..self.n()).map(|i| self.w[i] * self.x[i * p + k]).sum::<f64>() / tw;
            for i in 0..self.n() {
                self.x[i * p + k] -= mean;
            }
        }
    }

    pub(crate) fn build(spec: &GlmSpec, data: &Dataset, weights: Option<&[u64]>) -> Result<Self> {
        spec.family.validate()?;
        if spec.outcome != data.outcome_name() {
            return Err(Error::Schema(format!(
                "model outcome `{}` is not the dataset outcome `{}`",
                spec.outcome,
                data.outcome_name()
            )));
        }
        let n = data.n_rows();
        let y = data.outcome();
        for (row, &v) in y.iter().enumerate() {
            spec.family.check_outcome(v).map_err(|e| Error::Parse { row: row + 1, message: e.to_string() })?;
        }

        // expand every term into one or more numeric columns
        let mut names: Vec<String> = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        if spec.intercept {
            names.push(INTERCEPT.into());
            cols.push(vec![1.0; n]);
        }
        for term in &spec.terms {
            if term.factors.is_empty() {
                return Err(Error::Invalid("empty term".into()));
            }
            let mut uniq = term.factors.clone();
            uniq.sort();
            uniq.dedup();
            if uniq.len() != term.factors.len() {
                return Err(Error::Invalid(format!("term `{}` repeats a column", term.name())));
            }
            let mut expansion: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; n])];
            for factor in &term.factors {
                let schema = data.column_schema(factor)?;
                let parts: Vec<(String, Vec<f64>)> = match (data.column(factor)?, &schema.kind) {
                    (Column::Numeric(v), _) => vec![(factor.clone(), v.clone())],
                    (Column::Categorical { levels, codes }, Kind::Categorical(_)) => levels
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(l, name)| {
                            let v = codes.iter().map(|&c| f64::from(u8::from(c as usize == l))).collect();
                            (format!("{factor}[{name}]"), v)
                        })
                        .collect(),
                    _ => return Err(Error::Schema(format!("column `{factor}` cannot enter a model term"))),
                };
                let mut next = Vec::with_capacity(expansion.len() * parts.len());
                for (ename, evals) in &expansion {
                    for (pname, pvals) in &parts {
                        let name = if ename.is_empty() { pname.clone() } else { format!("{ename}:{pname}") };
                        next.push((name, evals.iter().zip(pvals).map(|(a, b)| a * b).collect()));
                    }
                }
                expansion = next;
            }
            for (name, v) in expansion {
                names.push(name);
                cols.push(v);
            }
        }
        if names.is_empty() {
            return Err(Error::Invalid("model has no columns".into()));
        }

        let offset_col: Option<&[f64]> = match &spec.offset {
            Some(name) => Some(data.numeric(name)?),
            None => None,
        };
        if let Some(off) = offset_col {
            if let Some(row) = off.iter().position(|&e| !(e > 0.0)) {
                return Err(Error::Parse { row: row + 1, message: "exposure must be positive".into() });
            }
        }
        if let Some(w) = weights {
            if w.len() != n || w.iter().any(|&v| v == 0) {
                return Err(Error::Dimension("weights must be positive, one per row".into()));
            }
        }

        // stable counting sort by cluster
        let codes = data.cluster_codes();
        let j = data.n_clusters();
        let mut counts = vec![0usize; j + 1];
        for &c in codes {
            counts[c as usize + 1] += 1;
        }
        for k in 0..j {
            counts[k + 1] += counts[k];
        }
        let cluster_starts = counts.clone();
        let mut order = vec![0usize; n];
        let mut next = counts;
        for (row, &c) in codes.iter().enumerate() {
            order[next[c as usize]] = row;
            next[c as usize] += 1;
        }

        let p = names.len();
        let mut x = Vec::with_capacity(n * p);
        for &r in &order {
            for col in &cols {
                x.push(col[r]);
            }
        }
        Ok(Self {
            coef_names: names,
            x,
            y: order.iter().map(|&r| y[r]).collect(),
            w: order.iter().map(|&r| weights.map_or(1.0, |w| w[r] as f64)).collect(),
            offset: order.iter().map(|&r| offset_col.map_or(0.0, |o| o[r].ln())).collect(),
            cluster: order.iter().map(|&r| codes[r]).collect(),
            cluster_labels: data.cluster_labels().to_vec(),
            cluster_starts,
            source_rows: order,
        })
    }
}

/// Anything a model can be fitted to: a plain dataset (unit weights) or a
/// collapsed one (integer likelihood weights).
pub trait ModelData: Sync {
    fn dataset(&self) -> &Dataset;
    fn row_weights(&self) -> Option<&[u64]>;

    fn model_frame(&self, spec: &GlmSpec) -> Result<ModelFrame> {
        ModelFrame::build(spec, self.dataset(), self.row_weights())
    }

    /// Number of original observations represented.
    fn n_observations(&self) -> usize {
        self.row_weights()
            .map_or(self.dataset().n_rows(), |w| w.iter().sum::<u64>() as usize)
    }
}

impl ModelData for Dataset {
    fn dataset(&self) -> &Dataset {
        self
    }

    fn row_weights(&self) -> Option<&[u64]> {
        None
    }
}

impl ModelData for CollapsedDataset {
    fn dataset(&self) -> &Dataset {
        self.data()
    }

    fn row_weights(&self) -> Option<&[u64]> {
        Some(self.weights())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSchema, Kind};

    #[test]
    fn parses_formulas() {
        let s = GlmSpec::parse("y ~ time + case + case:time", Family::Bernoulli).unwrap();
        assert_eq!(s.outcome, "y");
        assert_eq!(s.terms.len(), 3);
        assert_eq!(s.terms[2], Term::interaction(["case", "time"]));
        assert!(s.intercept);

        let s = GlmSpec::parse("y ~ a*b", Family::Poisson).unwrap();
        let names: Vec<String> = s.terms.iter().map(Term::name).collect();
        assert_eq!(names, vec!["a", "b", "a:b"]);

        let s = GlmSpec::parse("y ~ x - 1", Family::Poisson).unwrap();
        assert!(!s.intercept);
        assert_eq!(s.terms, vec![Term::main("x")]);
        assert_eq!(GlmSpec::parse(&s.formula(), Family::Poisson).unwrap(), s);

        let s = GlmSpec::parse("y ~ 1", Family::Poisson).unwrap();
        assert!(s.terms.is_empty() && s.intercept);
        assert!(GlmSpec::parse("y", Family::Poisson).is_err());
    }

    #[test]
    fn frame_sorts_by_cluster_and_expands_categoricals() {
        let d = Dataset::from_columns(
            vec![
                ColumnSchema::outcome("y", Kind::Count),
                ColumnSchema::covariate("g", Kind::Categorical(vec!["lo".into(), "mid".into(), "hi".into()])),
                ColumnSchema::covariate("x", Kind::Continuous),
                ColumnSchema::cluster("c"),
                ColumnSchema::exposure("e"),
            ],
            vec![
                Column::Numeric(vec![1.0, 2.0, 3.0]),
                Column::Categorical { levels: vec!["lo".into(), "mid".into(), "hi".into()], codes: vec![2, 0, 1] },
                Column::Numeric(vec![0.5, 1.5, 2.5]),
                Column::Numeric(vec![7.0, 8.0, 7.0]),
                Column::Numeric(vec![1.0, 2.0, 4.0]),
            ],
        )
        .unwrap();
        let spec = GlmSpec::new(Family::Poisson, "y", vec![Term::main("g"), Term::interaction(["g", "x"])])
            .with_offset("e");
        let f = d.model_frame(&spec).unwrap();
        assert_eq!(f.coef_names, vec!["(Intercept)", "g[mid]", "g[hi]", "g[mid]:x", "g[hi]:x"]);
        assert_eq!(f.source_rows, vec![0, 2, 1]);
        assert_eq!(f.cluster_starts, vec![0, 2, 3]);
        assert_eq!(f.row(0), &[1.0, 0.0, 1.0, 0.0, 0.5]);
        assert_eq!(f.row(1), &[1.0, 1.0, 0.0, 2.5, 0.0]);
        assert!((f.offset[1] - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn design_rows() {
        let s = GlmSpec::parse("y ~ a + b + a:b", Family::Bernoulli).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(s.design_row(&names, &[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0, 6.0]);
        assert!(s.design_row(&names[..1], &[2.0]).is_err());
    }
}
