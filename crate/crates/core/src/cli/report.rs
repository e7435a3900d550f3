//! Side-by-side comparison of methods, in the layout of an OR/RR table.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::methods::{run_method, FitReport, Method, MethodParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::GlmmSpec;

/// Estimate and standard error on the reporting scale: exponentiated for
/// log and logit links (SE by the delta method), unchanged otherwise.
pub fn response_scale(report: &FitReport, k: usize) -> (f64, f64) {
    let (b, se) = (report.beta[k], report.se[k]);
    if report.family.exponentiated_scale() {
        (b.exp(), b.exp() * se)
    } else {
        (b, se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub report: Option<FitReport>,
    pub error: Option<String>,
    /// Wall-clock seconds of each repeat.
    pub runtimes: Vec<f64>,
    pub mean_runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub formula: String,
    pub repeats: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Runs each method `repeats` times in sequence. A failing method is
/// recorded in its row and the others still run.
pub fn compare(
    methods: &[Method],
    spec: &GlmmSpec,
    data: &Dataset,
    params: &MethodParams,
    repeats: usize,
) -> Result<ComparisonReport> {
    if methods.len() < 2 {
        return Err(Error::Invalid("compare needs at least two methods".into()));
    }
    if repeats == 0 {
        return Err(Error::Invalid("--repeats must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut runtimes = Vec::with_capacity(repeats);
        let mut report = None;
        let mut error = None;
        for _ in 0..repeats {
            match run_method(method, spec, data, params) {
                Ok(out) => {
                    runtimes.push(out.report.runtime_seconds);
                    report = Some(out.report);
                }
                Err(e) => {
                    error = Some(e.to_string());
                    report = None;
                    break;
                }
            }
        }
        let mean = if runtimes.is_empty() { f64::NAN } else { runtimes.iter().sum::<f64>() / runtimes.len() as f64 };
        rows.push(ComparisonRow { method, report, error, runtimes, mean_runtime_seconds: mean });
    }
    Ok(ComparisonReport { formula: spec.glm.formula(), repeats, rows })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl ComparisonReport {
    /// Long format: one line per method and coefficient.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "term",
            "estimate",
            "se",
            "response_estimate",
            "response_se",
            "tau2",
            "theta",
            "n_obs",
            "n_rows",
            "clusters_used",
            "clusters_excluded",
            "mean_runtime_seconds",
            "error",
        ])?;
        for row in &self.rows {
            let name = row.method.name();
            match &row.report {
                Some(r) => {
                    for (k, term) in r.coef_names.iter().enumerate() {
                        let (re, rse) = response_scale(r, k);
                        w.write_record([
                            name.to_string(),
                            term.clone(),
                            r.beta[k].to_string(),
                            r.se[k].to_string(),
                            re.to_string(),
                            rse.to_string(),
                            r.tau2.to_string(),
                            opt(r.theta),
                            r.n_obs.to_string(),
                            r.n_rows.to_string(),
                            r.clusters_used.to_string(),
                            r.clusters_excluded.to_string(),
                            row.mean_runtime_seconds.to_string(),
                            String::new(),
                        ])?;
                    }
                }
                None => {
                    let mut rec = vec![name.to_string()];
                    rec.extend(std::iter::repeat_n(String::new(), 12));
                    rec.push(row.error.clone().unwrap_or_default());
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Wide text table: terms down, methods across, `OR/RR (SE)` cells.
    pub fn to_table(&self) -> String {
        let terms: Vec<String> = self
            .rows
            .iter()
            .find_map(|r| r.report.as_ref().map(|r| r.coef_names.clone()))
            .unwrap_or_default();
        let mut head = vec![String::new()];
        head.extend(self.rows.iter().map(|r| r.method.name().to_string()));
        let mut lines: Vec<Vec<String>> = vec![head];
        let cell = |r: &Option<FitReport>, f: &dyn Fn(&FitReport) -> String| r.as_ref().map(f).unwrap_or("-".into());
        for (k, term) in terms.iter().enumerate() {
            let mut line = vec![term.clone()];
            for row in &self.rows {
                line.push(cell(&row.report, &|r| {
                    let (e, s) = response_scale(r, k);
                    format!("{e:.3} ({s:.3})")
                }));
            }
            lines.push(line);
        }
        let extras: [(&str, &dyn Fn(&FitReport) -> String); 4] = [
            ("tau2", &|r| format!("{:.4}", r.tau2)),
            ("theta", &|r| r.theta.map(|t| format!("{t:.3}")).unwrap_or("-".into())),
            ("rows fitted", &|r| r.n_rows.to_string()),
            ("clusters used", &|r| r.clusters_used.to_string()),
        ];
        for (label, f) in extras {
            let mut line = vec![label.to_string()];
            line.extend(self.rows.iter().map(|row| cell(&row.report, f)));
            lines.push(line);
        }
        let mut line = vec![format!("seconds (mean of {})", self.repeats)];
        line.extend(self.rows.iter().map(|row| match &row.error {
            Some(e) => format!("failed: {e}"),
            None => format!("{:.3}", row.mean_runtime_seconds),
        }));
        lines.push(line);

        let widths: Vec<usize> =
            (0..lines[0].len()).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            for (c, text) in l.iter().enumerate() {
                if c == 0 {
                    let _ = write!(out, "{text:<w$}", w = widths[c]);
                } else {
                    let _ = write!(out, "  {text:>w$}", w = widths[c]);
                }
            }
            out.push('\n');
        }
        out
    }
}
