//! Command-line surface: `simulate`, `fit`, `compare`, `collapse`, `designs`.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 numerical. Output files are
//! written all-or-nothing.

pub mod methods;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use methods::{run_method, FitReport, MetaEstimator, Method, MethodOutput, MethodParams, Tau2Mode};
pub use output::Outputs;
pub use report::{compare, response_scale, ComparisonReport, ComparisonRow};

use crate::data::{enumerate_designs, format_schema, levels_from_data, load_csv, read_schema, BinScheme, Dataset, Kind, Role};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::glmm::fitted_values;
use crate::meta::write_estimates_csv;
use crate::model::{GlmSpec, GlmmSpec};
use crate::simulate::{simulate_itsa_logistic, simulate_negbin_consults, ConsultParams, ItsaParams, Simulated, Truth};

#[derive(Debug, Parser)]
#[command(name = "tallglmm", version, about = "Random-intercept GLMMs for tall clustered data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its schema and true parameters.
    Simulate(SimulateArgs),
    /// Fit one model by one method and write the result as JSON.
    Fit(FitArgs),
    /// Fit the same model by several methods and tabulate the results.
    Compare(CompareArgs),
    /// Collapse replicated rows into a weighted CSV.
    Collapse(CollapseArgs),
    /// Enumerate a design grid and count the rows falling on each design.
    Designs(DesignsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Logistic interrupted time series with two interventions.
    Itsa,
    /// Negative-binomial consultation counts with an exposure offset.
    Consults,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub scenario: Scenario,
    /// Number of rows.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of practices.
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Negative-binomial dispersion (consults only).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Spread of the log practice-size multipliers.
    #[arg(long)]
    pub size_sd: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    /// Data CSV; defaults to `<scenario>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Schema file; defaults to the data path with extension `.schema`.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
    /// Truth sidecar; defaults to the data path with extension `.truth.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Bernoulli,
    Poisson,
    Negbin,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Model formula such as `y ~ a + b + a:b`; defaults to every covariate.
    #[arg(long)]
    pub formula: Option<String>,
    /// Response family; defaults from the outcome kind (binary: bernoulli,
    /// count: negbin, continuous: gaussian).
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Negative-binomial dispersion: starting value, or fixed with --fixed-theta.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[arg(long)]
    pub fixed_theta: bool,
    /// Known residual variance for the gaussian family.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
}

#[derive(Debug, Args, Clone)]
pub struct MethodArgs {
    #[arg(long, default_value_t = 15)]
    pub quad_points: usize,
    /// Final subsample size as a share of all rows.
    #[arg(long, default_value_t = 0.1)]
    pub target_fraction: f64,
    /// Share of a design's rows taken per step by subsample_modified.
    #[arg(long, default_value_t = 0.25)]
    pub step_fraction: f64,
    /// Initial random subsample size.
    #[arg(long, default_value_t = 10_000)]
    pub n0: usize,
    /// Continuous columns to bin at quartiles before collapsing.
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<String>,
    /// Explicit bin cutpoints, `column=c1,c2,...` (implies binning that column).
    #[arg(long, value_parser = parse_named_values)]
    pub cutpoints: Vec<(String, Vec<f64>)>,
    /// Between-practice variance structure for meta-analysis.
    #[arg(long = "tau2", value_enum, default_value_t = Tau2Mode::InterceptOnly)]
    pub tau2_mode: Tau2Mode,
    #[arg(long, value_enum, default_value_t = MetaEstimator::Reml)]
    pub meta_estimator: MetaEstimator,
    /// Center covariates before per-practice fits.
    #[arg(long)]
    pub center: bool,
    /// Grid levels for one covariate, `column=v1,v2,...`.
    #[arg(long, value_parser = parse_named_values)]
    pub levels: Vec<(String, Vec<f64>)>,
    /// Mutually exclusive binary covariates, comma separated; repeatable.
    #[arg(long, value_parser = parse_list)]
    pub exclusive: Vec<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Result JSON.
    #[arg(long)]
    pub output: PathBuf,
    /// Subsampling history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Per-practice estimates CSV (meta methods).
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Fitted values at every input row (full and weighted).
    #[arg(long)]
    pub fitted: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Timing repeats per method.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Long-format CSV report.
    #[arg(long)]
    pub output: PathBuf,
    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollapseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Keep only these covariates before collapsing; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<String>,
    #[arg(long, value_parser = parse_named_values)]
    pub cutpoints: Vec<(String, Vec<f64>)>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignsArgs {
    #[arg(long)]
    pub schema: PathBuf,
    /// Data to count rows per design; without it every covariate needs --levels.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Grid covariates; defaults to every numeric covariate in the schema.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long, value_parser = parse_named_values)]
    pub levels: Vec<(String, Vec<f64>)>,
    #[arg(long, value_parser = parse_list)]
    pub exclusive: Vec<Vec<String>>,
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_named_values(s: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let (name, values) = s.split_once('=').ok_or_else(|| format!("expected `name=v1,v2,...`, got `{s}`"))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad number `{v}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if name.trim().is_empty() || values.is_empty() {
        return Err(format!("expected `name=v1,v2,...`, got `{s}`"));
    }
    Ok((name.trim().to_string(), values))
}

fn parse_list(s: &str) -> std::result::Result<Vec<String>, String> {
    let items: Vec<String> = s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if items.len() < 2 {
        return Err("an exclusion group needs at least two columns".into());
    }
    Ok(items)
}

/// Exit code for an error: 1 usage, 2 data, 3 numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invalid(_) => 1,
        Error::Schema(_)
        | Error::MissingColumn(_)
        | Error::Parse { .. }
        | Error::Empty(_)
        | Error::Dimension(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::RankDeficient(_) | Error::Numerical(_) | Error::Degenerate(_) => 3,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Collapse(a) => cmd_collapse(a),
        Command::Designs(a) => cmd_designs(a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Serialize)]
struct Sidecar<'a, P: Serialize> {
    truth: &'a Truth,
    params: &'a P,
}

fn simulate_scenario(a: &SimulateArgs) -> Result<(Simulated, serde_json::Value)> {
    match a.scenario {
        Scenario::Itsa => {
            let mut p = ItsaParams::default();
            p.n_rows = a.n.unwrap_or(p.n_rows);
            p.n_clusters = a.j.unwrap_or(p.n_clusters);
            p.tau2 = a.tau2.unwrap_or(p.tau2);
            p.size_sd = a.size_sd.unwrap_or(p.size_sd);
            if a.theta.is_some() {
                return Err(Error::Invalid("--theta applies to the consults scenario only".into()));
            }
            Ok((simulate_itsa_logistic(&p, a.seed)?, serde_json::to_value(&p)?))
        }
        Scenario::Consults => {
            let mut p = ConsultParams::default();
            p.n_rows = a.n.unwrap_or(p.n_rows);
            p.n_clusters = a.j.unwrap_or(p.n_clusters);
            p.tau2 = a.tau2.unwrap_or(p.tau2);
            p.theta = a.theta.unwrap_or(p.theta);
            p.size_sd = a.size_sd.unwrap_or(p.size_sd);
            Ok((simulate_negbin_consults(&p, a.seed)?, serde_json::to_value(&p)?))
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (sim, params) = simulate_scenario(a)?;
    let name = match a.scenario {
        Scenario::Itsa => "itsa",
        Scenario::Consults => "consults",
    };
    let data_path = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    let schema_path = a.schema_out.clone().unwrap_or_else(|| with_suffix(&data_path, ".schema"));
    let truth_path = a.truth.clone().unwrap_or_else(|| with_suffix(&data_path, ".truth.json"));
    let mut out = Outputs::new();
    out.add(&data_path, |w| sim.data.write_csv(w))?;
    out.add_bytes(&schema_path, format_schema(sim.data.schema()).as_bytes())?;
    out.add_json(&truth_path, &Sidecar { truth: &sim.truth, params: &params })?;
    for p in out.commit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// Loads the data and builds the model from the formula and schema roles.
pub fn load_model(a: &DataArgs) -> Result<(Dataset, GlmmSpec)> {
    let schema = read_schema(&a.schema)?;
    let data = load_csv(&a.input, &schema)?;
    let outcome = data.column_schema(data.outcome_name())?.kind.clone();
    let family = match a.family {
        Some(FamilyArg::Bernoulli) => Family::Bernoulli,
        Some(FamilyArg::Poisson) => Family::Poisson,
        Some(FamilyArg::Negbin) => Family::NegativeBinomial { theta: a.theta },
        Some(FamilyArg::Gaussian) => Family::Gaussian { sigma2: a.sigma2 },
        None => match outcome {
            Kind::Binary => Family::Bernoulli,
            Kind::Count => Family::NegativeBinomial { theta: a.theta },
            Kind::Continuous => Family::Gaussian { sigma2: a.sigma2 },
            Kind::Categorical(_) => return Err(Error::Schema("categorical outcomes are not supported".into())),
        },
    };
    family.validate()?;
    let formula = match &a.formula {
        Some(f) => f.clone(),
        None => {
            let covs: Vec<&str> = data
                .schema()
                .iter()
                .filter(|c| c.role == Role::Covariate && c.kind.is_numeric())
                .map(|c| c.name.as_str())
                .collect();
            if covs.is_empty() {
                format!("{} ~ 1", data.outcome_name())
            } else {
                format!("{} ~ {}", data.outcome_name(), covs.join(" + "))
            }
        }
    };
    let mut glm = GlmSpec::parse(&formula, family)?;
    if glm.outcome != data.outcome_name() {
        return Err(Error::Schema(format!(
            "formula outcome `{}` is not the schema outcome `{}`",
            glm.outcome,
            data.outcome_name()
        )));
    }
    if let Some(e) = data.exposure_name() {
        glm = glm.with_offset(e);
    }
    Ok((data.clone(), GlmmSpec::new(glm, data.cluster_name())))
}

fn bin_schemes(bins: &[String], cutpoints: &[(String, Vec<f64>)]) -> Vec<(String, BinScheme)> {
    let mut out: Vec<(String, BinScheme)> =
        cutpoints.iter().map(|(c, v)| (c.clone(), BinScheme::Cutpoints(v.clone()))).collect();
    for b in bins {
        if !out.iter().any(|(c, _)| c == b) {
            out.push((b.clone(), BinScheme::Quartiles));
        }
    }
    out
}

impl MethodArgs {
    pub fn to_params(&self, data: &DataArgs) -> MethodParams {
        MethodParams {
            quad_points: self.quad_points,
            estimate_theta: !data.fixed_theta,
            bins: bin_schemes(&self.bins, &self.cutpoints),
            tau2_mode: self.tau2_mode,
            meta_estimator: self.meta_estimator,
            center: self.center,
            target_fraction: self.target_fraction,
            step_fraction: self.step_fraction,
            n0: self.n0,
            grid_levels: self.levels.clone(),
            exclusive: self.exclusive.clone(),
            seed: self.seed,
        }
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let (data, spec) = load_model(&a.data)?;
    let params = a.params.to_params(&a.data);
    params.validate(a.method)?;
    if a.history.is_some() && !a.method.is_stochastic() {
        return Err(Error::Invalid("--history applies to the subsampling methods".into()));
    }
    if a.estimates.is_some() && !matches!(a.method, Method::MetaUni | Method::MetaMv | Method::MetaFixed) {
        return Err(Error::Invalid("--estimates applies to the meta methods".into()));
    }
    if a.fitted.is_some() && !matches!(a.method, Method::Full | Method::Weighted) {
        return Err(Error::Invalid("--fitted applies to the full and weighted methods".into()));
    }
    let out = run_method(a.method, &spec, &data, &params)?;
    let mut files = Outputs::new();
    files.add_json(&a.output, &out.report)?;
    if let (Some(path), Some(state)) = (&a.history, &out.subsample) {
        files.add(path, |w| state.write_history_csv(w))?;
    }
    if let (Some(path), Some(est)) = (&a.estimates, &out.estimates) {
        files.add(path, |w| write_estimates_csv(est, w))?;
    }
    if let (Some(path), Some(fit)) = (&a.fitted, &out.glmm) {
        let fv = fitted_values(fit, &spec, &data)?;
        files.add(path, |w| {
            let mut c = csv::Writer::from_writer(w);
            for v in &fv {
                c.serialize(v)?;
            }
            c.flush()?;
            Ok(())
        })?;
    }
    files.commit()?;
    let r = &out.report;
    println!("{} fit of {} ({} observations, {:.3} s)", a.method.name(), r.formula, r.n_obs, r.runtime_seconds);
    for (k, name) in r.coef_names.iter().enumerate() {
        println!("  {name:<28} {:>12.6} ({:.6})", r.beta[k], r.se[k]);
    }
    println!("  tau2 = {:.6}{}", r.tau2, r.theta.map(|t| format!(", theta = {t:.4}")).unwrap_or_default());
    if r.clusters_excluded > 0 {
        println!("  {} practices excluded", r.clusters_excluded);
    }
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let (data, spec) = load_model(&a.data)?;
    let params = a.params.to_params(&a.data);
    for m in &a.methods {
        params.validate(*m)?;
    }
    let rep = compare(&a.methods, &spec, &data, &params, a.repeats)?;
    let mut files = Outputs::new();
    files.add(&a.output, |w| rep.write_csv(w))?;
    if let Some(j) = &a.json {
        files.add_json(j, &rep)?;
    }
    files.commit()?;
    print!("{}", rep.to_table());
    Ok(())
}

pub fn cmd_collapse(a: &CollapseArgs) -> Result<()> {
    let schema = read_schema(&a.schema)?;
    let mut data = load_csv(&a.input, &schema)?;
    if !a.covariates.is_empty() {
        let names: Vec<&str> = a.covariates.iter().map(String::as_str).collect();
        data = data.select(&names)?;
    }
    let collapsed = methods::collapse_for_model(&data, &bin_schemes(&a.bins, &a.cutpoints))?;
    let mut files = Outputs::new();
    files.add(&a.output, |w| collapsed.write_csv(w))?;
    files.commit()?;
    println!(
        "collapsed {} rows to {} (duplication factor {:.1})",
        collapsed.source_rows(),
        collapsed.n_rows(),
        collapsed.source_rows() as f64 / collapsed.n_rows() as f64
    );
    Ok(())
}

pub fn cmd_designs(a: &DesignsArgs) -> Result<()> {
    let schema = read_schema(&a.schema)?;
    let data = a.input.as_ref().map(|p| load_csv(p, &schema)).transpose()?;
    let covariates: Vec<String> = if a.covariates.is_empty() {
        schema
            .iter()
            .filter(|c| c.role == Role::Covariate && c.kind.is_numeric())
            .map(|c| c.name.clone())
            .collect()
    } else {
        a.covariates.clone()
    };
    let mut levels = Vec::new();
    for c in &covariates {
        if let Some((_, l)) = a.levels.iter().find(|(n, _)| n == c) {
            levels.push((c.clone(), l.clone()));
        } else if let Some(d) = &data {
            levels.push(levels_from_data(d, &[c.as_str()])?.remove(0));
        } else {
            return Err(Error::Invalid(format!("covariate `{c}` needs --levels when no --input is given")));
        }
    }
    let grid = enumerate_designs(&levels, &a.exclusive)?;
    let counts = match &data {
        Some(d) => {
            let mut counts = vec![0usize; grid.len()];
            for k in grid.assign(d)? {
                counts[k] += 1;
            }
            Some(counts)
        }
        None => None,
    };
    let mut files = Outputs::new();
    files.add(&a.output, |w| {
        let mut c = csv::Writer::from_writer(w);
        let mut header = vec!["design".to_string()];
        header.extend(grid.covariates.iter().cloned());
        if counts.is_some() {
            header.push("rows".into());
        }
        c.write_record(&header)?;
        for (k, d) in grid.designs.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(d.values.iter().map(|v| v.to_string()));
            if let Some(cn) = &counts {
                rec.push(cn[k].to_string());
            }
            c.write_record(&rec)?;
        }
        c.flush()?;
        Ok(())
    })?;
    files.commit()?;
    match &counts {
        Some(cn) => println!("{} designs, {} present in the data", grid.len(), cn.iter().filter(|&&c| c > 0).count()),
        None => println!("{} designs", grid.len()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_values_parse() {
        assert_eq!(parse_named_values("age=-1.5,0,2").unwrap(), ("age".into(), vec![-1.5, 0.0, 2.0]));
        assert!(parse_named_values("age").is_err());
        assert!(parse_named_values("age=x").is_err());
        assert_eq!(parse_list("a, b,c").unwrap(), vec!["a", "b", "c"]);
        assert!(parse_list("a").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["tallglmm", "fit"]), 1);
        assert_eq!(main_with_args(["tallglmm", "bogus"]), 1);
        assert_eq!(main_with_args(["tallglmm", "--help"]), 0);
    }

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(exit_code(&Error::Invalid("x".into())), 1);
        assert_eq!(exit_code(&Error::MissingColumn("age".into())), 2);
        assert_eq!(exit_code(&Error::RankDeficient(vec!["z".into()])), 3);
    }

    #[test]
    fn default_suffixes() {
        assert_eq!(with_suffix(Path::new("out/itsa.csv"), ".schema"), PathBuf::from("out/itsa.schema"));
        assert_eq!(with_suffix(Path::new("d.csv"), ".truth.json"), PathBuf::from("d.truth.json"));
    }
}
