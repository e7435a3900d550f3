//! Synthetic data shaped like the two case studies, with known truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Column, ColumnSchema, Dataset, Kind};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::model::{GlmSpec, GlmmSpec};

/// Time of the first intervention on the 1..19 scale.
pub const INTERVENTION1_START: u32 = 9;
/// Time of the second intervention.
pub const INTERVENTION2_START: u32 = 16;

pub const ITSA_TERMS: [&str; 11] = [
    "time",
    "case",
    "time:case",
    "intervention1",
    "time:intervention1",
    "case:intervention1",
    "time:case:intervention1",
    "intervention2",
    "time:intervention2",
    "case:intervention2",
    "time:case:intervention2",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItsaParams {
    /// Intercept followed by the coefficients of [`ITSA_TERMS`].
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub n_clusters: usize,
    pub n_rows: usize,
    /// Standard deviation of the log cluster-size multipliers.
    pub size_sd: f64,
    pub case_probability: f64,
}

impl Default for ItsaParams {
    fn default() -> Self {
        Self {
            beta: vec![-2.0, 0.08, -0.4, 0.03, 0.6, -0.06, 0.3, 0.01, 0.5, -0.05, 0.4, -0.03],
            tau2: 0.05,
            n_clusters: 50,
            n_rows: 50_000,
            size_sd: 0.5,
            case_probability: 0.5,
        }
    }
}

impl ItsaParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != ITSA_TERMS.len() + 1 {
            return Err(Error::Invalid(format!("ITSA model needs {} coefficients", ITSA_TERMS.len() + 1)));
        }
        check_common(self.tau2, self.n_clusters, self.n_rows, self.size_sd)?;
        if !(0.0..=1.0).contains(&self.case_probability) {
            return Err(Error::Invalid("case probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultParams {
    /// Intercept, age (standardized), gender, moderate, high, very high.
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub theta: f64,
    pub n_clusters: usize,
    pub n_rows: usize,
    pub size_sd: f64,
    /// Years in study are uniform on this interval.
    pub exposure_range: (f64, f64),
    /// Probabilities of low, moderate, high and very high morbidity.
    pub morbidity_probabilities: [f64; 4],
    pub male_probability: f64,
    /// Raw age distribution before standardization: normal, clamped.
    pub age_mean: f64,
    pub age_sd: f64,
}

impl Default for ConsultParams {
    fn default() -> Self {
        Self {
            beta: vec![3f64.ln(), 1.25f64.ln(), 0.68f64.ln(), 2.12f64.ln(), 2.94f64.ln(), 3.94f64.ln()],
            tau2: 0.1,
            theta: 1.25,
            n_clusters: 200,
            n_rows: 100_000,
            size_sd: 0.5,
            exposure_range: (0.5, 4.0),
            morbidity_probabilities: [0.5, 0.25, 0.15, 0.1],
            male_probability: 0.5,
            age_mean: 50.0,
            age_sd: 17.0,
        }
    }
}

impl ConsultParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != 6 {
            return Err(Error::Invalid("consultation model needs 6 coefficients".into()));
        }
        check_common(self.tau2, self.n_clusters, self.n_rows, self.size_sd)?;
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Invalid("theta must be positive".into()));
        }
        let (lo, hi) = self.exposure_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Invalid("exposure range must be positive and ordered".into()));
        }
        let total: f64 = self.morbidity_probabilities.iter().sum();
        if self.morbidity_probabilities.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid("morbidity probabilities must be nonnegative and sum to 1".into()));
        }
        if !(0.0..=1.0).contains(&self.male_probability) || !(self.age_sd > 0.0) {
            return Err(Error::Invalid("invalid gender probability or age spread".into()));
        }
        Ok(())
    }
}

fn check_common(tau2: f64, j: usize, n: usize, size_sd: f64) -> Result<()> {
    if !(tau2 >= 0.0 && tau2.is_finite()) {
        return Err(Error::Invalid("tau2 must be nonnegative".into()));
    }
    if j == 0 || n < j {
        return Err(Error::Invalid("need at least one cluster and at least one row per cluster".into()));
    }
    if !(size_sd >= 0.0 && size_sd.is_finite()) {
        return Err(Error::Invalid("size_sd must be nonnegative".into()));
    }
    Ok(())
}

/// Generating parameters plus the realized cluster effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub generator: String,
    pub seed: u64,
    pub family: Family,
    pub formula: String,
    pub offset: Option<String>,
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub cluster_labels: Vec<String>,
    pub cluster_effects: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: Truth,
}

/// One plus a multinomial share of the remaining rows per cluster, with
/// log-normal size multipliers.
fn cluster_sizes(rng: &mut ChaCha8Rng, n: usize, j: usize, size_sd: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..j)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (size_sd * z).exp()
        })
        .collect();
    let mut remaining = (n - j) as u64;
    let mut weight_left: f64 = weights.iter().sum();
    let mut sizes = Vec::with_capacity(j);
    for (k, w) in weights.iter().enumerate() {
        let take = if k + 1 == j || remaining == 0 {
            remaining
        } else {
            let p = (w / weight_left).clamp(0.0, 1.0);
            Binomial::new(remaining, p).map(|b| b.sample(rng)).unwrap_or(0)
        };
        remaining -= take;
        weight_left -= w;
        sizes.push(1 + take as usize);
    }
    sizes
}

fn labels(j: usize) -> Vec<String> {
    let width = j.to_string().len().max(3);
    (1..=j).map(|k| format!("p{k:0width$}")).collect()
}

/// Cluster membership of each row (shuffled) and realized cluster effects.
fn layout(rng: &mut ChaCha8Rng, n: usize, j: usize, size_sd: f64, tau2: f64) -> (Vec<u32>, Vec<f64>) {
    let sizes = cluster_sizes(rng, n, j, size_sd);
    let effects: Vec<f64> = (0..j)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            tau2.sqrt() * z
        })
        .collect();
    let mut codes: Vec<u32> = sizes.iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k as u32, s)).collect();
    codes.shuffle(rng);
    (codes, effects)
}

pub fn itsa_schema() -> Vec<ColumnSchema> {
    vec![
        ColumnSchema::outcome("y", Kind::Binary),
        ColumnSchema::covariate("time", Kind::Count),
        ColumnSchema::covariate("case", Kind::Binary),
        ColumnSchema::covariate("intervention1", Kind::Binary),
        ColumnSchema::covariate("intervention2", Kind::Binary),
        ColumnSchema::cluster("practice"),
    ]
}

pub fn itsa_formula() -> String {
    format!("y ~ {}", ITSA_TERMS.join(" + "))
}

pub fn itsa_spec() -> GlmmSpec {
    GlmmSpec::new(GlmSpec::parse(&itsa_formula(), Family::Bernoulli).expect("static formula"), "practice")
}

/// Table 2 levels for the ITSA grid (152 designs, no exclusions).
pub fn itsa_design_levels() -> Vec<(String, Vec<f64>)> {
    vec![
        ("time".into(), (1..=19).map(f64::from).collect()),
        ("case".into(), vec![0.0, 1.0]),
        ("intervention1".into(), vec![0.0, 1.0]),
        ("intervention2".into(), vec![0.0, 1.0]),
    ]
}

/// Logistic interrupted time series with two interventions and a random
/// practice intercept.
pub fn simulate_itsa_logistic(params: &ItsaParams, seed: u64) -> Result<Simulated> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (codes, effects) = layout(&mut rng, params.n_rows, params.n_clusters, params.size_sd, params.tau2);
    let n = params.n_rows;
    let b = &params.beta;
    let mut y = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut case = Vec::with_capacity(n);
    let mut int1 = Vec::with_capacity(n);
    let mut int2 = Vec::with_capacity(n);
    for &c in &codes {
        let t: u32 = rng.random_range(1..=19);
        let s = f64::from(u8::from(rng.random::<f64>() < params.case_probability));
        let i1 = f64::from(u8::from(t >= INTERVENTION1_START));
        let i2 = f64::from(u8::from(t >= INTERVENTION2_START));
        let t = f64::from(t);
        let x = [t, s, t * s, i1, t * i1, s * i1, t * s * i1, i2, t * i2, s * i2, t * s * i2];
        let eta = b[0] + x.iter().zip(&b[1..]).map(|(a, c)| a * c).sum::<f64>() + effects[c as usize];
        let p = 1.0 / (1.0 + (-eta).exp());
        y.push(f64::from(u8::from(rng.random::<f64>() < p)));
        time.push(t);
        case.push(s);
        int1.push(i1);
        int2.push(i2);
    }
    let cluster_labels = labels(params.n_clusters);
    let data = Dataset::from_columns(
        itsa_schema(),
        vec![
            Column::Numeric(y),
            Column::Numeric(time),
            Column::Numeric(case),
            Column::Numeric(int1),
            Column::Numeric(int2),
            Column::Categorical { levels: cluster_labels.clone(), codes },
        ],
    )?;
    let spec = itsa_spec();
    let truth = Truth {
        generator: "itsa_logistic".into(),
        seed,
        family: Family::Bernoulli,
        formula: spec.glm.formula(),
        offset: None,
        coef_names: std::iter::once(crate::model::INTERCEPT.to_string())
            .chain(ITSA_TERMS.iter().map(|s| s.to_string()))
            .collect(),
        beta: params.beta.clone(),
        tau2: params.tau2,
        cluster_labels,
        cluster_effects: effects,
    };
    Ok(Simulated { data, truth })
}

pub fn consult_schema() -> Vec<ColumnSchema> {
    vec![
        ColumnSchema::outcome("consultations", Kind::Count),
        ColumnSchema::covariate("age", Kind::Continuous),
        ColumnSchema::covariate("gender", Kind::Binary),
        ColumnSchema::covariate("moderate", Kind::Binary),
        ColumnSchema::covariate("high", Kind::Binary),
        ColumnSchema::covariate("veryhigh", Kind::Binary),
        ColumnSchema::exposure("years"),
        ColumnSchema::cluster("practice"),
    ]
}

pub fn consult_formula() -> &'static str {
    "consultations ~ age + gender + moderate + high + veryhigh"
}

pub fn consult_spec(theta: f64) -> GlmmSpec {
    let glm = GlmSpec::parse(consult_formula(), Family::NegativeBinomial { theta }).expect("static formula");
    GlmmSpec::new(glm.with_offset("years"), "practice")
}

/// Table 2 levels for the consultation grid and its one-hot morbidity group
/// (72 designs).
pub fn consult_design_levels() -> (Vec<(String, Vec<f64>)>, Vec<Vec<String>>) {
    let ages: Vec<f64> = (0..9).map(|k| -1.5 + 0.5 * k as f64).collect();
    let levels = vec![
        ("age".to_string(), ages),
        ("gender".into(), vec![0.0, 1.0]),
        ("moderate".into(), vec![0.0, 1.0]),
        ("high".into(), vec![0.0, 1.0]),
        ("veryhigh".into(), vec![0.0, 1.0]),
    ];
    (levels, vec![vec!["moderate".into(), "high".into(), "veryhigh".into()]])
}

/// Negative-binomial consultation counts over an exposure period, with age
/// standardized before it enters the linear predictor.
pub fn simulate_negbin_consults(params: &ConsultParams, seed: u64) -> Result<Simulated> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (codes, effects) = layout(&mut rng, params.n_rows, params.n_clusters, params.size_sd, params.tau2);
    let n = params.n_rows;
    let mut age = Vec::with_capacity(n);
    let mut gender = Vec::with_capacity(n);
    let mut morb = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut years = Vec::with_capacity(n);
    let cum: Vec<f64> = params
        .morbidity_probabilities
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let (lo, hi) = params.exposure_range;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        age.push((params.age_mean + params.age_sd * z).clamp(18.0, 100.0).round());
        gender.push(f64::from(u8::from(rng.random::<f64>() < params.male_probability)));
        let u: f64 = rng.random();
        let cat = cum.iter().position(|&c| u < c).unwrap_or(3);
        for (k, col) in morb.iter_mut().enumerate() {
            col.push(f64::from(u8::from(cat == k + 1)));
        }
        years.push(if hi > lo { rng.random_range(lo..hi) } else { lo });
    }
    let cluster_labels = labels(params.n_clusters);
    let [moderate, high, veryhigh] = morb;
    let raw = Dataset::from_columns(
        consult_schema(),
        vec![
            Column::Numeric(vec![0.0; n]),
            Column::Numeric(age),
            Column::Numeric(gender),
            Column::Numeric(moderate),
            Column::Numeric(high),
            Column::Numeric(veryhigh),
            Column::Numeric(years),
            Column::Categorical { levels: cluster_labels.clone(), codes: codes.clone() },
        ],
    )?;
    let data = standardize(&raw, "age")?;
    let b = &params.beta;
    let cols: Vec<&[f64]> = ["age", "gender", "moderate", "high", "veryhigh"]
        .iter()
        .map(|c| data.numeric(c))
        .collect::<Result<_>>()?;
    let years = data.numeric("years")?;
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let eta = b[0] + (0..5).map(|k| b[k + 1] * cols[k][i]).sum::<f64>() + effects[codes[i] as usize];
        let mu = years[i] * eta.exp();
        let lambda = Gamma::new(params.theta, mu / params.theta)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(&mut rng);
        let count = if lambda > 0.0 {
            Poisson::new(lambda).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng)
        } else {
            0.0
        };
        y.push(count);
    }
    let data = data.with_column("consultations", Kind::Count, Column::Numeric(y))?;
    let spec = consult_spec(params.theta);
    let truth = Truth {
        generator: "negbin_consults".into(),
        seed,
        family: Family::NegativeBinomial { theta: params.theta },
        formula: spec.glm.formula(),
        offset: Some("years".into()),
        coef_names: ["(Intercept)", "age", "gender", "moderate", "high", "veryhigh"].map(String::from).to_vec(),
        beta: params.beta.clone(),
        tau2: params.tau2,
        cluster_labels,
        cluster_effects: effects,
    };
    Ok(Simulated { data, truth })
}
