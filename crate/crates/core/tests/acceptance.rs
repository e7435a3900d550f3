//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! cargo test --release --test acceptance

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use tallglmm::data::{collapse, enumerate_designs, partition_by_practice, Column, ColumnSchema, Dataset, DesignGrid, Kind};
use tallglmm::family::Family;
use tallglmm::glm::{fisher_information, glm_fit, loglik, score};
use tallglmm::glmm::{glmm_fit, marginal_loglik, GlmmFit, GlmmFitOptions};
use tallglmm::meta::{
    fit_per_practice, mv_meta, uni_meta, EstimateStatus, MvMethod, PracticeEstimate, PracticeFitOptions,
    SigmaStructure, UniMethod,
};
use tallglmm::model::{GlmSpec, GlmmSpec, Term};
use tallglmm::simulate::{
    consult_design_levels, itsa_design_levels, itsa_spec, simulate_itsa_logistic, ItsaParams,
};
use tallglmm::subsample::{grid_utilities, run, SubsampleMode, SubsampleOptions};

type Outcome = (bool, String);

fn main() {
    let checks: [(u32, fn() -> Outcome); 12] = [
        (1, weighted_exactness),
        (2, collapse_likelihood_identity),
        (3, collapse_speedup),
        (4, design_grid_counts),
        (5, meta_agreement),
        (6, fixed_effect_pooling),
        (7, dersimonian_laird_hand_case),
        (8, subsampling_utility_oracle),
        (9, design_diversity),
        (10, glm_oracles),
        (11, derivative_checks),
        (12, quadrature_convergence),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (k, check) in checks {
        if only.is_some_and(|o| o != k) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check();
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2}: {verdict}  {detail}  [{:.1}s]", start.elapsed().as_secs_f64());
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn suite_one() -> Dataset {
    let p = ItsaParams { n_rows: 50_000, n_clusters: 50, tau2: 0.05, ..Default::default() };
    simulate_itsa_logistic(&p, 1).unwrap().data
}

fn fit(spec: &GlmmSpec, data: &impl tallglmm::model::ModelData) -> GlmmFit {
    glmm_fit(spec, data, &GlmmFitOptions::default()).unwrap()
}

fn weighted_exactness() -> Outcome {
    let data = suite_one();
    let spec = itsa_spec();
    let full = fit(&spec, &data);
    let collapsed = collapse(&data, &[]).unwrap();
    let weighted = fit(&spec, &collapsed);
    let db = max_abs_diff(&full.beta, &weighted.beta);
    let dt = (full.tau2 - weighted.tau2).abs();
    let dl = (full.loglik - weighted.loglik).abs();
    let pass = full.converged && weighted.converged && db <= 1e-6 && dt <= 1e-6 && dl <= 1e-8;
    (
        pass,
        format!(
            "N={} -> M={}: max |dbeta| {db:.2e}, |dtau2| {dt:.2e}, |dloglik| {dl:.2e}",
            data.n_rows(),
            collapsed.n_rows()
        ),
    )
}

fn collapse_likelihood_identity() -> Outcome {
    let data = suite_one();
    let spec = itsa_spec();
    let collapsed = collapse(&data, &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = ItsaParams::default().beta;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let beta: Vec<f64> = base.iter().map(|b| b + rng.random_range(-0.3..0.3)).collect();
        let tau2 = rng.random_range(0.0..0.5);
        let full = marginal_loglik(&spec, &beta, tau2, &data, 15).unwrap();
        let weighted = marginal_loglik(&spec, &beta, tau2, &collapsed, 15).unwrap();
        worst = worst.max((full - weighted).abs());
    }
    (worst <= 1e-10, format!("10 random (beta, tau2): max |full - weighted| = {worst:.2e}"))
}

fn collapse_speedup() -> Outcome {
    let p = ItsaParams { n_rows: 200_000, n_clusters: 20, ..Default::default() };
    let data = simulate_itsa_logistic(&p, 3).unwrap().data;
    let spec = itsa_spec();
    let (mut full_secs, mut weighted_secs, mut m) = (0.0, 0.0, 0);
    for _ in 0..3 {
        let t = Instant::now();
        fit(&spec, &data);
        full_secs += t.elapsed().as_secs_f64() / 3.0;
        let t = Instant::now();
        let collapsed = collapse(&data, &[]).unwrap();
        fit(&spec, &collapsed);
        weighted_secs += t.elapsed().as_secs_f64() / 3.0;
        m = collapsed.n_rows();
    }
    let factor = data.n_rows() as f64 / m as f64;
    let pass = factor >= 50.0 && weighted_secs <= full_secs / 5.0;
    (
        pass,
        format!(
            "N/M = {factor:.0}; mean full {full_secs:.2}s, collapse + weighted fit {weighted_secs:.3}s ({:.0}x)",
            full_secs / weighted_secs
        ),
    )
}

fn design_grid_counts() -> Outcome {
    let itsa = enumerate_designs(&itsa_design_levels(), &[]).unwrap().len();
    let (levels, groups) = consult_design_levels();
    let consults = enumerate_designs(&levels, &groups).unwrap().len();
    (itsa == 152 && consults == 72, format!("{itsa} and {consults} designs"))
}

/// Random-intercept logistic data: `y ~ x1 + x2 + x3` with a binary, a
/// normal and a second binary covariate, equal cluster sizes.
fn logistic_clusters(rng: &mut ChaCha8Rng, n: usize, j: usize, tau2: f64, beta: &[f64]) -> Dataset {
    let per = n / j;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut y, mut x1, mut x2, mut x3, mut g) = (vec![], vec![], vec![], vec![], vec![]);
    for c in 0..j {
        let b = tau2.sqrt() * normal.sample(rng);
        for _ in 0..per {
            let a = f64::from(u8::from(rng.random::<f64>() < 0.5));
            let z: f64 = normal.sample(rng);
            let d = f64::from(u8::from(rng.random::<f64>() < 0.3));
            let eta = beta[0] + beta[1] * a + beta[2] * z + beta[3] * d + b;
            y.push(f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))));
            x1.push(a);
            x2.push(z);
            x3.push(d);
            g.push(c as f64);
        }
    }
    Dataset::from_columns(
        vec![
            ColumnSchema::outcome("y", Kind::Binary),
            ColumnSchema::covariate("x1", Kind::Binary),
            ColumnSchema::covariate("x2", Kind::Continuous),
            ColumnSchema::covariate("x3", Kind::Binary),
            ColumnSchema::cluster("g"),
        ],
        vec![Column::Numeric(y), Column::Numeric(x1), Column::Numeric(x2), Column::Numeric(x3), Column::Numeric(g)],
    )
    .unwrap()
}

fn meta_agreement() -> Outcome {
    let spec = GlmmSpec::new(GlmSpec::parse("y ~ x1 + x2 + x3", Family::Bernoulli).unwrap(), "g");
    let beta = [-1.0, 0.5, -0.3, 0.8];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let data = logistic_clusters(&mut rng, 20_000, 100, 0.05, &beta);
        let full = fit(&spec, &data);
        let parts = partition_by_practice(&data);
        let est = fit_per_practice(&parts, &spec.glm, &PracticeFitOptions::default()).unwrap();
        let mv = mv_meta(&est, SigmaStructure::InterceptOnly, MvMethod::Reml).unwrap();
        let z = (1..beta.len()).map(|k| (mv.beta[k] - full.beta[k]).abs() / full.se[k]).fold(0.0, f64::max);
        worst = worst.max(z);
        agree += usize::from(z <= 3.0);
    }
    (agree >= 95, format!("{agree}/100 replicates within 3 full-fit SEs (largest gap {worst:.2} SE)"))
}

fn fixed_effect_pooling() -> Outcome {
    let spec = GlmSpec::parse("y ~ x1 + x2 + x3", Family::Bernoulli).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data = logistic_clusters(&mut rng, 8_000, 20, 0.1, &[-0.5, 0.4, 0.2, -0.6]);
    let est = fit_per_practice(&partition_by_practice(&data), &spec, &PracticeFitOptions::default()).unwrap();
    let pooled = mv_meta(&est, SigmaStructure::Zero, MvMethod::Reml).unwrap();

    let p = spec.terms.len() + 1;
    let mut precision = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for e in est.iter().filter(|e| e.is_included()) {
        let s_inv = DMatrix::from_row_slice(p, p, &e.cov).try_inverse().unwrap();
        rhs += &s_inv * DVector::from_column_slice(&e.beta);
        precision += s_inv;
    }
    let cov = precision.try_inverse().unwrap();
    let gls = &cov * rhs;
    let db = max_abs_diff(&pooled.beta, gls.as_slice());
    let dv = max_abs_diff(&pooled.vcov, cov.transpose().as_slice());
    (db <= 1e-10 && dv <= 1e-10, format!("closed-form GLS: max |dbeta| {db:.2e}, max |dvcov| {dv:.2e}"))
}

fn dersimonian_laird_hand_case() -> Outcome {
    let one = |cluster: &str, b: f64| PracticeEstimate {
        cluster: cluster.into(),
        coef_names: vec!["(Intercept)".into()],
        beta: vec![b],
        cov: vec![1.0],
        n: 10,
        theta: None,
        status: EstimateStatus::Included,
    };
    let r = uni_meta(&[one("a", 0.0), one("b", 2.0)], 0, UniMethod::Mom, true).unwrap();
    ((r.tau2 - 1.0).abs() < 1e-15 && (r.beta - 1.0).abs() < 1e-15, format!("tau2 = {}, pooled = {}", r.tau2, r.beta))
}

/// Binary outcome on a full factorial of `levels`, `reps` rows per design, four clusters.
fn factorial_data(rng: &mut ChaCha8Rng, grid: &DesignGrid, reps: usize, beta: &[f64]) -> Dataset {
    let k = grid.covariates.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); k];
    let (mut y, mut g) = (Vec::new(), Vec::new());
    for d in &grid.designs {
        for r in 0..reps {
            let cluster = (r % 4) as f64;
            let eta = beta[0] + d.values.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>() + 0.2 * (cluster - 1.5);
            y.push(f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))));
            for (c, v) in cols.iter_mut().zip(&d.values) {
                c.push(*v);
            }
            g.push(cluster);
        }
    }
    let mut schema = vec![ColumnSchema::outcome("y", Kind::Binary)];
    let mut columns = vec![Column::Numeric(y)];
    for (name, c) in grid.covariates.iter().zip(cols) {
        schema.push(ColumnSchema::covariate(name.clone(), Kind::Count));
        columns.push(Column::Numeric(c));
    }
    schema.push(ColumnSchema::cluster("g"));
    columns.push(Column::Numeric(g));
    Dataset::from_columns(schema, columns).unwrap()
}

/// `sum_i mu_i (1 - mu_i) x_i x_i'` over the given rows, intercept first.
fn brute_information(data: &Dataset, covariates: &[String], rows: &[usize], beta: &[f64]) -> DMatrix<f64> {
    let p = covariates.len() + 1;
    let cols: Vec<&[f64]> = covariates.iter().map(|c| data.numeric(c).unwrap()).collect();
    let mut info = DMatrix::zeros(p, p);
    for &i in rows {
        let x = DVector::from_iterator(p, std::iter::once(1.0).chain(cols.iter().map(|c| c[i])));
        let mu = 1.0 / (1.0 + (-x.dot(&DVector::from_column_slice(beta))).exp());
        info += mu * (1.0 - mu) * &x * x.transpose();
    }
    info
}

fn subsampling_utility_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let names = |n: usize| -> Vec<String> { (0..n).map(|k| format!("x{k}")).collect() };

    // utilities of a 2-covariate logistic model on the 4-design grid against brute force
    let grid = enumerate_designs(&[("x0".into(), vec![0.0, 1.0]), ("x1".into(), vec![0.0, 1.0])], &[]).unwrap();
    let spec = GlmSpec::parse("y ~ x0 + x1", Family::Bernoulli).unwrap();
    let data = factorial_data(&mut rng, &grid, 25, &[0.0, 0.5, -0.5]);
    let mut worst_rel: f64 = 0.0;
    let mut rankings_agree = true;
    for _ in 0..20 {
        let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let rows: Vec<usize> = (0..data.n_rows()).filter(|_| rng.random::<f64>() < 0.3).collect();
        let current = brute_information(&data, &names(2), &rows, &beta);
        let utils = grid_utilities(&spec, &beta, &grid, &current).unwrap();
        let brute: Vec<f64> = grid
            .designs
            .iter()
            .map(|d| {
                let x = DVector::from_iterator(3, std::iter::once(1.0).chain(d.values.iter().copied()));
                let mu = 1.0 / (1.0 + (-x.dot(&DVector::from_column_slice(&beta))).exp());
                (&current + mu * (1.0 - mu) * &x * x.transpose()).determinant()
            })
            .collect();
        for (u, b) in utils.iter().zip(&brute) {
            worst_rel = worst_rel.max((u - b).abs() / b.abs());
        }
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
            idx
        };
        rankings_agree &= order(&utils) == order(&brute);
    }

    // run() termination and partition on every grid shape up to 8 designs
    let mut shapes: Vec<Vec<usize>> = (2..=8).map(|k| vec![k]).collect();
    shapes.extend([vec![2, 2], vec![2, 3], vec![2, 4], vec![2, 2, 2]]);
    let mut runs = 0;
    let mut problems = Vec::new();
    for shape in &shapes {
        let levels: Vec<(String, Vec<f64>)> =
            shape.iter().enumerate().map(|(c, &k)| (format!("x{c}"), (0..k).map(|v| v as f64).collect())).collect();
        let grid = enumerate_designs(&levels, &[]).unwrap();
        let beta: Vec<f64> = std::iter::once(-0.3).chain(shape.iter().map(|&k| 0.6 / k as f64)).collect();
        let data = factorial_data(&mut rng, &grid, 40, &beta);
        let terms = names(shape.len()).into_iter().map(Term::main).collect();
        let spec = GlmmSpec::new(GlmSpec::new(Family::Bernoulli, "y", terms), "g");
        let n = data.n_rows();
        let n0 = (n * 3) / 10;
        for target in [n0 + 1, n / 2, (n * 4) / 5, n] {
            for mode in [SubsampleMode::FullDesign, SubsampleMode::Fraction(0.5)] {
                runs += 1;
                let opts = SubsampleOptions { n0, target_n: target, mode, seed: runs, fit: GlmmFitOptions::default() };
                let out = match run(&data, &spec, &grid, &opts) {
                    Ok(o) => o,
                    Err(e) => {
                        problems.push(format!("{shape:?} target {target}: {e}"));
                        continue;
                    }
                };
                let st = &out.state;
                let mut all: Vec<usize> = st.subsample_rows().to_vec();
                all.extend(st.pool_rows());
                all.sort_unstable();
                if all != (0..n).collect::<Vec<_>>() {
                    problems.push(format!("{shape:?} target {target}: not a partition"));
                }
                let reached = st.subsample_size() >= target;
                if !(reached || st.available().is_empty()) {
                    problems.push(format!("{shape:?} target {target}: stopped early"));
                }
                let before_last = st.history.last().map_or(n0, |h| h.cumulative_size - h.rows_added);
                if !st.history.is_empty() && before_last >= target {
                    problems.push(format!("{shape:?} target {target}: overran the target"));
                }
            }
        }
    }
    let pass = worst_rel <= 1e-10 && rankings_agree && problems.is_empty();
    let mut detail = format!(
        "utility vs brute-force det max rel err {worst_rel:.2e}, rankings agree: {rankings_agree}; {runs} runs on {} grids",
        shapes.len()
    );
    if let Some(p) = problems.first() {
        detail.push_str(&format!(", {} problems, first: {p}", problems.len()));
    }
    (pass, detail)
}

fn design_diversity() -> Outcome {
    let spec = itsa_spec();
    let grid = enumerate_designs(&itsa_design_levels(), &[]).unwrap();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let p = ItsaParams { n_rows: 100_000, n_clusters: 50, ..Default::default() };
        let data = simulate_itsa_logistic(&p, 100 + seed).unwrap().data;
        let visited = |mode| {
            let opts = SubsampleOptions { n0: 5_000, target_n: 10_000, mode, seed, fit: GlmmFitOptions::default() };
            let out = run(&data, &spec, &grid, &opts).unwrap();
            out.state.history.iter().map(|h| h.realized_index).collect::<BTreeSet<_>>().len()
        };
        let (full, frac) = (visited(SubsampleMode::FullDesign), visited(SubsampleMode::modified()));
        wins += usize::from(frac > full);
        pairs.push(format!("{frac}/{full}"));
    }
    (wins == 10, format!("fraction/full distinct designs per seed: {}", pairs.join(" ")))
}

fn counts_data(y: Vec<f64>, x: Vec<f64>) -> Dataset {
    let g = vec![0.0; y.len()];
    Dataset::from_columns(
        vec![ColumnSchema::outcome("y", Kind::Count), ColumnSchema::covariate("x", Kind::Continuous), ColumnSchema::cluster("g")],
        vec![Column::Numeric(y), Column::Numeric(x), Column::Numeric(g)],
    )
    .unwrap()
}

fn glm_oracles() -> Outcome {
    let intercept_only = |family: Family, y: Vec<f64>| {
        let n = y.len();
        let data = counts_data(y, vec![0.0; n]);
        glm_fit(&GlmSpec::new(family, "y", vec![]), &data, false).unwrap().beta[0]
    };
    let logit = intercept_only(Family::Bernoulli, vec![1.0, 1.0, 1.0, 0.0]);
    let pois = intercept_only(Family::Poisson, vec![1.0, 2.0, 3.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| Poisson::new((0.5 + 0.7 * v).exp()).unwrap().sample(&mut rng)).collect();
    let data = counts_data(y, x);
    let poisson = glm_fit(&GlmSpec::parse("y ~ x", Family::Poisson).unwrap(), &data, false).unwrap();
    let nb = glm_fit(&GlmSpec::parse("y ~ x", Family::NegativeBinomial { theta: 1e6 }).unwrap(), &data, false).unwrap();
    let dnb = max_abs_diff(&poisson.beta, &nb.beta);

    let (e1, e2) = ((logit - 3f64.ln()).abs(), (pois - 2f64.ln()).abs());
    (
        e1 <= 1e-8 && e2 <= 1e-8 && dnb <= 1e-4,
        format!("|logit - ln 3| {e1:.1e}, |poisson - ln 2| {e2:.1e}, |negbin(1e6) - poisson| {dnb:.1e}"),
    )
}

fn family_data(rng: &mut ChaCha8Rng, family: Family) -> Dataset {
    let n = 200;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x1: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = 0.2 + 0.5 * x1[i] - 0.4 * x2[i];
            match family {
                Family::Bernoulli => f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))),
                Family::Gaussian { .. } => eta + normal.sample(rng),
                _ => Poisson::new(eta.exp() * rng.random_range(0.5..1.5)).unwrap().sample(rng),
            }
        })
        .collect();
    let kind = match family {
        Family::Bernoulli => Kind::Binary,
        Family::Gaussian { .. } => Kind::Continuous,
        _ => Kind::Count,
    };
    Dataset::from_columns(
        vec![
            ColumnSchema::outcome("y", kind),
            ColumnSchema::covariate("x1", Kind::Continuous),
            ColumnSchema::covariate("x2", Kind::Binary),
            ColumnSchema::cluster("g"),
        ],
        vec![Column::Numeric(y), Column::Numeric(x1), Column::Numeric(x2), Column::Numeric(vec![0.0; n])],
    )
    .unwrap()
}

fn derivative_checks() -> Outcome {
    let families = [
        (Family::Bernoulli, true),
        (Family::Poisson, true),
        (Family::NegativeBinomial { theta: 2.5 }, false),
        (Family::Gaussian { sigma2: 1.7 }, true),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_score, mut worst_info): (f64, f64) = (0.0, 0.0);
    for (family, canonical) in families {
        let data = family_data(&mut rng, family);
        let spec = GlmSpec::parse("y ~ x1 + x2", family).unwrap();
        for _ in 0..20 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let analytic = score(&spec, &beta, &data).unwrap();
            let h = 1e-5;
            let shifted = |k: usize, d: f64| {
                let mut b = beta.clone();
                b[k] += d;
                b
            };
            let numeric: Vec<f64> = (0..3)
                .map(|k| {
                    (loglik(&spec, &shifted(k, h), &data).unwrap() - loglik(&spec, &shifted(k, -h), &data).unwrap())
                        / (2.0 * h)
                })
                .collect();
            let scale = analytic.iter().map(|v| v.abs()).fold(1.0, f64::max);
            worst_score = worst_score.max(max_abs_diff(&analytic, &numeric) / scale);

            if canonical {
                let info = fisher_information(&spec, &beta, &data).unwrap();
                let mut hess = DMatrix::zeros(3, 3);
                for k in 0..3 {
                    let up = score(&spec, &shifted(k, h), &data).unwrap();
                    let down = score(&spec, &shifted(k, -h), &data).unwrap();
                    for r in 0..3 {
                        hess[(r, k)] = -(up[r] - down[r]) / (2.0 * h);
                    }
                }
                let scale = info.abs().max();
                worst_info = worst_info.max((&info - hess).abs().max() / scale);
            }
        }
    }
    (
        worst_score <= 1e-5 && worst_info <= 1e-5,
        format!("score vs finite differences {worst_score:.1e}, expected information vs numerical Hessian {worst_info:.1e} (relative)"),
    )
}

fn quadrature_convergence() -> Outcome {
    let data = suite_one();
    let spec = itsa_spec();
    let f = fit(&spec, &data);
    let l7 = marginal_loglik(&spec, &f.beta, f.tau2, &data, 7).unwrap();
    let l15 = marginal_loglik(&spec, &f.beta, f.tau2, &data, 15).unwrap();
    let d = (l7 - l15).abs();
    (d <= 1e-6, format!("|loglik(7) - loglik(15)| = {d:.2e} at the fitted parameters"))
}
