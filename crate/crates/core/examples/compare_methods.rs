//! Drives the command-line tool in a scratch directory: simulate a dataset,
//! tabulate its design grid, collapse it, fit one method and compare several.
//!
//! cargo run --release --example compare_methods

use tallglmm::cli::main_with_args;
use tallglmm::simulate::itsa_formula;

fn run(args: &[&str]) {
    println!("$ tallglmm {}", args.join(" "));
    let code = main_with_args(std::iter::once("tallglmm").chain(args.iter().copied()));
    assert_eq!(code, 0, "command failed with exit code {code}");
}

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (data, schema) = (path("itsa.csv"), path("itsa.schema"));
    let formula = itsa_formula();

    run(&["simulate", "itsa", "--n", "30000", "--j", "30", "--seed", "1", "--out", &data]);
    run(&["designs", "--schema", &schema, "--input", &data, "--output", &path("designs.csv")]);
    let designs = std::fs::read_to_string(path("designs.csv"))?;
    let present = designs.lines().skip(1).filter(|l| !l.ends_with(",0")).count();
    println!("{} candidate designs, {present} present", designs.lines().count() - 1);

    run(&["collapse", "--input", &data, "--schema", &schema, "--output", &path("collapsed.csv")]);
    let rows = std::fs::read_to_string(path("collapsed.csv"))?.lines().count() - 1;
    println!("collapsed to {rows} weighted rows");

    run(&[
        "fit", "--input", &data, "--schema", &schema, "--formula", &formula, "--method", "weighted",
        "--output", &path("fit.json"),
    ]);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path("fit.json"))?)?;
    println!("weighted fit: tau2 {}, converged {}", fit["tau2"], fit["converged"]);

    run(&[
        "compare", "--input", &data, "--schema", &schema, "--formula", &formula,
        "--methods", "full,weighted,meta_mv,subsample", "--repeats", "1", "--n0", "2000", "--seed", "4",
        "--output", &path("compare.csv"),
    ]);
    Ok(())
}
