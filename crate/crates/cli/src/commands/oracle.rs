use prunedoc::oracle::{self, GridChoice, DIVERGENCE_MIN_DIFF, DIVERGENCE_MIN_RATE, EQUIVALENCE_REL_TOL};

use crate::args::OracleArgs;
use crate::failure::{CmdResult, EXIT_FAILURE};
use crate::manifest::RunManifest;

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Metrics: `trials`, `equivalence_failures`, `max_abs_deviation`,
/// `max_rel_deviation`, `divergence_rate_<strategy>`, `pass`.
pub fn run(a: OracleArgs) -> CmdResult {
    if a.trials == 0 {
        eprintln!("warning: --trials 0 checks nothing; the laws pass vacuously");
    }
    let grid = GridChoice::UpTo { rows: a.grid.rows, cols: a.grid.cols };
    let report = oracle::run(grid, a.trials, a.seed)?;

    println!(
        "{} equivalence (preserved vs masked full grid, rel tol {EQUIVALENCE_REL_TOL:e}): {} of {} trials failed; max abs dev {:.3e}, max rel dev {:.3e}",
        verdict(report.equivalence_pass),
        report.equivalence_failures,
        report.trials,
        report.max_abs_deviation,
        report.max_rel_deviation,
    );
    for d in &report.divergence {
        println!(
            "{} divergence ({}): {}/{} trials differ by > {DIVERGENCE_MIN_DIFF:e} (rate {:.3}, need {DIVERGENCE_MIN_RATE}); smallest max abs diff {:.3e}",
            verdict(d.pass),
            d.strategy,
            d.diverged,
            d.eligible,
            d.rate,
            d.min_max_abs_diff,
        );
    }

    let mut manifest = RunManifest::new("oracle", &a, a.seed);
    manifest.metric("trials", report.trials as f64);
    manifest.metric("equivalence_failures", report.equivalence_failures as f64);
    manifest.metric("max_abs_deviation", report.max_abs_deviation);
    manifest.metric("max_rel_deviation", report.max_rel_deviation);
    for d in &report.divergence {
        manifest.metric(&format!("divergence_rate_{}", d.strategy), d.rate);
    }
    manifest.metric("pass", if report.pass { 1.0 } else { 0.0 });
    match &a.manifest {
        Some(path) => manifest.write(path)?,
        None => print!("{}", manifest.to_json()),
    }
    Ok(if report.pass { 0 } else { EXIT_FAILURE })
}
