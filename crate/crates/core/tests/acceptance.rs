//! Acceptance run at the default configuration: one PASS/FAIL line per
//! criterion, nonzero exit if any fails.
//!
//! `REGCALC_ACCEPTANCE_PATHS` overrides the ensemble size for quick runs.

use std::process::ExitCode;
use std::time::Instant;

use regcalc::config::ExperimentConfig;
use regcalc::ensemble::Execution;
use regcalc::report::{CriterionResult, SuiteOutput};
use regcalc::suites::{run_suite, SUITES};

fn csv_bytes(out: &SuiteOutput) -> Vec<(String, String)> {
    out.tables
        .iter()
        .map(|t| (t.name.clone(), t.to_csv()))
        .collect()
}

/// Every suite twice under one configuration plus once sequentially; all CSV bytes must agree.
fn reproducibility(base: &ExperimentConfig) -> CriterionResult {
    let cfg = ExperimentConfig {
        n_paths: 200,
        ..base.clone()
    };
    let sequential = ExperimentConfig {
        execution: Execution::Sequential,
        ..cfg.clone()
    };
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for name in SUITES {
        let run = |c: &ExperimentConfig| {
            run_suite(name, c)
                .expect("known suite")
                .map(|o| csv_bytes(&o))
        };
        match (run(&cfg), run(&cfg), run(&sequential)) {
            (Ok(a), Ok(b), Ok(c)) => {
                compared += a.len();
                if a != b {
                    mismatches.push(format!("{name}: rerun"));
                }
                if a != c {
                    mismatches.push(format!("{name}: sequential"));
                }
            }
            _ => mismatches.push(format!("{name}: error")),
        }
    }
    let detail = if mismatches.is_empty() {
        format!(
            "{compared} tables byte-identical across reruns and sequential execution (200 paths)"
        )
    } else {
        mismatches.join("; ")
    };
    CriterionResult::new("11", "reproducibility", mismatches.is_empty(), detail)
}

fn main() -> ExitCode {
    let mut cfg = ExperimentConfig::default();
    if let Some(n) = std::env::var("REGCALC_ACCEPTANCE_PATHS")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        cfg.n_paths = n;
    }
    println!(
        "acceptance: N = {}, dt = {:e}, {} paths, seed {}",
        cfg.n_modes,
        (cfg.t_end - cfg.t_start) / cfg.n_steps as f64,
        cfg.n_paths,
        cfg.master_seed
    );
    let mut all = true;
    for name in SUITES {
        let start = Instant::now();
        match run_suite(name, &cfg).expect("known suite") {
            Ok(out) => {
                for c in out.criteria.iter() {
                    all &= c.passed;
                    println!("{}", c.line());
                    if !c.failing_seeds.is_empty() {
                        println!("    failing seeds: {}", c.failing_seeds.join(" "));
                    }
                }
                println!("    ({name}: {:.1}s)", start.elapsed().as_secs_f64());
            }
            Err(e) => {
                all = false;
                println!("suite {name} FAIL | {e}");
            }
        }
    }
    let repro = reproducibility(&cfg);
    all &= repro.passed;
    println!("{}", repro.line());
    if all {
        println!("acceptance: all criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL");
        ExitCode::FAILURE
    }
}
