use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regcalc::config::ExperimentConfig;
use regcalc::ensemble::Execution;
use regcalc::report::{RunManifest, SuiteOutput};
use regcalc::suites::{run_suite, SUITES};
use regcalc::Error;

#[derive(Parser)]
#[command(
    name = "regcalc",
    version,
    about = "Regularization-calculus experiments on truncated Hilbert spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tensor-norm and trace-pairing self-checks
    NormsSelftest(RunArgs),
    /// Forward integrals against Itô sums
    Integrals(RunArgs),
    /// Scalar, tensor and χ quadratic variations
    Qv(RunArgs),
    /// Mild heat solution: zero χ̄-QV certificate and the Ondrejat identity
    Mild(RunArgs),
    /// Itô formula residuals and weak-Dirichlet orthogonality
    ItoCheck(RunArgs),
    /// Linear-quadratic control: HJB residual and verification gaps
    Control(RunArgs),
    /// Every suite, each into its own subdirectory of the output directory
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`section.key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `ensemble.master_seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `ensemble.n_paths`
    #[arg(long)]
    paths: Option<usize>,
    /// Run paths one after another
    #[arg(long)]
    sequential: bool,
    /// Only print failures
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::NormsSelftest(a) => ("norms-selftest", a),
            Command::Integrals(a) => ("integrals", a),
            Command::Qv(a) => ("qv", a),
            Command::Mild(a) => ("mild", a),
            Command::ItoCheck(a) => ("ito-check", a),
            Command::Control(a) => ("control", a),
            Command::All(a) => ("all", a),
        }
    }
}

fn load_config(args: &RunArgs) -> regcalc::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config {
                line: 0,
                message: format!("{}: {e}", path.display()),
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(paths) = args.paths {
        cfg.n_paths = paths;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_one(
    name: &str,
    cfg: &ExperimentConfig,
    dir: &Path,
    quiet: bool,
) -> regcalc::Result<SuiteOutput> {
    let output = run_suite(name, cfg).expect("subcommands map to suites")?;
    fs::create_dir_all(dir)?;
    for table in &output.tables {
        table.write_to(dir)?;
    }
    RunManifest::new(name, cfg, output.criteria.clone()).write_to(dir)?;
    for c in &output.criteria {
        if !quiet || !c.passed {
            println!("[{name}] {}", c.line());
        }
    }
    Ok(output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.command.split();
    let cfg = match load_config(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("regcalc: {e}");
            return ExitCode::from(2);
        }
    };
    let names: Vec<&str> = if name == "all" {
        SUITES.to_vec()
    } else {
        vec![name]
    };
    let mut failing = Vec::new();
    let mut seeds = Vec::new();
    for suite in names {
        let dir = if name == "all" {
            cfg.output_dir.join(suite)
        } else {
            cfg.output_dir.clone()
        };
        match run_one(suite, &cfg, &dir, args.quiet) {
            Ok(out) => {
                failing.extend(
                    out.criteria
                        .iter()
                        .filter(|c| !c.passed)
                        .map(|c| c.id.clone()),
                );
                seeds.extend(out.failing_seeds());
            }
            Err(e) => {
                eprintln!("regcalc: {suite}: {e}");
                return ExitCode::from(3);
            }
        }
    }
    if failing.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("regcalc: failing criteria: {}", failing.join(" "));
        if !seeds.is_empty() {
            eprintln!("regcalc: failing seeds: {}", seeds.join(" "));
        }
        ExitCode::from(1)
    }
}
