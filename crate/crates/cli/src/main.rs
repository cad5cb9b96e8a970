//! `noisy-tr`: run the noise-aware trust-region solver on the built-in
//! problems, sweep parameter grids and re-verify stored results.
//!
//! Every subcommand exits with status 0 when all checks pass, 1 when some
//! guarantee, bound or decrease check fails, and 2 on usage or I/O errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use ini::Ini;

use noisy_tr::harness::results::write_rows;
use noisy_tr::harness::{read_results, reverify_row, run_spec, run_sweep, ResultRow, RunSpec, SweepSpec};
use noisy_tr::{NoiseKind, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "noisy-tr", version, about = "Noise-aware trust-region experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and write a single result row.
    Run(RunArgs),
    /// Run every point of a sweep specification.
    Sweep {
        /// INI-style sweep specification.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock time per run (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Re-check the guarantees and bounds of a results file.
    Verify {
        #[arg(long)]
        results: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Accuracy levels, one per order; a single value applies to all orders.
    #[arg(long, value_delimiter = ',', default_value = "1e-3")]
    eps: Vec<f64>,
    /// Function-value noise floor of the bounded model.
    #[arg(long, default_value_t = 0.0)]
    noise_f: f64,
    /// Derivative noise floor of the bounded model.
    #[arg(long, default_value_t = 0.0)]
    noise_d: f64,
    #[arg(long, default_value = "exact")]
    noise_model: NoiseKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    global_step: bool,
    /// Significand bits kept by the quantized model.
    #[arg(long)]
    bits: Option<u32>,
    /// Magnitude bound declared to the quantized model.
    #[arg(long)]
    magnitude: Option<f64>,
    /// Flat key-value file of solver constants.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Solver constant override `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

fn config_file_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let ini = Ini::load_from_file(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (_, props) in ini.iter() {
        for (k, v) in props.iter() {
            pairs.push((k.to_string(), v.to_string()));
        }
    }
    Ok(pairs)
}

fn run_spec_from_args(args: &RunArgs) -> Result<RunSpec> {
    let eps = match args.eps.as_slice() {
        [e] => vec![*e; args.q],
        list if list.len() == args.q => list.to_vec(),
        list => bail!("--eps has {} values but --q is {}", list.len(), args.q),
    };
    let mut spec = RunSpec::new(&args.problem, args.q, eps);
    spec.noise_model = args.noise_model;
    spec.theta_f = args.noise_f;
    spec.theta_d = args.noise_d;
    spec.seed = args.seed;
    spec.global_step = args.global_step;
    if let Some(bits) = args.bits {
        spec.bits = bits;
    }
    if let Some(m) = args.magnitude {
        spec.magnitude = m;
    }
    if let Some(path) = &args.config {
        spec.overrides.extend(config_file_pairs(path)?);
    }
    for s in &args.sets {
        let (k, v) = s
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
        spec.overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (k, _) in &spec.overrides {
        if matches!(k.to_ascii_lowercase().as_str(), "q" | "eps" | "enforce_global_step") {
            bail!("{k} is set by its own command-line flag");
        }
    }
    // Surface configuration errors before running.
    let _: SolverConfig = spec.config()?;
    Ok(spec)
}

fn summary(row: &ResultRow) -> String {
    format!(
        "{} q={} eps={:e} theta_f={:e} theta_d={:e} seed={}: {} order={} iterations={} f_evals={} deriv_evals={} {} {}",
        row.problem,
        row.q,
        row.eps_min,
        row.theta_f,
        row.theta_d,
        row.seed,
        row.status,
        row.order,
        row.iterations,
        row.f_evals,
        row.deriv_evals,
        row.guarantee_clause,
        if row.passed() { "ok" } else { "FAILED" }
    )
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let spec = run_spec_from_args(&args)?;
            let row = run_spec(&spec, args.timing)?.row;
            eprintln!("{}", summary(&row));
            match &args.out {
                Some(path) => noisy_tr::harness::write_results(path, std::slice::from_ref(&row))?,
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    write_rows(&mut lock, std::slice::from_ref(&row))?;
                    lock.flush()?;
                }
            }
            Ok(row.passed())
        }
        Command::Sweep { spec, out, timing } => {
            let spec = SweepSpec::from_file(&spec).with_context(|| format!("loading {}", spec.display()))?;
            let rows = run_sweep(&spec, &out, timing)?;
            let failed: Vec<&ResultRow> = rows.iter().filter(|r| !r.passed()).collect();
            for r in &failed {
                eprintln!("{}", summary(r));
            }
            eprintln!(
                "{} runs, {} failed checks, written to {}",
                rows.len(),
                failed.len(),
                out.display()
            );
            Ok(failed.is_empty())
        }
        Command::Verify { results } => {
            let rows = read_results(&results).with_context(|| format!("reading {}", results.display()))?;
            let mut failed = 0;
            for (i, row) in rows.iter().enumerate() {
                let failures = reverify_row(row)?;
                if !failures.is_empty() {
                    failed += 1;
                    eprintln!("row {}: {}: {}", i + 1, row.problem, failures.join("; "));
                }
            }
            eprintln!("{} rows verified, {} failed", rows.len(), failed);
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
