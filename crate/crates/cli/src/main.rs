//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical-integrity
//! failure, 3 I/O error.

mod artifacts;
mod compare;
mod config;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artifacts::{ArtifactDir, Meta};
use config::{Route, RunConfig};
use runner::RunContext;

#[derive(Parser)]
#[command(name = "sqpulse", version, about = "Quantum system driven by a squeezed-number-state wave packet: collision-model, stochastic/deterministic hierarchy and analytic-trajectory routes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the worker pool (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the stochastic trajectory ensembles (collision or sme route).
    Simulate(Common),
    /// Integrates the deterministic master hierarchy.
    Master(Common),
    /// Analytic route: count distribution + a-priori decomposition.
    Analytic(Common),
    /// Cavity transfer scan.
    Transfer(Common),
    /// Parses and validates a configuration, reporting the first offense.
    ValidateConfig(Common),
    /// Compares two state-series artifacts in trace norm, optionally
    /// together with the count statistics of their run summaries.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Largest acceptable trace-norm distance.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Run summaries to compare mean counts from.
        #[arg(long, num_args = 2)]
        summaries: Option<Vec<PathBuf>>,
        /// Largest acceptable mean-count difference.
        #[arg(long, default_value_t = 0.05)]
        counts_tolerance: f64,
        /// Optional report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_INTEGRITY: u8 = 2;
const EXIT_IO: u8 = 3;

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn dispatch() -> Result<(), u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(common) => run_route(common, &[Route::Collision, Route::Sme]),
        Command::Master(common) => run_route(common, &[Route::Master]),
        Command::Analytic(common) => run_route(common, &[Route::Analytic]),
        Command::Transfer(common) => run_route(common, &[Route::Transfer]),
        Command::ValidateConfig(common) => {
            let config = load_config(&common)?;
            println!("ok: configuration valid (hash {})", config.hash());
            Ok(())
        }
        Command::Compare {
            a,
            b,
            tolerance,
            summaries,
            counts_tolerance,
            report,
        } => run_compare(
            &a,
            &b,
            tolerance,
            summaries.as_deref(),
            counts_tolerance,
            report.as_deref(),
        ),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, u8> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", common.config.display());
        EXIT_IO
    })?;
    let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        eprintln!("validation error: {e}");
        EXIT_VALIDATION
    })?;
    if let Some(seed) = common.seed {
        config.run.seed = Some(seed);
    }
    config.validate().map_err(|e| {
        eprintln!("validation error: {e}");
        EXIT_VALIDATION
    })?;
    Ok(config)
}

fn run_route(common: Common, allowed: &[Route]) -> Result<(), u8> {
    let config = load_config(&common)?;
    if !allowed.contains(&config.run.route) {
        eprintln!(
            "validation error: run.route {:?} does not match this subcommand",
            config.run.route
        );
        return Err(EXIT_VALIDATION);
    }
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| {
                eprintln!("error: thread pool: {e}");
                Err::<(), u8>(EXIT_VALIDATION).unwrap_err()
            })?;
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let prefix = config
        .output
        .prefix
        .clone()
        .unwrap_or_else(|| "run".to_string());
    let artifacts = ArtifactDir::new(&out_dir, &prefix, Meta::new(&config.hash())).map_err(|e| {
        eprintln!("error: cannot create output dir {}: {e}", out_dir.display());
        EXIT_IO
    })?;
    let ctx = RunContext {
        config,
        artifacts,
        verbose: common.verbose,
    };
    let result = match ctx.config.run.route {
        Route::Collision | Route::Sme => runner::run_simulate(&ctx),
        Route::Master => runner::run_master(&ctx),
        Route::Analytic => runner::run_analytic(&ctx),
        Route::Transfer => runner::run_transfer(&ctx),
    };
    result.map_err(|e| report_run_error(&ctx, e))
}

fn report_run_error(ctx: &RunContext, err: runner::RunError) -> u8 {
    let (code, kind) = match &err {
        runner::RunError::Core(
            sqpulse::Error::Integrity(_)
            | sqpulse::Error::Overflow(_)
            | sqpulse::Error::CoefficientDeficit { .. },
        ) => (EXIT_INTEGRITY, "integrity"),
        runner::RunError::Core(_) => (EXIT_VALIDATION, "validation"),
        runner::RunError::Io(_) => (EXIT_IO, "i/o"),
    };
    eprintln!("{kind} error: {err}");
    if code == EXIT_INTEGRITY {
        let _ = ctx.artifacts.write_json(
            "integrity_error.json",
            &serde_json::json!({ "kind": kind, "error": err.to_string() }),
        );
    }
    code
}

fn run_compare(
    a: &Path,
    b: &Path,
    tolerance: f64,
    summaries: Option<&[PathBuf]>,
    counts_tolerance: f64,
    report: Option<&Path>,
) -> Result<(), u8> {
    let result = compare::compare_states(a, b, tolerance).map_err(|e| {
        eprintln!("validation error: {e}");
        EXIT_VALIDATION
    })?;
    println!("{:>12}  {:>14}", "t", "trace-norm");
    for (t, d) in &result.rows {
        println!("{t:>12.6}  {d:>14.6e}");
    }
    println!(
        "worst {:.6e} vs tolerance {:.3e}: {}",
        result.worst,
        tolerance,
        if result.pass { "PASS" } else { "FAIL" }
    );
    let mut all_pass = result.pass;
    let mut json = result.json.clone();
    if let Some(pair) = summaries {
        let (ma, mb, counts_pass) = compare::compare_counts(&pair[0], &pair[1], counts_tolerance)
            .map_err(|e| {
                eprintln!("validation error: {e}");
                EXIT_VALIDATION
            })?;
        println!(
            "mean counts {ma:.5} vs {mb:.5} (|diff| {:.3e} vs {counts_tolerance:.3e}): {}",
            (ma - mb).abs(),
            if counts_pass { "PASS" } else { "FAIL" }
        );
        json["counts"] = serde_json::json!({
            "a": ma, "b": mb, "tolerance": counts_tolerance, "pass": counts_pass,
        });
        all_pass &= counts_pass;
    }
    if let Some(path) = report {
        std::fs::write(path, serde_json::to_string_pretty(&json).unwrap()).map_err(|e| {
            eprintln!("error: cannot write report {}: {e}", path.display());
            EXIT_IO
        })?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(EXIT_INTEGRITY)
    }
}
