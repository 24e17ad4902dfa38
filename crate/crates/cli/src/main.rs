//! `minimax`: run, benchmark and verify the NC-SC solvers.
//!
//! Exit codes: 0 converged / verified, 1 configuration or I/O error (nothing
//! written), 2 iteration or time budget exhausted, 3 divergence or solver
//! failure, 4 verification violations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ncsc::experiment::{
    combined_exit_code, gen_data, run_experiment, run_verification, write_file_atomically,
    write_results, write_trace, ExperimentConfig, ResultRow, VerifyConfig,
};
use ncsc::Error;

/// Environment variable that sets the worker thread count.
const THREADS_ENV: &str = "NCSC_THREADS";

#[derive(Parser)]
#[command(
    name = "minimax",
    version,
    about = "Solvers for nonconvex-strongly-concave minimax problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the single solver of a JSON experiment config.
    Run { config: PathBuf },
    /// Run every solver of a JSON config on one shared instance.
    Bench { config: PathBuf },
    /// Check derivatives, gradient-bound inequalities and second-order identities.
    Verify(VerifyArgs),
    /// Write a synthetic regression dataset as headerless CSV.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        d: usize,
        #[arg(long = "n", short = 'n')]
        n_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// `x` and `y` sizes of the random quadratic.
    #[arg(long, default_value_t = 4)]
    quad_n: usize,
    #[arg(long, default_value_t = 3)]
    quad_m: usize,
    /// Feature count and number of points of the regression instance.
    #[arg(long, default_value_t = 3)]
    robust_d: usize,
    #[arg(long, default_value_t = 5)]
    robust_points: usize,
    #[arg(long, default_value_t = 1000)]
    lemma_samples: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let code = match cli.command {
        Command::Run { config } => cmd_run(&config, false),
        Command::Bench { config } => cmd_run(&config, true),
        Command::Verify(args) => cmd_verify(&args),
        Command::GenData {
            seed,
            d,
            n_points,
            out,
        } => cmd_gen_data(seed, d, n_points, &out),
    };
    match code {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    if threads == 0 {
        return Err(format!("{THREADS_ENV} must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn cmd_run(config: &Path, bench: bool) -> Result<i32, Error> {
    let cfg = ExperimentConfig::load(config)?;
    let count = cfg.solver_list().len();
    if !bench && count != 1 {
        return Err(Error::Config(format!(
            "run expects exactly one solver, config lists {count}; use bench"
        )));
    }
    let record_trace = cfg.output.trace.is_some() || cfg.output.trace_dir.is_some();
    let rows = run_experiment(&cfg, record_trace)?;
    // everything is rendered before the first file is touched
    let mut table = Vec::new();
    write_results(&mut table, &rows)?;
    let mut traces = Vec::new();
    if let Some(path) = &cfg.output.trace {
        traces.push((path.clone(), render_trace(&rows[0])?));
    }
    if let Some(dir) = &cfg.output.trace_dir {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "trace_dir {} is not a directory",
                dir.display()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            let name = format!("{i}_{}.csv", row.report.algorithm);
            traces.push((dir.join(name), render_trace(row)?));
        }
    }
    match &cfg.output.csv {
        Some(path) => write_file_atomically(path, &table)?,
        None => std::io::stdout().write_all(&table)?,
    }
    for (path, content) in traces {
        write_file_atomically(&path, &content)?;
    }
    for row in &rows {
        if let Some(msg) = &row.report.message {
            eprintln!("{}: {:?}: {msg}", row.report.algorithm, row.report.status);
        }
        if let Some(c) = row.curvature.filter(|c| c.violates()) {
            eprintln!(
                "warning: {}: y-curvature {:.3e} at the final iterate exceeds -mu = {:.3e}; the declared modulus does not hold there",
                row.report.algorithm, c.max_curvature, -c.mu
            );
        }
    }
    Ok(combined_exit_code(&rows))
}

fn render_trace(row: &ResultRow) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    write_trace(&mut buf, &row.report.trace)?;
    Ok(buf)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, Error> {
    let cfg = VerifyConfig {
        seed: args.seed,
        quad_n: args.quad_n,
        quad_m: args.quad_m,
        robust_d: args.robust_d,
        robust_points: args.robust_points,
        lemma_samples: args.lemma_samples,
        corrupt_gradient: args.corrupt_gradient,
        ..Default::default()
    };
    let report = run_verification(&cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Numeric(e.to_string()))?;
    if let Some(path) = &args.report {
        write_file_atomically(path, json.as_bytes())?;
    }
    println!("{json}");
    let failures = report.failures();
    for name in &failures {
        eprintln!("violation: {name}");
    }
    Ok(if failures.is_empty() { 0 } else { 4 })
}

fn cmd_gen_data(seed: u64, d: usize, n_points: usize, out: &Path) -> Result<i32, Error> {
    let mut buf = Vec::new();
    gen_data(&mut buf, seed, d, n_points)?;
    write_file_atomically(out, &buf)?;
    Ok(0)
}
