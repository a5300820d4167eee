mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kohnlab::algebra::{extract_det_coefficients, DetCoefficients};
use kohnlab::kohn_complex::{self, ComplexSolution, Variant};
use kohnlab::kohn_real::{self, GeneralizedSolution, TauAnalysis};
use kohnlab::lmatrix::{self, LDecomposition};
use kohnlab::model::RadialProblem;
use kohnlab::oracle::{self, OracleResult};
use kohnlab::scanner::{self, ScanReport};
use kohnlab::verify::{self, Status, Suite, SuiteResult};
use serde::Serialize;

use crate::config::Config;

/// Generalized and complex Kohn phase shifts for a radial potential.
#[derive(Debug, Parser)]
#[command(name = "kohnlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full analysis at one wavenumber, as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: f64,
        /// Also solve at this mixing phase, in [0, pi).
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Scan a k grid. `--out x.csv` writes CSV, any other name JSON.
    Scan {
        #[command(flatten)]
        common: Common,
    },
    /// Run identity checks; exits 1 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Wavenumbers, overriding the config.
        #[arg(long, value_delimiter = ',')]
        k: Vec<f64>,
        /// Suites to run, comma-separated.
        #[arg(long, value_delimiter = ',')]
        suites: Vec<Suite>,
    },
}

#[derive(Serialize)]
struct SolveReport {
    problem: RadialProblem,
    basis_size: usize,
    coefficients: DetCoefficients,
    analysis: TauAnalysis,
    complex_k: ComplexSolution,
    at_tau: Option<AtTau>,
    lmatrix: LDecomposition,
    exact: Option<OracleResult>,
}

#[derive(Serialize)]
struct AtTau {
    tau: f64,
    real: Option<GeneralizedSolution>,
    slope: Option<f64>,
    error: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let common = match &cli.command {
        Command::Solve { common, .. } | Command::Scan { common } | Command::Verify { common, .. } => common,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    let config = Config::load(common.config.as_deref())?;
    pool.install(|| match &cli.command {
        Command::Solve { common, k, tau } => solve(&config, common, *k, *tau),
        Command::Scan { common } => scan(&config, common),
        Command::Verify { common, k, suites } => verify_cmd(&config, common, k, suites),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn solve(config: &Config, common: &Common, k: f64, tau: Option<f64>) -> Result<ExitCode> {
    let problem = config.problem(k)?;
    let basis = config.basis()?;
    if let Some(t) = tau {
        if !(0.0..std::f64::consts::PI).contains(&t) {
            bail!("--tau must lie in [0, pi), got {t}");
        }
    }
    let (table, dec) = lmatrix::decompose_problem(&problem, &basis)?;
    let coefficients = extract_det_coefficients(&table)?;
    let analysis = kohn_real::optimize_tau(&coefficients);
    let complex_k = kohn_complex::solve_complex(&table, tau.unwrap_or(0.0), Variant::K)?;
    let at_tau = tau.map(|t| match kohn_real::solve_at(&table, t) {
        Ok(sol) => AtTau {
            tau: t,
            slope: kohn_real::slope(&coefficients, t).ok(),
            real: Some(sol),
            error: None,
        },
        Err(e) => AtTau {
            tau: t,
            real: None,
            slope: None,
            error: Some(e.to_string()),
        },
    });
    let report = SolveReport {
        problem,
        basis_size: basis.len(),
        coefficients,
        analysis,
        complex_k,
        at_tau,
        lmatrix: dec,
        exact: oracle::exact_phase_shift(&problem).ok(),
    };
    emit(common.out.as_deref(), &to_json(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn scan(config: &Config, common: &Common) -> Result<ExitCode> {
    let spec = config.scan_spec()?;
    let basis = config.basis()?;
    let problem = config.problem(spec.k_grid.k_min)?;
    let rows = scanner::run_scan(&spec, &problem, &basis)?;
    let checks = if spec.checks.is_empty() {
        Vec::new()
    } else {
        let mut options = config.verify_options()?;
        options.ks = spec.k_grid.points();
        verify::run_suites(&problem, &basis, &spec.checks, &options)
    };
    let failed = checks.iter().any(|s| s.status == Status::Fail);
    let csv = common
        .out
        .as_deref()
        .and_then(Path::extension)
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if csv {
        let mut buf = Vec::new();
        scanner::write_csv(&rows, &mut buf)?;
        emit(common.out.as_deref(), std::str::from_utf8(&buf)?)?;
    } else {
        let report = ScanReport::new(&spec, &problem, &basis, rows, checks.clone());
        emit(common.out.as_deref(), &report.to_json())?;
    }
    if !checks.is_empty() {
        print_suites(&checks, common.out.is_none());
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn verify_cmd(config: &Config, common: &Common, ks: &[f64], suites: &[Suite]) -> Result<ExitCode> {
    let mut options = config.verify_options()?;
    if !ks.is_empty() {
        if ks.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            bail!("--k values must be positive");
        }
        options.ks = ks.to_vec();
    }
    let suites = if suites.is_empty() { config.verify.suites.clone() } else { suites.to_vec() };
    let basis = config.basis()?;
    let problem = config.problem(options.ks[0])?;
    let results = verify::run_suites(&problem, &basis, &suites, &options);
    if let Some(path) = common.out.as_deref() {
        emit(Some(path), &to_json(&results)?)?;
    }
    print_suites(&results, false);
    let failed = results.iter().any(|s| s.status == Status::Fail);
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

/// One line per suite, then its notes; to stderr when stdout carries data.
fn print_suites(results: &[SuiteResult], to_stderr: bool) {
    let mut text = String::new();
    for s in results {
        let detail = match s.worst_check() {
            Some(c) => format!("{} worst {:.3e} (tol {:.0e})", c.name, c.worst, c.tolerance),
            None => String::from("no samples"),
        };
        text.push_str(&format!("{:<4} {:<18} {detail}\n", s.status.label(), s.suite.name()));
        for n in &s.notes {
            text.push_str(&format!("     {n}\n"));
        }
    }
    if to_stderr {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
}
