use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use codazzi_cli::config::parse_spacing;
use codazzi_cli::{emit_report, run_suites, CliError, Format, Suite, SuiteConfig};

/// Run verification suites and write reports.
///
/// Every option can also be set through the matching `CODAZZI_*`
/// environment variable; command-line flags take precedence.
#[derive(Debug, Parser)]
#[command(name = "codazzi", version)]
struct Args {
    /// Suites to run; none gives an empty report.
    #[arg(value_enum)]
    suites: Vec<Suite>,
    /// JSON file with a base configuration; flags and variables override it.
    #[arg(long, env = "CODAZZI_CONFIG")]
    config: Option<PathBuf>,
    /// Grid spacing Δ, as `1/64` or a decimal.
    #[arg(long, env = "CODAZZI_GRID", value_parser = parse_spacing)]
    grid: Option<f64>,
    #[arg(long, env = "CODAZZI_MARGIN")]
    margin: Option<f64>,
    /// Radius excluded about cone tips.
    #[arg(long, env = "CODAZZI_EPS_TIP")]
    eps_tip: Option<f64>,
    /// Tolerance for algebraic identities.
    #[arg(long, env = "CODAZZI_TOL_ALG")]
    tol_alg: Option<f64>,
    /// Relative tolerance for global quadratures.
    #[arg(long, env = "CODAZZI_TOL_GLOBAL")]
    tol_global: Option<f64>,
    #[arg(long, env = "CODAZZI_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "CODAZZI_OUT")]
    out: Option<PathBuf>,
    /// Output formats, comma separated.
    #[arg(long, env = "CODAZZI_FORMAT", value_enum, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,
}

fn config(args: &Args) -> Result<SuiteConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            SuiteConfig::from_json(&text)?
        }
        None => SuiteConfig::default(),
    };
    if let Some(v) = args.grid {
        cfg.grid = v;
    }
    if let Some(v) = args.margin {
        cfg.margin = v;
    }
    if let Some(v) = args.eps_tip {
        cfg.eps_tip = v;
    }
    if let Some(v) = args.tol_alg {
        cfg.tol_alg = v;
    }
    if let Some(v) = args.tol_global {
        cfg.tol_global = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<bool, CliError> {
    let cfg = config(args)?;
    let report = run_suites(&args.suites, &cfg)?;
    let mut formats = args.format.clone();
    formats.dedup();
    for f in formats {
        for path in emit_report(&report, f, &cfg.out)? {
            eprintln!("wrote {}", path.display());
        }
    }
    for c in report.failures() {
        eprintln!("FAIL {}: measured {:e}, expected {:e} ± {:e} ({})", c.id, c.measured, c.expected, c.tol, c.identity);
    }
    eprintln!("{} checks, {} failed", report.checks.len(), report.failures().count());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
