//! `coremarket`: clear market scenarios, check mechanism properties and
//! write plot-ready tables.
//!
//! Exit status: 0 success, 2 unreadable or invalid scenario (or bad
//! arguments), 3 infeasible dispatch, 4 payment rule error, 5 failed or
//! inapplicable analysis check.

mod analyze;
mod clear;
mod format;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coremarket::market::{parse_market, validate_instance, validate::ViolationKind, MarketInstance};
use coremarket::mechanisms::{CoreMode, Mechanism, MpcsOptions};
use coremarket::Error;

#[derive(Parser)]
#[command(name = "coremarket", version, about = "Market clearing under pay-as-bid, LMP, VCG and MPCS payment rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear a scenario and print payments under each rule.
    Clear(ClearArgs),
    /// Run property checks on a scenario.
    Analyze(AnalyzeArgs),
    /// Write comma-separated tables and plot series to a directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    input: PathBuf,
    /// Comma-separated payment rules, or `all`.
    #[arg(long, default_value = "all")]
    mechanisms: String,
    /// Tie-break weight towards VCG utilities in MPCS.
    #[arg(long)]
    epsilon: Option<f64>,
    /// How MPCS handles the core rows.
    #[arg(long, value_enum, default_value_t = Mode::Generate)]
    mode: Mode,
}

#[derive(Args)]
struct ClearArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated checks, or `all`.
    #[arg(long, default_value = "all")]
    checks: String,
    /// Seed for the randomized suite.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Generate,
    Enumerate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// A failure mapped to an exit status.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Infeasible(String),
    Mechanism(String),
    Analysis(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Mechanism(_) => 4,
            Failure::Analysis(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Mechanism(m) | Failure::Analysis(m) | Failure::Io(m) => m,
        }
    }

    /// Classifies a library error raised while clearing.
    pub fn from_clearing(e: Error) -> Self {
        match e {
            Error::Infeasible => Failure::Infeasible(e.to_string()),
            Error::Schema { .. } | Error::UnknownReference { .. } | Error::InvalidCurve(_) => Failure::Input(e.to_string()),
            other => Failure::Mechanism(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Requested rules; `explicit` is false for `all`.
pub struct Selection {
    pub mechanisms: Vec<Mechanism>,
    pub explicit: bool,
}

fn parse_mechanisms(list: &str) -> Result<Selection, Failure> {
    let list = list.trim();
    if list.eq_ignore_ascii_case("all") {
        return Ok(Selection {
            mechanisms: Mechanism::ALL.to_vec(),
            explicit: false,
        });
    }
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Mechanism = item.parse().map_err(|e: Error| Failure::Input(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(Selection {
        mechanisms: out,
        explicit: true,
    })
}

fn mpcs_options(common: &Common) -> Result<MpcsOptions, Failure> {
    if let Some(e) = common.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Failure::Input("--epsilon must be a positive number".into()));
        }
    }
    Ok(MpcsOptions {
        epsilon: common.epsilon,
        mode: match common.mode {
            Mode::Generate => CoreMode::Generate,
            Mode::Enumerate => CoreMode::Enumerate,
        },
        ..Default::default()
    })
}

/// Reads, parses and validates a scenario.
pub fn load(path: &Path) -> Result<MarketInstance, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let parsed = parse_market(&bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let report = validate_instance(&parsed.instance);
    for v in &report.violations {
        match v.kind {
            ViolationKind::Infeasible => return Err(Failure::Infeasible(v.message.clone())),
            ViolationKind::RemovalInfeasible => eprintln!("warning: {}", v.message),
            _ => {}
        }
    }
    if let Some(v) = report
        .violations
        .iter()
        .find(|v| !matches!(v.kind, ViolationKind::RemovalInfeasible))
    {
        return Err(Failure::Input(format!("{}: {}", path.display(), v.message)));
    }
    Ok(parsed.instance)
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Clear(a) => {
            let selection = parse_mechanisms(&a.common.mechanisms)?;
            let opts = mpcs_options(&a.common)?;
            let inst = load(&a.common.input)?;
            clear::run(&inst, &selection, &opts, a.format, a.out.as_deref())
        }
        Command::Analyze(a) => {
            let opts = mpcs_options(&a.common)?;
            let checks = analyze::parse_checks(&a.checks)?;
            let inst = load(&a.common.input)?;
            analyze::run(&inst, &checks, &opts, a.seed, a.format, a.out.as_deref())
        }
        Command::Report(a) => {
            let selection = parse_mechanisms(&a.common.mechanisms)?;
            let opts = mpcs_options(&a.common)?;
            let inst = load(&a.common.input)?;
            report::run(&inst, &selection, &opts, &a.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
