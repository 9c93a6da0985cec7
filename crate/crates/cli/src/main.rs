//! `korteweg <experiment> [--config PATH] [--out PATH] [--format csv|json] [--seed N]`
//!
//! Exit status: 0 pass, 1 assertion failure, 2 usage error, 3 numerical failure.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Config, Experiment};

#[derive(Parser)]
#[command(name = "korteweg", version, about = "Run verification experiments for the nonlocal Korteweg system")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Threshold table over an eps sweep.
    #[command(name = "thresholds")]
    Thresholds(Common),
    /// Per-mode propagator checks, or the fitted estimate constants.
    #[command(name = "propagator_verify")]
    PropagatorVerify(Common),
    /// The four hybrid-norm forms on random band-limited fields.
    #[command(name = "norm_equivalence")]
    NormEquivalence(Common),
    /// Capillary commutator under a family of flows.
    #[command(name = "flow_commutator")]
    FlowCommutator(Common),
    /// Nonlocal to local convergence study.
    #[command(name = "converge")]
    Converge(Common),
    /// The a priori inequality over a parameter sweep.
    #[command(name = "apriori_check")]
    AprioriCheck(Common),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_ASSERT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, common) = match cli.cmd {
        Cmd::Thresholds(c) => (Experiment::Thresholds, c),
        Cmd::PropagatorVerify(c) => (Experiment::PropagatorVerify, c),
        Cmd::NormEquivalence(c) => (Experiment::NormEquivalence, c),
        Cmd::FlowCommutator(c) => (Experiment::FlowCommutator, c),
        Cmd::Converge(c) => (Experiment::Converge, c),
        Cmd::AprioriCheck(c) => (Experiment::AprioriCheck, c),
    };
    let start = Instant::now();

    let mut cfg = match &common.config {
        Some(p) => match Config::load(p) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_USAGE, &format!("usage error: {e}")),
        },
        None => Config::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Err(e) = cfg.validate(exp) {
        return fail(EXIT_USAGE, &format!("usage error: {e}"));
    }

    let outcome = match experiments::run(exp, &cfg) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_NUMERICAL, &format!("numerical failure in {}: {e}", exp.name())),
    };

    let body = match common.format {
        Format::Csv => outcome.table.to_csv(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&outcome.table).expect("table serializes");
            s.push('\n');
            s
        }
    };
    match &common.out {
        Some(path) => {
            let hash = cfg.hash();
            let meta = output::Meta {
                experiment: exp.name(),
                config_hash: &hash,
                version: env!("CARGO_PKG_VERSION"),
                wall_time_s: start.elapsed().as_secs_f64(),
                status: if outcome.failures.is_empty() { "pass" } else { "fail" },
                failures: &outcome.failures,
                columns: &outcome.table.columns,
                rows: outcome.table.rows.len(),
            };
            let meta = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
            if let Err(e) = output::write_atomic(path, body.as_bytes())
                .and_then(|_| output::write_atomic(&output::sidecar_path(path), meta.as_bytes()))
            {
                return fail(EXIT_NUMERICAL, &format!("cannot write {}: {e}", path.display()));
            }
        }
        None => print!("{body}"),
    }

    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("assertion failed: {f}");
        }
        ExitCode::from(EXIT_ASSERT)
    }
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("{msg}");
    ExitCode::from(code)
}
