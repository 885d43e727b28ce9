use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use spray_holonomy::analysis::{build_candidates, emit, run_analysis, sample_points, Format};
use spray_holonomy::builtin::builtin_examples;
use spray_holonomy::config::load_config;
use spray_holonomy::holonomy;
use spray_holonomy::transport;
use spray_holonomy::variational;
use spray_holonomy::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_ANALYSIS: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "spray-holonomy", version, about = "Holonomy distribution and variational freedom of sprays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full analysis pipeline on a configuration.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the sampling seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check one candidate Lagrangian at the configured samples.
    CheckLagrangian {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        candidate: String,
    },
    /// Run one transport task of a configuration.
    Transport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        task: String,
    },
    /// Run the builtin examples and compare with their expected verdicts.
    Examples {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        filter: Option<u8>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Syntax { .. } | Error::UnknownIdentifier { .. } => EXIT_USAGE,
        Error::VariableOutOfRange { .. } | Error::UnboundParameter(_) => EXIT_USAGE,
        _ => EXIT_ANALYSIS,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

/// Writes to stdout, treating a closed pipe as success.
fn out(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.write_all(b"\n"));
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn analyze(config: PathBuf, format: OutputFormat, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Error> {
    let cfg = load_config(&config)?;
    let report = run_analysis(&cfg, seed)?;
    let format = match format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Text => Format::Text,
    };
    emit(&report, format, out.as_deref())
}

fn check_lagrangian(config: PathBuf, name: String) -> Result<(), Error> {
    let cfg = load_config(&config)?;
    let model = cfg.model()?;
    let (samples, _) = sample_points(&cfg, &model, cfg.samples.seed)?;
    let dist = holonomy::analyze_distribution(&model, &samples, &cfg.distribution_config())?;
    let points: Vec<_> = dist.points.iter().map(|p| p.point.clone()).collect();
    let candidates = build_candidates(&cfg, &model, &points, &mut Vec::new())?;
    let cand = candidates
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::Config(format!("no candidate named `{name}`")))?;
    let report = variational::candidate_report(&model, cand, &dist, &cfg.tolerances.checks());
    out(&json(&report));
    Ok(())
}

fn run_transport(config: PathBuf, name: String) -> Result<(), Error> {
    let cfg = load_config(&config)?;
    let model = cfg.model()?;
    let task = cfg
        .transport
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Config(format!("no transport task named `{name}`")))?;
    let candidates = build_candidates(&cfg, &model, &[], &mut Vec::new())?;
    let cand = task.candidate.as_ref().and_then(|c| candidates.iter().find(|k| &k.name == c));
    let outcome = transport::run_task(&model, task, cand.map(|c| &c.expr))?;
    out(&json(&outcome));
    Ok(())
}

fn examples(filter: Option<u8>) -> ExitCode {
    let selected: Vec<_> = builtin_examples().into_iter().filter(|e| filter.is_none_or(|f| f == e.id)).collect();
    let results: Vec<_> = selected.par_iter().map(|ex| (ex, run_analysis(&ex.config, None))).collect();
    let mut worst = 0u8;
    for (ex, result) in results {
        match result {
            Ok(report) => {
                let v = &report.verdict;
                let mism = ex.mismatches(&report);
                out(&format!(
                    "example {}: rank {}, vh(2) = {}, metrizability = {}, rule {} ... {}",
                    ex.id,
                    report.distribution.generic_rank,
                    v.vh2,
                    v.metrizability,
                    v.rule,
                    if mism.is_empty() { "ok" } else { "MISMATCH" }
                ));
                for m in &mism {
                    out(&format!("    {m}"));
                }
                if !mism.is_empty() {
                    worst = worst.max(EXIT_MISMATCH);
                }
            }
            Err(e) => {
                out(&format!("example {}: error: {e}", ex.id));
                worst = worst.max(EXIT_MISMATCH);
            }
        }
    }
    ExitCode::from(worst)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze { config, format, out, seed } => analyze(config, format, out, seed),
        Command::CheckLagrangian { config, candidate } => check_lagrangian(config, candidate),
        Command::Transport { config, task } => run_transport(config, task),
        Command::Examples { filter } => return examples(filter),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
