use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use csp_lab::config::parse_override;
use csp_lab::{run, ExperimentConfig, ExperimentKind, LabError, LabResult};

#[derive(Parser)]
#[command(name = "csp-lab", about = "Compressible signal pursuit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one source block
    Sample(Args),
    /// Rate and distortion of a lossy code
    CodecEval(Args),
    /// Exhaustive codebook recovery
    CspRun(Args),
    /// Recovery by search over decodable bitstrings
    UcspRun(Args),
    /// Success rate against the measurement ratio
    SweepM(Args),
    /// Information or rate-distortion dimension estimate
    DimEstimate(Args),
    /// Guarantees next to empirical failure rates
    Bounds(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// CSV output path
    #[arg(long)]
    out: PathBuf,
}

fn execute(kind: ExperimentKind, args: &Args) -> LabResult<String> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut overrides = args
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<LabResult<Vec<_>>>()?;
    if let Ok(threads) = std::env::var("CSP_LAB_THREADS") {
        overrides.push(("threads".into(), threads));
    }
    let config = ExperimentConfig::parse(kind, &text, &overrides)?;
    let result = run(&config)?;
    result.emit_csv(&args.out)?;
    Ok(result.summary_text())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Sample(a) => (ExperimentKind::Sample, a),
        Command::CodecEval(a) => (ExperimentKind::CodecEval, a),
        Command::CspRun(a) => (ExperimentKind::CspRun, a),
        Command::UcspRun(a) => (ExperimentKind::UcspRun, a),
        Command::SweepM(a) => (ExperimentKind::SweepM, a),
        Command::DimEstimate(a) => (ExperimentKind::DimEstimate, a),
        Command::Bounds(a) => (ExperimentKind::Bounds, a),
    };
    match execute(kind, args) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
