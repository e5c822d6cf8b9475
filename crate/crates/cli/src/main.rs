use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use xrsched_cli::config::{parse_config, to_document, ExperimentSpec, Overrides, OUT_DIR_ENV};
use xrsched_cli::experiment::{comparison_table, run_experiment, RunOptions};
use xrsched_cli::trace::export_drop;

/// PAoI-weighted proportional-fair MU-MIMO uplink scheduling simulator.
#[derive(Parser)]
#[command(name = "xrsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every listed scheduler on every drop and write the results.
    Run(RunArgs),
    /// Print the effective configuration as a TOML document.
    Config(CommonArgs),
    /// Channel trace tools.
    #[command(subcommand)]
    Trace(TraceCommand),
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Write the generated channel of one drop to a binary trace.
    Export(ExportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration; omitted means all defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Base RNG seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent drops [default: 35].
    #[arg(long)]
    drops: Option<u32>,
    /// TTIs per drop [default: 1000000].
    #[arg(long)]
    ttis: Option<u64>,
    /// Comma-separated schedulers: paoi_wpf, classic_pf, exhaustive [default: paoi_wpf].
    #[arg(long, value_delimiter = ',')]
    schedulers: Option<Vec<String>>,
    /// Output directory [default: xrsched-out].
    #[arg(short, long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Desk preset: 5 drops of 20000 TTIs; --drops and --ttis still win.
    #[arg(long)]
    desk: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Worker threads; 0 uses every core.
    #[arg(short, long, default_value_t = 0)]
    jobs: usize,
    /// Write per-TTI record CSVs.
    #[arg(long)]
    records: bool,
    /// Skip the comparison table.
    #[arg(long)]
    no_compare: bool,
    /// Replay channels from this trace instead of generating them.
    #[arg(long)]
    trace_import: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Drop whose channel is exported.
    #[arg(long, default_value_t = 0)]
    drop: u32,
    /// Trace file to write.
    #[arg(long)]
    trace_export: PathBuf,
}

fn load(common: &CommonArgs, records: Option<bool>, compare: Option<bool>) -> Result<ExperimentSpec> {
    let document = match &common.config {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let overrides = Overrides {
        seed: common.seed,
        drops: common.drops,
        ttis: common.ttis,
        schedulers: common.schedulers.clone(),
        output_dir: common.out.clone(),
        emit_tti_records: records,
        compare,
        desk: common.desk,
    };
    // clap already folded the environment variable into --out
    Ok(parse_config(&document, &overrides, None)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let records = args.records.then_some(true);
            let compare = args.no_compare.then_some(false);
            let spec = load(&args.common, records, compare)?;
            let opts = RunOptions {
                jobs: args.jobs,
                trace: args.trace_import,
            };
            let report = run_experiment(&spec, &opts)?;
            if spec.compare {
                print!("{}", comparison_table(&report.aggregates));
            }
            eprintln!("results in {}", spec.output_dir.display());
        }
        Command::Config(common) => {
            let spec = load(&common, None, None)?;
            print!("{}", to_document(&spec));
        }
        Command::Trace(TraceCommand::Export(args)) => {
            let spec = load(&args.common, None, None)?;
            export_drop(&args.trace_export, &spec.base, args.drop, spec.base.ttis)?;
            eprintln!(
                "wrote {} TTIs of drop {} to {}",
                spec.base.ttis,
                args.drop,
                args.trace_export.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
