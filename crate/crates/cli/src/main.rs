use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tlbsim_cli::config::{OutputSpec, RunFile, TraceSource};
use tlbsim_cli::presets::{preset_rows, render_presets_table, Preset};
use tlbsim_cli::runner;
use tlbsim_core::stats::ReportFormat;
use tlbsim_core::trace::{generate, render_trace};
use tlbsim_core::TraceSpec;

/// Trace-driven simulator of a configurable RISC-V Sv39 TLB hierarchy.
#[derive(Parser)]
#[command(name = "tlbsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration over a trace and report the statistics.
    Run(RunArgs),
    /// Run several MMU variants over one identical trace and compare them.
    Sweep(SweepArgs),
    /// Expand a generator spec into a trace file.
    GenTrace(GenTraceArgs),
    /// Print the built-in configurations with their TLB reach.
    Presets(PresetsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(format: FormatArg) -> ReportFormat {
        match format {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace file to simulate (overrides the config file's trace).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Built-in configuration preset (I..V; overrides the config file).
    #[arg(long)]
    preset: Option<Preset>,
    /// Run seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Write the comparison table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct GenTraceArgs {
    /// Generator spec as inline JSON, e.g.
    /// '{"conflict":{"l2_sets":1024,"distinct_tags":4,"repetitions":100000}}'.
    #[arg(long, conflicts_with = "spec_file")]
    spec: Option<String>,
    /// File containing the generator spec JSON.
    #[arg(long)]
    spec_file: Option<PathBuf>,
    /// Output trace path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PresetsArgs {
    #[arg(long, value_enum, default_value = "text")]
    format: PresetsFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetsFormat {
    Text,
    Json,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::Presets(args) => cmd_presets(args),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let mut file = match &args.config {
        Some(path) => RunFile::load(path)?,
        None => RunFile::default(),
    };
    if let Some(preset) = args.preset {
        file.preset = Some(preset.name().to_string());
        file.mmu = None;
    }
    if let Some(trace) = args.trace {
        file.trace = Some(TraceSource::Path(trace));
    }
    if let Some(seed) = args.seed {
        file.seed = Some(seed);
    }
    let mut config = file.resolve()?;
    if let Some(out) = args.out {
        let format = args
            .format
            .map(ReportFormat::from)
            .or_else(|| config.output.as_ref().map(|o| o.format))
            .unwrap_or(ReportFormat::Json);
        config.output = Some(OutputSpec { path: out, format });
    } else if let (Some(format), Some(output)) = (args.format, config.output.as_mut()) {
        output.format = format.into();
    }

    let report = runner::run(&config)?;
    match &config.output {
        Some(output) => eprintln!("wrote report to {}", output.path.display()),
        None => {
            let format = args.format.map(ReportFormat::from).unwrap_or(ReportFormat::Json);
            println!("{}", report.emit(format)?);
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut config = tlbsim_cli::load_sweep_config(&args.config)?;
    if let Some(out) = args.out {
        let format = args
            .format
            .map(ReportFormat::from)
            .or_else(|| config.output.as_ref().map(|o| o.format))
            .unwrap_or(ReportFormat::Json);
        config.output = Some(OutputSpec { path: out, format });
    } else if let (Some(format), Some(output)) = (args.format, config.output.as_mut()) {
        output.format = format.into();
    }

    let report = runner::sweep(&config)?;
    match &config.output {
        Some(output) => eprintln!("wrote sweep table to {}", output.path.display()),
        None => {
            let format = args.format.map(ReportFormat::from).unwrap_or(ReportFormat::Json);
            println!("{}", report.emit(format)?);
        }
    }
    Ok(())
}

fn cmd_gen_trace(args: GenTraceArgs) -> anyhow::Result<()> {
    let spec_text = match (args.spec, args.spec_file) {
        (Some(inline), None) => inline,
        (None, Some(path)) => std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read spec file {}", path.display()))?,
        _ => bail!("gen-trace needs exactly one of --spec or --spec-file"),
    };
    let spec: TraceSpec =
        serde_json::from_str(&spec_text).context("invalid trace generator spec")?;
    let text = render_trace(&generate(&spec));
    match args.out {
        Some(path) => {
            std::fs::write(&path, text)
                .with_context(|| format!("cannot write trace to {}", path.display()))?;
            eprintln!("wrote trace to {}", path.display());
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_presets(args: PresetsArgs) -> anyhow::Result<()> {
    match args.format {
        PresetsFormat::Text => print!("{}", render_presets_table()),
        PresetsFormat::Json => println!("{}", serde_json::to_string_pretty(&preset_rows())?),
    }
    Ok(())
}
