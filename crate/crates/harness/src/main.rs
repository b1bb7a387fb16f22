use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spikeforce::{Coding, Procedure, SignalKind};
use spikeforce_harness::commands;
use spikeforce_harness::{BenchOptions, ExperimentConfig, HarnessError, Overrides, Result, Suite};

/// Train and benchmark recurrent spiking networks with FORCE and full-FORCE.
#[derive(Parser)]
#[command(name = "spikeforce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network; writes a checkpoint, a JSON report and a trace.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint in closed loop.
    Eval {
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a benchmark suite: table2, table3, spikerate, table4-noise, interval.
    Bench {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write `t,f_out_*,z_*` for a checkpoint.
    ExportTrace {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (for export-trace: the CSV file).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Gaussian input noise as a fraction of the input range.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, value_parser = parse::<Procedure>)]
    procedure: Option<Procedure>,
    #[arg(long, value_parser = parse::<SignalKind>)]
    system: Option<SignalKind>,
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse::<Coding>)]
    coding: Option<Coding>,
}

fn parse<T: std::str::FromStr<Err = spikeforce::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|e| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            repeats: self.repeats,
            noise: self.noise,
            procedure: self.procedure,
            system: self.system,
            neurons: self.neurons,
            epochs: self.epochs,
            coding: self.coding,
        })?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let cfg = common.resolve()?;
            let out = commands::train_cmd(&cfg)?;
            println!("final mse {:.6}", out.record.metrics.mse);
            println!("checkpoint {}", out.checkpoint.display());
            println!("report {}", out.report.display());
            if let Some(trace) = out.trace {
                println!("trace {}", trace.display());
            }
        }
        Command::Eval { checkpoint, common } => {
            let cfg = common.resolve()?;
            let summary = commands::eval_cmd(&checkpoint, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Run(e.to_string()))?);
        }
        Command::Bench { suite, common } => {
            let suite: Suite = suite.parse()?;
            let cfg = common.resolve()?;
            let (result, files) = commands::bench_cmd(suite, &BenchOptions::new(cfg))?;
            print!("{}", result.table.to_csv()?);
            for c in result.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "cell {} {} n={} repeat {} failed: {}",
                    c.cell.procedure,
                    c.cell.system.name(),
                    c.cell.neurons,
                    c.cell.repeat,
                    c.error.as_deref().unwrap_or("")
                );
            }
            println!("table {}", files.table.display());
            println!("detail {}", files.detail.display());
        }
        Command::ExportTrace { checkpoint, common } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
            let mut cfg = common.resolve()?;
            cfg.experiment.output_dir = out.parent().map(PathBuf::from).unwrap_or_default();
            let mse = commands::export_trace_cmd(&checkpoint, &cfg, &out)?;
            println!("mse {mse:.6}");
            println!("trace {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
