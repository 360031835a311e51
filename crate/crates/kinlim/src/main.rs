use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use kinlim::config::parse_config;
use kinlim::report::{penrose_report, run_dir, run_experiment, run_report, summarize, write_report};

/// Vlasov-Maxwell, Vlasov-Poisson and Vlasov-Darwin experiments.
#[derive(Parser)]
#[command(name = "kinlim", version)]
struct Cli {
    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Penrose stability scan of the configured equilibrium.
    Penrose(Args),
    /// Single run of the configured model.
    Run(Args),
    /// The configured experiment.
    Sweep(Args),
    /// Summarize the manifests found under a directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Root output directory; overrides `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let (args, label) = match &cli.command {
        Command::Report { out } => {
            print!("{}", summarize(out)?);
            return Ok(());
        }
        Command::Penrose(a) => (a, "penrose"),
        Command::Run(a) => (a, "run"),
        Command::Sweep(a) => (a, "sweep"),
    };
    let spec = parse_config(&args.config)?;
    let report = match &cli.command {
        Command::Penrose(_) => penrose_report(&spec)?,
        Command::Run(_) => run_report(&spec)?,
        _ => run_experiment(&spec)?,
    };
    let name = if label == "sweep" { spec.kind.name() } else { label.to_string() };
    let dir = run_dir(&spec, args.out.as_deref(), &name);
    write_report(&spec, &report, &dir, label)?;
    println!("{}", dir.display());
    for (k, v) in &report.summary {
        println!("{k} = {v}");
    }
    Ok(())
}
