use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pidl_tse::experiment::{
    cmd_evaluate, cmd_render, cmd_simulate, cmd_train, parse_methods, run_all, with_workers,
    ExperimentConfig, Layout,
};
use pidl_tse::Result;

#[derive(Parser)]
#[command(name = "pidl-tse", version, about = "Traffic state estimation with physics-informed ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core (overrides the config)
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated subset of ensemble,non-ensemble,plain-dl,interpolation
    #[arg(long)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the corridor and write the ground-truth field
    Simulate(Common),
    /// Sample observations and train every method
    Train(Common),
    /// Compare trained methods against the ground truth
    Evaluate(Common),
    /// Render a field file as a grayscale PGM image
    Render {
        #[command(flatten)]
        common: Common,
        /// Field CSV; defaults to the ground truth in the output directory
        #[arg(long)]
        field: Option<PathBuf>,
        /// Image path; defaults to the field path with a .pgm extension
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// simulate, train, render the ground truth, evaluate
    RunAll(Common),
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(m) = &c.method {
        cfg.methods = parse_methods(m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load_config(&c)?;
            println!("{}", with_workers(cfg.workers, || cmd_simulate(&cfg))??);
        }
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let summary = with_workers(cfg.workers, || cmd_train(&cfg))??;
            print!("{summary}");
        }
        Command::Evaluate(c) => {
            let cfg = load_config(&c)?;
            let report = with_workers(cfg.workers, || cmd_evaluate(&cfg))??;
            print!("{}", report.to_text(None));
        }
        Command::Render { common, field, image } => {
            let cfg = load_config(&common)?;
            let field = field.unwrap_or_else(|| Layout::new(&cfg.output_dir).truth());
            let image = image.unwrap_or_else(|| field.with_extension("pgm"));
            let sidecar = cmd_render(&field, &image, &cfg.corridor)?;
            println!("wrote {} and {}", image.display(), sidecar.display());
        }
        Command::RunAll(c) => {
            let cfg = load_config(&c)?;
            let (sim, train, report) = with_workers(cfg.workers, || run_all(&cfg))??;
            println!("{sim}");
            print!("{train}");
            print!("{}", report.to_text(None));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pidl-tse: error: {e}");
            ExitCode::FAILURE
        }
    }
}
