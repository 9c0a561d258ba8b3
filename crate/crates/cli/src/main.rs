//! `reidlab`: one subcommand per pipeline stage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reidlab_core::Error;
use serde_json::json;

use commands::{Ctx, Role};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "reidlab", version, about = "Desk-scale person re-identification experiments")]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic features and image corpus, split into train/query/gallery.
    GenData,
    /// Hand-crafted descriptors for the image corpus.
    Extract,
    /// PCA, KISSME and XQDA on the metric branch's train split.
    FitMetric,
    /// Trains a classifier from scratch.
    Train {
        #[arg(long, value_enum)]
        role: Role,
    },
    /// Trains the student against the saved teacher.
    Distill,
    /// Distilled students over the temperature/lambda grid plus baselines.
    Sweep,
    /// Retrieval evaluation; all methods unless `--method` is given.
    Eval {
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Feature-extraction throughput per method.
    Bench {
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Accuracy/throughput trade-off table from eval and bench outputs.
    Report {
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Writes the resolved configuration to stdout.
    ShowConfig,
}

/// Exit code and machine-readable kind of an error.
fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Usage(_) => (2, "usage"),
        Error::Config(_) => (3, "config"),
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => (4, "missing_file"),
        Error::Io { .. } => (5, "io"),
        Error::Shape { .. } => (6, "dimension_mismatch"),
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => (7, "parse"),
        Error::Consistency(_) => (9, "consistency"),
        _ => (8, "computation"),
    }
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "exit_code": code, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> reidlab_core::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Command::ShowConfig = cli.command {
        config.validate()?;
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    let ctx = Ctx::new(config, cli.quiet)?;
    match &cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Extract => commands::extract(&ctx),
        Command::FitMetric => commands::fit_metric(&ctx),
        Command::Train { role } => commands::train(&ctx, *role),
        Command::Distill => commands::distill(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Eval { methods } => commands::eval(&ctx, methods),
        Command::Bench { methods } => commands::bench(&ctx, methods),
        Command::Report { methods } => commands::report(&ctx, methods),
        Command::ShowConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(2, "usage", e.render().to_string().trim().to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            fail(code, kind, e.to_string())
        }
    }
}
