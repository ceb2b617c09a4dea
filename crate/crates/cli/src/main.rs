//! `skewlab`: reproducible experiment driver.

mod artifact;
mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use commands::{Ctx, Outcome};
use config::RawConfig;
use error::CliError;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Green,
    Slice,
    Sample,
    Compare,
    Lyapunov,
    Periodic,
    Audit,
    NormalForm,
    Sigma,
    Probe,
    Foliation,
    ProductStructure,
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Green => "green",
            Command::Slice => "slice",
            Command::Sample => "sample",
            Command::Compare => "compare",
            Command::Lyapunov => "lyapunov",
            Command::Periodic => "periodic",
            Command::Audit => "audit",
            Command::NormalForm => "normal-form",
            Command::Sigma => "sigma",
            Command::Probe => "probe",
            Command::Foliation => "foliation",
            Command::ProductStructure => "product-structure",
            Command::Report => "report",
        }
    }
}

/// Exit status: 0 pass, 1 contract error, 2 budget exceeded, 3 soft failure.
#[derive(Parser, Debug)]
#[command(name = "skewlab", version, about = "Experiments on pencil-preserving endomorphisms of the projective plane")]
struct Args {
    command: Command,
    /// TOML config: common keys (map, seed, precision, threads) plus one table per command.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set n_steps=1e5` or `--set lyapunov.forward=true`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(args: &Args) -> Result<Outcome, CliError> {
    let name = args.command.name();
    let mut raw = match &args.config {
        Some(p) => {
            RawConfig::parse(&std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?)?
        }
        None => RawConfig::default(),
    };
    for s in &args.set {
        raw.set(name, s)?;
    }
    let ctx = Ctx { out: args.out.clone(), raw };
    match args.command {
        Command::Green => commands::green(&ctx),
        Command::Slice => commands::slice(&ctx),
        Command::Sample => commands::sample(&ctx),
        Command::Compare => commands::compare(&ctx),
        Command::Lyapunov => commands::lyapunov_cmd(&ctx),
        Command::Periodic => commands::periodic(&ctx),
        Command::Audit => commands::audit(&ctx),
        Command::NormalForm => commands::normal_form(&ctx),
        Command::Sigma => commands::sigma(&ctx),
        Command::Probe => commands::probe(&ctx),
        Command::Foliation => commands::foliation(&ctx),
        Command::ProductStructure => commands::product_structure(&ctx),
        Command::Report => report::report(&ctx),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.soft {
                eprintln!("skewlab {}: some checks failed (see the JSON summary)", args.command.name());
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("skewlab {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
