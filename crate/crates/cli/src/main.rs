use std::process::ExitCode;

use clap::{Parser, Subcommand};

use harris_cli::output::Document;
use harris_cli::{commands, suite, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "harris",
    version,
    about = "Harris distribution, pure-birth process and gamma-mixed Poisson counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the Harris pmf.
    Pmf(RunConfig),
    /// Compare the closed-form pgf with the pmf series and check its slope at 1.
    Pgf(RunConfig),
    /// Simulate a model and test the sample against its Harris law.
    Simulate(RunConfig),
    /// Integrate the forward equations and compare with the closed form.
    Ode(RunConfig),
    /// Compare the mixture pmf with quadrature of the mixing integral.
    MixtureCheck(RunConfig),
    /// Run the full validation grid.
    Validate(RunConfig),
}

type Builder = fn(&RunConfig) -> anyhow::Result<Document>;

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (config, build): (&RunConfig, Builder) = match &cli.command {
        Command::Pmf(c) => (c, commands::pmf),
        Command::Pgf(c) => (c, commands::pgf),
        Command::Simulate(c) => (c, commands::simulate),
        Command::Ode(c) => (c, commands::ode),
        Command::MixtureCheck(c) => (c, commands::mixture_check),
        Command::Validate(c) => (c, suite::validate),
    };
    if let Some(n) = config.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let doc = build(config)?;
    let text = doc.render(config.format);
    match &config.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(doc.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
