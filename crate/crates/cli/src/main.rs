//! `micclust`: censored mixture clustering of MIC data from the command line.

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{ecoff, eval, fit, gwas, pipeline, postprocess, simulate};
use config::ConfigFile;
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "micclust", version, about = "Bayesian clustering of censored MIC dilution data")]
struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic study: MIC data, grid, genotypes and truth sets.
    Simulate(simulate::SimulateArgs),
    /// Run MCMC chains for one drug.
    Fit(fit::FitArgs),
    /// Relabel and pool a fit; write allocations, cluster summaries and diagnostics.
    Postprocess(postprocess::PostprocessArgs),
    /// Fit the wild-type log-normal and report cutoffs.
    Ecoff(ecoff::EcoffArgs),
    /// True-positive and true-negative rate tables.
    Eval(eval::EvalArgs),
    /// Spike-and-slab association of cluster labels with variants.
    Gwas(gwas::GwasArgs),
    /// fit, postprocess, ECOFF, GWAS and evaluation in one run.
    Pipeline(pipeline::PipelineArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => simulate::execute(a, &file),
        Command::Fit(a) => fit::execute(a, &file),
        Command::Postprocess(a) => postprocess::execute(a, &file),
        Command::Ecoff(a) => ecoff::execute(a, &file),
        Command::Eval(a) => eval::execute(a, &file),
        Command::Gwas(a) => gwas::execute(a, &file),
        Command::Pipeline(a) => pipeline::execute(a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn fit_flags_parse() {
        let cli = Cli::try_parse_from([
            "micclust", "fit", "--data", "d.csv", "--grid", "g.csv", "--method", "cgmm", "--drug", "RIF", "--iters",
            "20000", "--burnin", "2000", "--thin", "10", "--seed", "7", "--out", "o",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else { panic!("expected fit") };
        assert_eq!(a.data.drug.as_deref(), Some("RIF"));
        assert_eq!(
            (a.chain.iters, a.chain.burnin, a.chain.thin, a.chain.seed),
            (Some(20000), Some(2000), Some(10), Some(7))
        );
        assert!(Cli::try_parse_from(["micclust", "fit", "--bogus"]).is_err());
    }
}
