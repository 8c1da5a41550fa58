//! `allpay`: reports on all-pay auction equilibria with budget-constrained
//! bidders and the competitive-search market built on them.

mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "allpay",
    version,
    about = "Equilibrium and simulation reports for all-pay auctions with budget-constrained bidders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one store's bidding game and compare auction formats
    Equilibrium(commands::EquilibriumArgs),
    /// Tabulate the equilibrium bid distributions as CSV
    Bidcdf(commands::BidcdfArgs),
    /// Monte Carlo check of analytic payoffs for a store or a market
    Simulate(commands::SimulateArgs),
    /// Symmetric market equilibrium and both format-deviation checks
    Market(commands::MarketArgs),
    /// Profitable all-pay deviation against a standard-posting market
    Deviate(commands::DeviateArgs),
    /// Grid of analytic quantities and invariant residuals as CSV
    Sweep(commands::SweepArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Equilibrium(args) => commands::equilibrium(args),
        Command::Bidcdf(args) => commands::bidcdf(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Market(args) => commands::market(args),
        Command::Deviate(args) => commands::deviate(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
