//! `busline`: simulate a cyclic bus line under no-control, stop-skipping, or
//! bus-splitting policies, and export visit logs, cumulative passenger
//! curves, and Monte Carlo metric tables as CSV.

use busline_cli::config::{self, ConfigPolicy, EmitKind};
use busline_cli::{resolve, run_fleet_table, run_simulate, run_sweep, CliError, Overrides};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "busline", version, about)]
struct Cli {
    /// TOML configuration file; omitted keys use the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Control policy: none, stop-skipping, or bus-splitting.
    #[arg(long, global = true)]
    policy: Option<ConfigPolicy>,

    /// Control threshold (multiple of the target headway).
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Hourly passenger demand along the line.
    #[arg(long, global = true)]
    demand: Option<f64>,

    /// Monte Carlo iterations per parameter combination.
    #[arg(long, global = true)]
    iterations: Option<u32>,

    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated list of emitters: visits,curves,metrics.
    #[arg(long, global = true, value_delimiter = ',')]
    emit: Option<Vec<EmitKind>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seeded line instance and emit its full logs.
    Simulate,
    /// Run the demand and threshold sweeps and emit metric tables.
    Sweep,
    /// Print fleet size and target headway for each demand level.
    FleetTable,
    /// Print the default configuration.
    Defaults,
}

fn env_seed() -> Option<u64> {
    std::env::var("BUSLINE_SEED").ok().and_then(|v| v.parse().ok())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        policy: cli.policy,
        eta: cli.eta,
        demand: cli.demand,
        iterations: cli.iterations,
        seed: cli.seed,
        out: cli.out,
        emit: cli.emit,
    };
    match cli.command {
        Command::Defaults => {
            print!("{}", config::serialize_config(&config::RunConfig::default()));
            Ok(())
        }
        Command::Simulate => {
            let inv = resolve(cli.config.as_deref(), overrides, env_seed())?;
            run_simulate(&inv.config, &inv.params, &inv.out_dir)
        }
        Command::Sweep => {
            let inv = resolve(cli.config.as_deref(), overrides, env_seed())?;
            run_sweep(&inv.config, &inv.params, &inv.out_dir)
        }
        Command::FleetTable => {
            let inv = resolve(cli.config.as_deref(), overrides, env_seed())?;
            let stdout = std::io::stdout();
            run_fleet_table(&mut stdout.lock(), &inv.params, &inv.config.sweep_demands)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
