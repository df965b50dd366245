//! Command implementations behind the `busline` binary.

pub mod config;
pub mod emit;

use busline_core::domain::{self, LineParameters};
use busline_core::error::{DomainError, EngineError, ExperimentError, MetricsError};
use busline_core::experiments::{self, SweepOutcome};
use busline_core::metrics::compute_report;
use config::{ConfigError, EmitKind, RunConfig};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// Process exit code: 1 configuration, 2 runtime/infeasibility, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn create_output_file(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// `simulate`: one seeded instance with full logs.
pub fn run_simulate(
    config: &RunConfig,
    params: &LineParameters,
    out_dir: &Path,
) -> Result<(), CliError> {
    let (instance, output) = experiments::simulate_iteration(params, 0)?;

    if config.emit.contains(&EmitKind::Visits) {
        let mut file = create_output_file(out_dir, "visits.csv")?;
        emit::emit_visits(&mut file, &output, 0)?;
        file.flush()?;
    }
    if config.emit.contains(&EmitKind::Curves) {
        let mut file = create_output_file(out_dir, "curves.csv")?;
        emit::emit_curves(&mut file, &output, params.policy.kind)?;
        file.flush()?;
    }
    if config.emit.contains(&EmitKind::Metrics) {
        let single = LineParameters {
            iteration_count: 1,
            ..params.clone()
        };
        match experiments::run_iterations(&single) {
            Ok(cell) => {
                let mut file = create_output_file(out_dir, "metrics.csv")?;
                let outcome = SweepOutcome {
                    policy: cell.policy,
                    eta: cell.eta,
                    demand: cell.demand,
                    result: Ok(cell),
                };
                emit::emit_metrics(&mut file, std::slice::from_ref(&outcome))?;
                file.flush()?;
            }
            Err(e) => eprintln!("warning: metrics undefined for this run: {e}"),
        }
    }

    match compute_report(params, &instance, &output) {
        Ok(report) => {
            println!(
                "simulated {} runs of {} buses over {} stops (seed {})",
                output.horizon_cycles * output.fleet_size,
                output.fleet_size,
                output.stop_count,
                params.master_seed
            );
            println!(
                "  policy {} | avg cost {:.2} min | overhead {:.1}% | headway MAPE {:.1}%",
                params.policy.kind.label(),
                report.avg_cost_min,
                report.overhead_pct,
                report.mape_all_pct
            );
        }
        Err(e) => eprintln!("warning: metrics undefined for this run: {e}"),
    }
    Ok(())
}

/// `sweep`: the demand grid (all policies) and the threshold grid, each to
/// its own metrics table.
pub fn run_sweep(config: &RunConfig, params: &LineParameters, out_dir: &Path) -> Result<(), CliError> {
    let demand_outcomes = experiments::demand_sweep(params, &config.sweep_demands, config.eta);
    report_failures(&demand_outcomes);
    let mut file = create_output_file(out_dir, "sweep_demand.csv")?;
    emit::emit_metrics(&mut file, &demand_outcomes)?;
    file.flush()?;

    let threshold_outcomes =
        experiments::threshold_sweep(params, &config.sweep_thresholds, params.hourly_demand);
    report_failures(&threshold_outcomes);
    let mut file = create_output_file(out_dir, "sweep_threshold.csv")?;
    emit::emit_metrics(&mut file, &threshold_outcomes)?;
    file.flush()?;

    let ok = demand_outcomes.iter().filter(|o| o.result.is_ok()).count()
        + threshold_outcomes.iter().filter(|o| o.result.is_ok()).count();
    println!(
        "swept {} cells ({} demand, {} threshold), {} succeeded",
        demand_outcomes.len() + threshold_outcomes.len(),
        demand_outcomes.len(),
        threshold_outcomes.len(),
        ok
    );
    Ok(())
}

fn report_failures(outcomes: &[SweepOutcome]) {
    for outcome in outcomes {
        if let Err(e) = &outcome.result {
            eprintln!(
                "warning: cell (policy {}, eta {}, demand {}) failed: {e}",
                outcome.policy.label(),
                outcome.eta,
                outcome.demand
            );
        }
    }
}

/// `fleet-table`: fleet size and target headway per demand level.
pub fn run_fleet_table<W: Write>(
    writer: &mut W,
    params: &LineParameters,
    demands: &[f64],
) -> Result<(), CliError> {
    writeln!(writer, "demand_pax_h,fleet_size,target_headway_min")?;
    for &demand in demands {
        let cell_params = LineParameters {
            hourly_demand: demand,
            ..params.clone()
        };
        let fleet = domain::fleet_size(&cell_params);
        let headway = domain::target_headway(&cell_params, fleet)?;
        writeln!(writer, "{demand},{fleet},{:.1}", headway / 60.0)?;
    }
    Ok(())
}

/// Resolved invocation after merging config file and command-line overrides.
pub struct Invocation {
    pub config: RunConfig,
    pub params: LineParameters,
    pub out_dir: PathBuf,
}

pub struct Overrides {
    pub policy: Option<config::ConfigPolicy>,
    pub eta: Option<f64>,
    pub demand: Option<f64>,
    pub iterations: Option<u32>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub emit: Option<Vec<EmitKind>>,
}

/// Load the configuration file (if any), apply command-line overrides, and
/// resolve the seed (flag, then config, then `BUSLINE_SEED`, then default).
pub fn resolve(
    config_path: Option<&Path>,
    overrides: Overrides,
    env_seed: Option<u64>,
) -> Result<Invocation, CliError> {
    let text = match config_path {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut config = config::parse_config(&text)?;
    if let Some(policy) = overrides.policy {
        config.policy = policy;
    }
    if let Some(eta) = overrides.eta {
        config.eta = eta;
    }
    if let Some(demand) = overrides.demand {
        config.hourly_demand = demand;
    }
    if let Some(iterations) = overrides.iterations {
        config.iterations = iterations;
    }
    if let Some(seed) = overrides.seed {
        config.master_seed = Some(seed);
    }
    if let Some(emit) = overrides.emit {
        config.emit = emit;
    }
    let out_dir = overrides
        .out
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    let seed = config.resolve_seed(env_seed);
    let params = config.to_line_parameters(seed)?;
    Ok(Invocation {
        config,
        params,
        out_dir,
    })
}
