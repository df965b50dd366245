//! Error types shared across the simulator.

use thiserror::Error;

/// Errors raised while validating or deriving line configurations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    /// The cycle equation has no positive headway solution: the fleet cannot
    /// absorb the dwell time generated by the demand.
    #[error("infeasible fleet: {fleet} buses cannot serve demand (denominator {denominator:.6} <= 0)")]
    InfeasibleFleet { fleet: u32, denominator: f64 },
    #[error("line sampling did not converge for stop {stop} after {attempts} attempts")]
    SamplingFailed { stop: u32, attempts: u32 },
}

/// Errors raised by the simulation kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("horizon of {horizon_cycles} cycles ended at t={last_departure_s:.3}s, before the evaluation window closed at t={required_s:.3}s")]
    HorizonTooShort {
        horizon_cycles: u32,
        last_departure_s: f64,
        required_s: f64,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Errors raised while reducing a simulation log to metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("invalid metric input: {0}")]
    Invalid(String),
}

/// Errors raised by the Monte Carlo harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("all {0} iterations produced undefined metrics")]
    EmptyCell(u32),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
