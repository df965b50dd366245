//! Monte Carlo harness: seeded iterations per configuration, mean/std
//! aggregation, and the demand and threshold sweeps.

use crate::domain::{self, LineInstance, LineParameters, PolicyKind, PolicySpec};
use crate::engine::{self, simulate, SimulationOutput};
use crate::error::ExperimentError;
use crate::metrics::{compute_report, MetricsReport};
use crate::rng::{SubstreamFactory, SubstreamSource};
use rayon::prelude::*;

/// Mean and standard deviation of one metric across iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
    /// Iterations in which the metric was defined.
    pub samples: u32,
}

impl MetricStat {
    fn from_values(values: &[f64]) -> MetricStat {
        let n = values.len();
        if n == 0 {
            return MetricStat {
                mean: f64::NAN,
                std: f64::NAN,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MetricStat {
            mean,
            std,
            samples: n as u32,
        }
    }
}

/// Aggregated metric statistics for one parameter combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub avg_wait_min: MetricStat,
    pub avg_in_vehicle_min: MetricStat,
    pub avg_walk_min: MetricStat,
    pub avg_cost_min: MetricStat,
    pub expected_cost_min: MetricStat,
    pub overhead_pct: MetricStat,
    pub mape_all_pct: MetricStat,
    pub mape_served_pct: MetricStat,
    pub avg_cycle_min: MetricStat,
    pub avg_load_pax: MetricStat,
    pub frac_full: MetricStat,
    pub arrived: MetricStat,
    pub boarded: MetricStat,
    pub alighted: MetricStat,
    pub cap_binding_events: MetricStat,
    pub oversaturated: MetricStat,
}

impl CellStats {
    /// Stable field order for emission.
    pub fn fields(&self) -> [(&'static str, &MetricStat); 16] {
        [
            ("avg_wait_min", &self.avg_wait_min),
            ("avg_in_vehicle_min", &self.avg_in_vehicle_min),
            ("avg_walk_min", &self.avg_walk_min),
            ("avg_cost_min", &self.avg_cost_min),
            ("expected_cost_min", &self.expected_cost_min),
            ("overhead_pct", &self.overhead_pct),
            ("mape_all_pct", &self.mape_all_pct),
            ("mape_served_pct", &self.mape_served_pct),
            ("avg_cycle_min", &self.avg_cycle_min),
            ("avg_load_pax", &self.avg_load_pax),
            ("frac_full", &self.frac_full),
            ("arrived", &self.arrived),
            ("boarded", &self.boarded),
            ("alighted", &self.alighted),
            ("cap_binding_events", &self.cap_binding_events),
            ("oversaturated", &self.oversaturated),
        ]
    }
}

/// One aggregated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub policy: PolicyKind,
    /// Control threshold (0 for the uncontrolled reference).
    pub eta: f64,
    pub demand: f64,
    pub fleet_size: u32,
    pub target_headway_s: f64,
    pub iterations: u32,
    /// Iterations that produced no defined metric vector at all.
    pub failed_iterations: u32,
    pub stats: CellStats,
}

/// A grid point together with its result; failed cells keep the sweep going.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub policy: PolicyKind,
    pub eta: f64,
    pub demand: f64,
    pub result: Result<SweepCell, ExperimentError>,
}

/// Sample a line and simulate one seeded iteration, returning the realization
/// and the full output. The line is resampled per iteration unless the
/// parameters freeze it.
pub fn simulate_iteration(
    params: &LineParameters,
    iteration: u32,
) -> Result<(LineInstance, SimulationOutput), ExperimentError> {
    let line_iteration = if params.freeze_line { 0 } else { iteration };
    let line_factory = SubstreamFactory::new(params.master_seed, line_iteration);
    let instance = domain::sample_line(params, &line_factory)?;
    let factory = SubstreamFactory::new(params.master_seed, iteration);
    let source = SubstreamSource::new(factory, params.noise_shape, params.noise_scale_fraction);
    let horizon = engine::default_horizon_cycles(params, &instance);
    let output = simulate(params, &instance, &source, horizon)?;
    Ok((instance, output))
}

fn one_report(params: &LineParameters, iteration: u32) -> Option<MetricsReport> {
    let (instance, output) = simulate_iteration(params, iteration).ok()?;
    compute_report(params, &instance, &output).ok()
}

/// Run all iterations for one parameter set and aggregate.
///
/// Iterations fan out to the rayon pool; reports are collected in iteration
/// order before aggregating, so results do not depend on scheduling.
pub fn run_iterations(params: &LineParameters) -> Result<SweepCell, ExperimentError> {
    params.validate().map_err(ExperimentError::Domain)?;
    let fleet = domain::fleet_size(params);
    let headway = domain::target_headway(params, fleet).map_err(ExperimentError::Domain)?;
    let n_iter = params.iteration_count;

    let reports: Vec<Option<MetricsReport>> = (0..n_iter)
        .into_par_iter()
        .map(|i| one_report(params, i))
        .collect();

    let defined: Vec<&MetricsReport> = reports.iter().flatten().collect();
    if defined.is_empty() {
        return Err(ExperimentError::EmptyCell(n_iter));
    }
    let failed = n_iter - defined.len() as u32;

    let collect = |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> {
        defined.iter().map(|r| f(r)).collect()
    };
    let stat = |f: &dyn Fn(&MetricsReport) -> f64| MetricStat::from_values(&collect(f));

    let cycle_values: Vec<f64> = defined.iter().filter_map(|r| r.avg_cycle_min).collect();

    let stats = CellStats {
        avg_wait_min: stat(&|r| r.avg_wait_min),
        avg_in_vehicle_min: stat(&|r| r.avg_in_vehicle_min),
        avg_walk_min: stat(&|r| r.avg_walk_min),
        avg_cost_min: stat(&|r| r.avg_cost_min),
        expected_cost_min: stat(&|r| r.expected_cost_min),
        overhead_pct: stat(&|r| r.overhead_pct),
        mape_all_pct: stat(&|r| r.mape_all_pct),
        mape_served_pct: stat(&|r| r.mape_served_pct),
        avg_cycle_min: MetricStat::from_values(&cycle_values),
        avg_load_pax: stat(&|r| r.avg_load_pax),
        frac_full: stat(&|r| r.frac_full),
        arrived: stat(&|r| r.arrived),
        boarded: stat(&|r| r.boarded),
        alighted: stat(&|r| r.alighted),
        cap_binding_events: stat(&|r| r.cap_binding_events as f64),
        oversaturated: stat(&|r| if r.oversaturated { 1.0 } else { 0.0 }),
    };

    Ok(SweepCell {
        policy: params.policy.kind,
        eta: if params.policy.kind == PolicyKind::NoControl {
            0.0
        } else {
            params.policy.threshold
        },
        demand: params.hourly_demand,
        fleet_size: fleet,
        target_headway_s: headway,
        iterations: n_iter,
        failed_iterations: failed,
        stats,
    })
}

fn cell_for(base: &LineParameters, policy: PolicySpec, demand: f64) -> SweepOutcome {
    let params = LineParameters {
        policy,
        hourly_demand: demand,
        ..base.clone()
    };
    let result = run_iterations(&params);
    SweepOutcome {
        policy: policy.kind,
        eta: if policy.kind == PolicyKind::NoControl {
            0.0
        } else {
            policy.threshold
        },
        demand,
        result,
    }
}

/// All three policies across a list of demand levels; the fleet and headway
/// are re-derived per demand so the target cycle time and load stay constant.
pub fn demand_sweep(base: &LineParameters, demands: &[f64], eta: f64) -> Vec<SweepOutcome> {
    let mut outcomes = Vec::with_capacity(3 * demands.len());
    for policy in [
        PolicySpec::no_control(),
        PolicySpec::stop_skipping(eta),
        PolicySpec::bus_splitting(eta),
    ] {
        for &demand in demands {
            outcomes.push(cell_for(base, policy, demand));
        }
    }
    outcomes
}

/// Both control policies across a list of thresholds at a fixed demand, plus
/// one uncontrolled reference cell.
pub fn threshold_sweep(base: &LineParameters, thresholds: &[f64], demand: f64) -> Vec<SweepOutcome> {
    let mut outcomes = Vec::with_capacity(2 * thresholds.len() + 1);
    outcomes.push(cell_for(base, PolicySpec::no_control(), demand));
    for make in [PolicySpec::stop_skipping, PolicySpec::bus_splitting] {
        for &eta in thresholds {
            outcomes.push(cell_for(base, make(eta), demand));
        }
    }
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_params() -> LineParameters {
        LineParameters {
            iteration_count: 2,
            ..LineParameters::default()
        }
    }

    #[test]
    fn single_iteration_has_zero_std() {
        let params = LineParameters {
            iteration_count: 1,
            ..LineParameters::default()
        };
        let cell = run_iterations(&params).unwrap();
        for (name, stat) in cell.stats.fields() {
            assert_eq!(stat.std, 0.0, "{name}");
        }
    }

    #[test]
    fn same_seed_same_cell() {
        let params = fast_params();
        let a = run_iterations(&params).unwrap();
        let b = run_iterations(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn never_triggering_policy_matches_no_control() {
        let base = fast_params();
        let none = run_iterations(&base).unwrap();
        let split = run_iterations(&LineParameters {
            policy: PolicySpec::bus_splitting(1e9),
            ..base.clone()
        })
        .unwrap();
        assert_eq!(none.stats, split.stats);
        let skip = run_iterations(&LineParameters {
            policy: PolicySpec::stop_skipping(1e9),
            ..base
        })
        .unwrap();
        assert_eq!(none.stats, skip.stats);
    }

    #[test]
    fn demand_sweep_grid_shape() {
        let base = LineParameters {
            iteration_count: 1,
            ..LineParameters::default()
        };
        let demands: Vec<f64> = (1..=10).map(|k| f64::from(k) * 250.0).collect();
        let outcomes = demand_sweep(&base, &demands, 1.5);
        assert_eq!(outcomes.len(), 30);
        let expected_fleet = [2u32, 4, 6, 8, 10, 12, 14, 16, 18, 20];
        for outcome in &outcomes {
            let cell = outcome.result.as_ref().unwrap();
            let i = (outcome.demand / 250.0) as usize - 1;
            assert_eq!(cell.fleet_size, expected_fleet[i]);
            // Cell design agrees with an independent recomputation.
            let params = LineParameters {
                hourly_demand: outcome.demand,
                ..base.clone()
            };
            assert_eq!(cell.fleet_size, domain::fleet_size(&params));
            let h = domain::target_headway(&params, cell.fleet_size).unwrap();
            assert_eq!(cell.target_headway_s, h);
        }
    }

    #[test]
    fn threshold_sweep_grid_shape() {
        let base = LineParameters {
            iteration_count: 1,
            ..LineParameters::default()
        };
        let outcomes = threshold_sweep(&base, &[1.1, 1.3, 1.5, 1.7, 1.9], 1500.0);
        assert_eq!(outcomes.len(), 11);
        assert_eq!(outcomes[0].policy, PolicyKind::NoControl);
    }

    #[test]
    fn no_control_reference_cell_matches_across_sweeps() {
        let base = LineParameters {
            iteration_count: 2,
            ..LineParameters::default()
        };
        let demand_cells = demand_sweep(&base, &[1500.0], 1.5);
        let threshold_cells = threshold_sweep(&base, &[1.5], 1500.0);
        let from_demand = demand_cells
            .iter()
            .find(|o| o.policy == PolicyKind::NoControl)
            .unwrap();
        let from_threshold = threshold_cells
            .iter()
            .find(|o| o.policy == PolicyKind::NoControl)
            .unwrap();
        assert_eq!(
            from_demand.result.as_ref().unwrap(),
            from_threshold.result.as_ref().unwrap()
        );
    }

    #[test]
    fn infeasible_cell_fails_without_stopping_sweep() {
        let base = LineParameters {
            iteration_count: 1,
            ..LineParameters::default()
        };
        let outcomes = demand_sweep(&base, &[0.0, 1500.0], 1.5);
        assert_eq!(outcomes.len(), 6);
        for outcome in &outcomes {
            if outcome.demand == 0.0 {
                assert!(outcome.result.is_err());
            } else {
                assert!(outcome.result.is_ok());
            }
        }
    }
}
