//! Evaluation metrics computed from a simulation log.
//!
//! Average waiting, in-vehicle, and walking times come from areas between the
//! cumulative passenger curves, clipped to the evaluation window. The
//! weighted travel cost is compared against the deterministic expected cost
//! to quantify the overhead caused by bunching.

use crate::curves::area_between;
use crate::domain::{LineInstance, LineParameters};
use crate::engine::SimulationOutput;
use crate::error::MetricsError;

const SECONDS_PER_MINUTE: f64 = 60.0;

/// Per-run metric vector. Times are minutes, percentages are 0-100.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub avg_wait_min: f64,
    pub avg_in_vehicle_min: f64,
    pub avg_walk_min: f64,
    /// Weighted travel cost: `wait_weight * wait + in_vehicle + walk_weight * walk`.
    pub avg_cost_min: f64,
    /// Deterministic cost in the absence of stochasticity.
    pub expected_cost_min: f64,
    /// Percentage excess of the realized cost over the expected cost.
    pub overhead_pct: f64,
    /// Headway MAPE over every passing entity.
    pub mape_all_pct: f64,
    /// Headway MAPE over serving departures only.
    pub mape_served_pct: f64,
    /// Mean duration of completed cycles overlapping the window; undefined
    /// when no cycle completes.
    pub avg_cycle_min: Option<f64>,
    pub avg_load_pax: f64,
    /// Fraction of serving arrivals with the entity at full capacity.
    pub frac_full: f64,
    pub arrived: f64,
    pub boarded: f64,
    pub alighted: f64,
    pub cap_binding_events: u64,
    /// The stop queues grew materially over the window: demand exceeded the
    /// effective capacity.
    pub oversaturated: bool,
}

/// Average (waiting, in-vehicle, walking) times in minutes over `[t0, t1]`.
pub fn average_times(
    output: &SimulationOutput,
    t0: f64,
    t1: f64,
) -> Result<(f64, f64, f64), MetricsError> {
    let arrived = output.arrivals.count_between(t0, t1);
    let boarded = output.boardings.count_between(t0, t1);
    let alighted = output.alightings.count_between(t0, t1);

    let wait_events = 0.5 * (arrived + boarded);
    if wait_events <= 0.0 {
        return Err(MetricsError::Undefined(
            "no passenger arrivals or boardings in the evaluation window".into(),
        ));
    }
    let waiting_area = area_between(&output.arrivals, &output.boardings, t0, t1);
    let avg_wait = waiting_area / wait_events;

    let ride_events = 0.5 * (boarded + alighted);
    if ride_events <= 0.0 {
        return Err(MetricsError::Undefined(
            "no boardings or alightings in the evaluation window".into(),
        ));
    }
    // On-board count = initial loads + boardings - alightings.
    let onboard_area = f64::from(output.initial_onboard) * (t1 - t0)
        + area_between(&output.boardings, &output.alightings, t0, t1);
    let avg_in_vehicle = onboard_area / ride_events;

    let walk_person_seconds: f64 = output
        .walk_records
        .iter()
        .map(|record| {
            let start = record.alight_time_s;
            let end = record.alight_time_s + record.walk_duration_s;
            let overlap = (end.min(t1) - start.max(t0)).max(0.0);
            overlap * f64::from(record.passengers)
        })
        .sum();
    let avg_walk = if walk_person_seconds > 0.0 {
        if alighted <= 0.0 {
            return Err(MetricsError::Undefined(
                "walk records present but no alightings in the window".into(),
            ));
        }
        walk_person_seconds / alighted
    } else {
        0.0
    };

    Ok((
        avg_wait / SECONDS_PER_MINUTE,
        avg_in_vehicle / SECONDS_PER_MINUTE,
        avg_walk / SECONDS_PER_MINUTE,
    ))
}

/// Deterministic travel cost `(wait_weight + N) * H / 2`, in minutes.
pub fn expected_cost_min(fleet: u32, target_headway_s: f64, wait_weight: f64) -> f64 {
    (wait_weight + f64::from(fleet)) * target_headway_s / 2.0 / SECONDS_PER_MINUTE
}

/// Bunching overhead: the realized cost's excess over the expected cost, as a
/// percentage of the latter.
pub fn bunching_overhead(avg_cost_min: f64, expected_cost_min: f64) -> Result<f64, MetricsError> {
    if expected_cost_min <= 0.0 {
        return Err(MetricsError::Invalid(format!(
            "expected cost must be positive, got {expected_cost_min}"
        )));
    }
    Ok((avg_cost_min - expected_cost_min) / expected_cost_min * 100.0)
}

/// Which departures the headway MAPE runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadwayMode {
    /// Every passing entity's departing headway, served or not.
    AllEntities,
    /// Headways between consecutive serving departures at each stop.
    ServedOnly,
}

/// Mean absolute percentage deviation of departing headways from the target,
/// over departures inside `[t0, t1]`.
pub fn headway_mape(
    output: &SimulationOutput,
    target_headway_s: f64,
    mode: HeadwayMode,
    t0: f64,
    t1: f64,
) -> Result<f64, MetricsError> {
    let groups = output.run_stop_headways();
    let mut deviations: Vec<f64> = Vec::new();
    match mode {
        HeadwayMode::AllEntities => {
            for group in &groups {
                if group.departure_s >= t0 && group.departure_s <= t1 {
                    deviations
                        .push((group.departing_headway_s - target_headway_s).abs() / target_headway_s);
                }
            }
        }
        HeadwayMode::ServedOnly => {
            // Groups are sorted by (stop, run); walk each stop's serving
            // departures in run order.
            let mut current_stop = u32::MAX;
            let mut prev_departure: Option<f64> = None;
            for group in &groups {
                if group.stop != current_stop {
                    current_stop = group.stop;
                    prev_departure = None;
                }
                if !group.served {
                    continue;
                }
                let headway = match prev_departure {
                    Some(prev) => group.departure_s - prev,
                    // First serving visit in the log: its stored headway
                    // references the schedule-derived virtual predecessor.
                    None => group.departing_headway_s,
                };
                if group.departure_s >= t0 && group.departure_s <= t1 {
                    deviations.push((headway - target_headway_s).abs() / target_headway_s);
                }
                prev_departure = Some(group.departure_s);
            }
        }
    }
    if deviations.is_empty() {
        return Err(MetricsError::Undefined(
            "no departing headways in the evaluation window".into(),
        ));
    }
    Ok(deviations.iter().sum::<f64>() / deviations.len() as f64 * 100.0)
}

/// Cycle length, load, and full-bus statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct OpsMetrics {
    pub avg_cycle_min: Option<f64>,
    pub avg_load_pax: f64,
    pub frac_full: f64,
}

/// Operational metrics over serving arrivals and completed cycles that
/// overlap `[t0, t1]`.
pub fn operations_metrics(output: &SimulationOutput, t0: f64, t1: f64) -> OpsMetrics {
    let mut serving = 0u64;
    let mut full = 0u64;
    let mut load_sum = 0.0f64;
    for visit in &output.visits {
        if visit.served && visit.arrival_s >= t0 && visit.arrival_s <= t1 {
            serving += 1;
            load_sum += f64::from(visit.load_at_arrival);
            if visit.load_at_arrival == visit.capacity_at_arrival {
                full += 1;
            }
        }
    }
    let (avg_load, frac_full) = if serving > 0 {
        (load_sum / serving as f64, full as f64 / serving as f64)
    } else {
        (0.0, 0.0)
    };

    // A cycle of bus n spans consecutive canonical arrivals at stop 1.
    let mut stop1: Vec<(u32, f64)> = Vec::new();
    for visit in &output.visits {
        if visit.stop == 1 {
            match stop1.iter_mut().rev().find(|(run, _)| *run == visit.run) {
                Some(entry) => entry.1 = entry.1.max(visit.arrival_s),
                None => stop1.push((visit.run, visit.arrival_s)),
            }
        }
    }
    stop1.sort_by_key(|(run, _)| *run);
    let fleet = output.fleet_size;
    let mut cycle_sum = 0.0f64;
    let mut cycle_count = 0u32;
    for (run, start) in &stop1 {
        if let Some((_, end)) = stop1.iter().find(|(r, _)| *r == run + fleet) {
            if *end >= t0 && *start <= t1 {
                cycle_sum += end - start;
                cycle_count += 1;
            }
        }
    }
    let avg_cycle_min = if cycle_count > 0 {
        Some(cycle_sum / f64::from(cycle_count) / SECONDS_PER_MINUTE)
    } else {
        None
    };

    OpsMetrics {
        avg_cycle_min,
        avg_load_pax: avg_load,
        frac_full,
    }
}

/// Assemble the full metric vector for one simulation run, evaluated over the
/// output's own window.
pub fn compute_report(
    params: &LineParameters,
    instance: &LineInstance,
    output: &SimulationOutput,
) -> Result<MetricsReport, MetricsError> {
    let t0 = output.eval_start_s;
    let t1 = output.eval_end_s;
    let (avg_wait, avg_in_vehicle, avg_walk) = average_times(output, t0, t1)?;
    let avg_cost = params.wait_weight * avg_wait + avg_in_vehicle + params.walk_weight * avg_walk;
    let expected =
        expected_cost_min(instance.fleet_size, instance.target_headway_s, params.wait_weight);
    let overhead = bunching_overhead(avg_cost, expected)?;
    let mape_all = headway_mape(
        output,
        instance.target_headway_s,
        HeadwayMode::AllEntities,
        t0,
        t1,
    )?;
    let mape_served = headway_mape(
        output,
        instance.target_headway_s,
        HeadwayMode::ServedOnly,
        t0,
        t1,
    )?;
    let ops = operations_metrics(output, t0, t1);

    let arrived = output.arrivals.count_between(t0, t1);
    let boarded = output.boardings.count_between(t0, t1);
    let alighted = output.alightings.count_between(t0, t1);
    let waiting_start = output.arrivals.value_at(t0) - output.boardings.value_at(t0);
    let waiting_end = output.arrivals.value_at(t1) - output.boardings.value_at(t1);
    let oversaturated = waiting_end - waiting_start > 0.1 * arrived.max(1.0);

    Ok(MetricsReport {
        avg_wait_min: avg_wait,
        avg_in_vehicle_min: avg_in_vehicle,
        avg_walk_min: avg_walk,
        avg_cost_min: avg_cost,
        expected_cost_min: expected,
        overhead_pct: overhead,
        mape_all_pct: mape_all,
        mape_served_pct: mape_served,
        avg_cycle_min: ops.avg_cycle_min,
        avg_load_pax: ops.avg_load_pax,
        frac_full: ops.frac_full,
        arrived,
        boarded,
        alighted,
        cap_binding_events: output.cap_binding_events,
        oversaturated,
    })
}
