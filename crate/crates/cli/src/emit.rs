//! Comma-delimited output writers for visit logs, cumulative curves, and
//! aggregated metric tables. Column order and number formatting are fixed so
//! the files are stable across runs and platforms; newlines are line feeds.

use busline_core::curves::CumulativeCurve;
use busline_core::domain::PolicyKind;
use busline_core::engine::SimulationOutput;
use busline_core::experiments::SweepOutcome;
use std::io::{self, Write};

pub const VISITS_HEADER: &str = "iteration,run,bus,unit,cycle,stop,arrival_s,departure_s,served,split_here,load_arr,wish_alight,alight,wish_board,board,headway_arr_s,headway_dep_s,capacity";

/// One row per stop visit, times in seconds with three decimals.
pub fn emit_visits<W: Write>(
    writer: &mut W,
    output: &SimulationOutput,
    iteration: u32,
) -> io::Result<()> {
    writeln!(writer, "{VISITS_HEADER}")?;
    for v in &output.visits {
        writeln!(
            writer,
            "{},{},{},{},{},{},{:.3},{:.3},{},{},{},{},{},{},{},{:.3},{:.3},{}",
            iteration,
            v.run,
            v.bus,
            v.unit.letter(),
            v.cycle,
            v.stop,
            v.arrival_s,
            v.departure_s,
            u8::from(v.served),
            u8::from(v.split_here),
            v.load_at_arrival,
            v.wish_alight,
            v.alight,
            v.wish_board,
            v.board,
            v.arriving_headway_s,
            v.departing_headway_s,
            v.capacity_at_arrival,
        )?;
    }
    Ok(())
}

pub const CURVES_HEADER: &str = "curve,time_s,value";

fn write_curve<W: Write>(writer: &mut W, name: &str, curve: &CumulativeCurve) -> io::Result<()> {
    for (t, value) in curve.breakpoints() {
        writeln!(writer, "{name},{t:.3},{value:.3}")?;
    }
    Ok(())
}

/// Cumulative curve breakpoints plus the derived waiting and on-board count
/// series. The system-departure curve is emitted only under stop-skipping,
/// where walk-backs make it differ from the alighting curve.
pub fn emit_curves<W: Write>(
    writer: &mut W,
    output: &SimulationOutput,
    policy: PolicyKind,
) -> io::Result<()> {
    writeln!(writer, "{CURVES_HEADER}")?;
    write_curve(writer, "arrivals", &output.arrivals)?;
    write_curve(writer, "boardings", &output.boardings)?;
    write_curve(writer, "alightings", &output.alightings)?;
    if policy == PolicyKind::StopSkipping {
        write_curve(writer, "departures", &output.departures)?;
    }

    let mut times: Vec<f64> = output
        .arrivals
        .breakpoint_times()
        .into_iter()
        .chain(output.boardings.breakpoint_times())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for &t in &times {
        let waiting = output.arrivals.value_at(t) - output.boardings.value_at(t);
        writeln!(writer, "waiting,{t:.3},{waiting:.3}")?;
    }

    let mut times: Vec<f64> = output
        .boardings
        .breakpoint_times()
        .into_iter()
        .chain(output.alightings.breakpoint_times())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for &t in &times {
        let onboard = f64::from(output.initial_onboard) + output.boardings.value_at(t)
            - output.alightings.value_at(t);
        writeln!(writer, "onboard,{t:.3},{onboard:.3}")?;
    }
    Ok(())
}

/// Header of the metrics table: cell identity plus mean/std per metric.
pub fn metrics_header() -> String {
    let mut header = String::from("policy,eta,demand,fleet_size,target_headway_s,iterations,failed");
    // Field order comes from the aggregate itself; build it from a dummy by
    // listing the names statically.
    for name in [
        "avg_wait_min",
        "avg_in_vehicle_min",
        "avg_walk_min",
        "avg_cost_min",
        "expected_cost_min",
        "overhead_pct",
        "mape_all_pct",
        "mape_served_pct",
        "avg_cycle_min",
        "avg_load_pax",
        "frac_full",
        "arrived",
        "boarded",
        "alighted",
        "cap_binding_events",
        "oversaturated",
    ] {
        header.push_str(&format!(",{name}_mean,{name}_std"));
    }
    header
}

fn policy_label(kind: PolicyKind) -> &'static str {
    kind.label()
}

/// One row per successful sweep cell; failed cells are skipped (and should be
/// reported separately by the caller).
pub fn emit_metrics<W: Write>(writer: &mut W, outcomes: &[SweepOutcome]) -> io::Result<()> {
    writeln!(writer, "{}", metrics_header())?;
    for outcome in outcomes {
        let Ok(cell) = &outcome.result else {
            continue;
        };
        let mut row = format!(
            "{},{:.3},{:.3},{},{:.6},{},{}",
            policy_label(cell.policy),
            cell.eta,
            cell.demand,
            cell.fleet_size,
            cell.target_headway_s,
            cell.iterations,
            cell.failed_iterations,
        );
        for (_, stat) in cell.stats.fields() {
            if stat.samples == 0 {
                // Metric undefined in every iteration: two empty columns.
                row.push_str(",,");
            } else {
                row.push_str(&format!(",{:.6},{:.6}", stat.mean, stat.std));
            }
        }
        writeln!(writer, "{row}")?;
    }
    Ok(())
}
