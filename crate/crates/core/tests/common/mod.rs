//! Shared test fixtures: a scripted stochastic source and the small
//! 2-bus / 3-stop line whose trajectories were computed by hand.

use busline_core::domain::{LineInstance, LineParameters, PolicySpec};
use busline_core::rng::{DrawKey, StochasticSource};

/// Replaces the engine's random draws with fixed counts keyed by
/// (run, 0-based stop, seq). Cruise noise is always zero.
pub struct ScriptedSource {
    pub binomials: fn(run: u32, stop: u32, seq: u8) -> u32,
    pub poissons: fn(run: u32, stop: u32, seq: u8) -> u32,
}

impl StochasticSource for ScriptedSource {
    fn cruise_noise(&self, _: DrawKey, _: f64) -> f64 {
        0.0
    }

    fn binomial(&self, key: DrawKey, population: u32, _: f64) -> u32 {
        let value = (self.binomials)(key.run, key.stop, key.seq);
        assert!(
            value <= population,
            "scripted alight draw {value} exceeds population {population} (run {}, stop {})",
            key.run,
            key.stop
        );
        value
    }

    fn poisson(&self, key: DrawKey, _: f64) -> u32 {
        (self.poissons)(key.run, key.stop, key.seq)
    }
}

/// Two buses, three stops, 100 s segments, 10-passenger buses, headway 150 s.
pub fn fixture_params(policy: PolicySpec) -> LineParameters {
    LineParameters {
        stop_count: 3,
        mean_spacing_m: 1000.0,
        bus_capacity: 10,
        cruise_speed_ms: 10.0,
        walk_speed_ms: 1.25,
        fixed_stop_loss_s: 10.0,
        board_time_s: 2.0,
        alight_time_s: 1.0,
        hourly_demand: 108.0, // 0.01 pax/s per stop
        heterogeneity_cv: 0.0,
        noise_scale_fraction: 0.0,
        policy,
        warmup_cycles: 1,
        eval_duration_s: 100.0,
        iteration_count: 1,
        ..LineParameters::default()
    }
}

pub fn fixture_instance() -> LineInstance {
    LineInstance {
        spacing_m: vec![1000.0; 3],
        arrival_rate: vec![0.01; 3],
        alight_prob: vec![0.5; 3],
        expected_cruise_s: vec![100.0; 3],
        fleet_size: 2,
        target_headway_s: 150.0,
        cycle_time_s: 300.0,
        expected_load: 4.0,
        min_fleet_real: 0.0,
    }
}

fn fixture_binomials(run: u32, stop: u32, seq: u8) -> u32 {
    match (run, stop, seq) {
        (1, 0, 0) => 1,
        (1, 1, 0) => 2,
        (1, 2, 0) => 1,
        (2, 0, 0) => 2,
        (2, 1, 0) => 1,
        (2, 2, 0) => 0,
        (3, 0, 0) => 2,
        (3, 1, 0) => 3,
        (3, 2, 0) => 2,
        (3, 2, 1) => 1, // trailing unit's one-stop riders at the recoupling stop
        (4, 0, 0) => 1,
        (4, 1, 0) => 2,
        (4, 2, 0) => 3,
        _ => 0,
    }
}

fn fixture_poissons(run: u32, stop: u32, seq: u8) -> u32 {
    match (run, stop, seq) {
        (1, 0, 0) => 3,
        (1, 1, 0) => 2,
        (1, 2, 0) => 4,
        (2, 0, 0) => 2,
        (2, 1, 0) => 8,
        (2, 2, 0) => 1,
        (3, 0, 0) => 4,
        (3, 1, 0) => 0,
        (3, 2, 0) => 2,
        (3, 2, 1) => 1, // arrivals between the two units at the recoupling stop
        (4, 0, 0) => 1,
        (4, 1, 0) => 2,
        (4, 2, 0) => 0,
        _ => 0,
    }
}

pub fn fixture_source() -> ScriptedSource {
    ScriptedSource {
        binomials: fixture_binomials,
        poissons: fixture_poissons,
    }
}

/// Expected visit row for fixture assertions.
#[derive(Debug, Clone, Copy)]
pub struct ExpectedVisit {
    pub run: u32,
    pub stop: u32,
    pub arrival: f64,
    pub departure: f64,
    pub arr_headway: f64,
    pub dep_headway: f64,
    pub load: u32,
    pub wish_alight: u32,
    pub alight: u32,
    pub wish_board: u32,
    pub board: u32,
    pub leftover: u32,
    pub dwell: f64,
    pub served: bool,
}

/// Hand-simulated no-control trajectory for the fixture line
/// (two cycles, twelve visits).
pub fn no_control_expectation() -> Vec<ExpectedVisit> {
    let rows = [
        // run, stop, arr, dep, h_arr, h_dep, load, wish_a, a, wish_b, b, left, dwell, served
        (1, 1, 0.0, 17.0, 150.0, 152.0, 4, 1, 1, 3, 3, 0, 17.0, true),
        (1, 2, 117.0, 133.0, 152.0, 153.0, 6, 2, 2, 2, 2, 0, 16.0, true),
        (1, 3, 233.0, 252.0, 153.0, 157.0, 6, 1, 1, 4, 4, 0, 19.0, true),
        (2, 1, 150.0, 166.0, 150.0, 149.0, 4, 2, 2, 2, 2, 0, 16.0, true),
        (2, 2, 266.0, 291.0, 149.0, 158.0, 4, 1, 1, 8, 7, 1, 25.0, true),
        (2, 3, 391.0, 401.0, 158.0, 149.0, 10, 0, 0, 1, 0, 1, 10.0, true),
        (3, 1, 352.0, 370.0, 202.0, 204.0, 9, 2, 2, 4, 3, 1, 18.0, true),
        (3, 2, 470.0, 485.0, 204.0, 194.0, 10, 3, 3, 1, 1, 0, 15.0, true),
        (3, 3, 585.0, 603.0, 194.0, 202.0, 8, 2, 2, 3, 3, 0, 18.0, true),
        (4, 1, 501.0, 514.0, 149.0, 144.0, 10, 1, 1, 2, 1, 1, 13.0, true),
        (4, 2, 614.0, 630.0, 144.0, 145.0, 10, 2, 2, 2, 2, 0, 16.0, true),
        (4, 3, 730.0, 743.0, 145.0, 140.0, 10, 3, 3, 0, 0, 0, 13.0, true),
    ];
    rows.iter()
        .map(
            |&(run, stop, arrival, departure, ha, hd, load, wa, a, wb, b, left, dwell, served)| {
                ExpectedVisit {
                    run,
                    stop,
                    arrival,
                    departure,
                    arr_headway: ha,
                    dep_headway: hd,
                    load,
                    wish_alight: wa,
                    alight: a,
                    wish_board: wb,
                    board: b,
                    leftover: left,
                    dwell,
                    served,
                }
            },
        )
        .collect()
}
