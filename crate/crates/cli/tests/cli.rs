//! End-to-end checks of the emitters and the binary surface.

use busline_cli::config::{parse_config, serialize_config, RunConfig};
use busline_cli::emit::{emit_curves, emit_metrics, emit_visits, metrics_header, VISITS_HEADER};
use busline_core::domain::{target_headway, LineInstance, LineParameters, PolicySpec};
use busline_core::engine::simulate;
use busline_core::experiments::{self, demand_sweep};
use busline_core::rng::{SubstreamFactory, SubstreamSource};
use std::process::Command;

fn null_output(policy: PolicySpec) -> (LineParameters, busline_core::engine::SimulationOutput) {
    let params = LineParameters {
        hourly_demand: 0.0,
        noise_scale_fraction: 0.0,
        heterogeneity_cv: 0.0,
        policy,
        ..LineParameters::default()
    };
    let stop_count = params.stop_count as usize;
    let headway = target_headway(&params, 12).unwrap();
    let instance = LineInstance {
        spacing_m: vec![params.mean_spacing_m; stop_count],
        arrival_rate: vec![0.0; stop_count],
        alight_prob: vec![0.1; stop_count],
        expected_cruise_s: vec![params.mean_cruise_s(); stop_count],
        fleet_size: 12,
        target_headway_s: headway,
        cycle_time_s: 12.0 * headway,
        expected_load: 0.0,
        min_fleet_real: 0.0,
    };
    let source = SubstreamSource::new(SubstreamFactory::new(1, 0), 2.0, 0.0);
    let output = simulate(&params, &instance, &source, 6).unwrap();
    (params, output)
}

#[test]
fn visits_rows_of_idle_line_dwell_exactly_the_fixed_loss() {
    let (params, output) = null_output(PolicySpec::no_control());
    let mut buffer = Vec::new();
    emit_visits(&mut buffer, &output, 0).unwrap();
    let text = String::from_utf8(buffer).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), VISITS_HEADER);
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 18);
        let arrival: f64 = fields[6].parse().unwrap();
        let departure: f64 = fields[7].parse().unwrap();
        assert!(
            (departure - arrival - params.fixed_stop_loss_s).abs() < 1e-3,
            "{line}"
        );
        rows += 1;
    }
    assert_eq!(rows, output.visits.len());
    assert!(!text.contains('\r'), "line-feed newlines only");
}

#[test]
fn split_rows_come_in_unit_pairs_at_two_stops() {
    let params = LineParameters {
        policy: PolicySpec::bus_splitting(1.05),
        master_seed: 11,
        ..LineParameters::default()
    };
    let (_, output) = experiments::simulate_iteration(&params, 0).unwrap();
    let mut buffer = Vec::new();
    emit_visits(&mut buffer, &output, 0).unwrap();
    let text = String::from_utf8(buffer).unwrap();

    let mut control_groups: Vec<(u32, u32)> = Vec::new();
    let mut unit_groups: std::collections::BTreeMap<(u32, u32), Vec<String>> = Default::default();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let run: u32 = fields[1].parse().unwrap();
        let unit = fields[3].to_string();
        let stop: u32 = fields[5].parse().unwrap();
        let split_here: u32 = fields[9].parse().unwrap();
        if unit != "A" {
            unit_groups.entry((run, stop)).or_default().push(unit);
        }
        if split_here == 1 && fields[3] == "L" {
            control_groups.push((run, stop));
        }
    }
    assert!(!control_groups.is_empty(), "no splits triggered at threshold 1.05");
    // Each split covers exactly two stops, the control stop and the
    // recoupling stop, unless the horizon ended between them.
    let fleet = output.fleet_size;
    let stops = output.stop_count;
    let total_runs = output.horizon_cycles * fleet;
    let mut expected_groups = control_groups.len();
    for &(run, stop) in &control_groups {
        let recouple = if stop < stops {
            (run, stop + 1)
        } else {
            (run + fleet, 1)
        };
        if recouple.0 <= total_runs {
            assert!(
                unit_groups.contains_key(&recouple),
                "missing recoupling visits after split at {run}/{stop}"
            );
            expected_groups += 1;
        }
    }
    assert_eq!(unit_groups.len(), expected_groups);
    for (key, units) in &unit_groups {
        let mut sorted = units.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["L".to_string(), "T".to_string()], "{key:?}");
    }
}

#[test]
fn curves_omit_walk_departures_except_under_skipping() {
    for (policy, expect_departures) in [
        (PolicySpec::no_control(), false),
        (PolicySpec::bus_splitting(1.5), false),
        (PolicySpec::stop_skipping(1.2), true),
    ] {
        let params = LineParameters {
            policy,
            master_seed: 5,
            ..LineParameters::default()
        };
        let (_, output) = experiments::simulate_iteration(&params, 0).unwrap();
        let mut buffer = Vec::new();
        emit_curves(&mut buffer, &output, policy.kind).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let has_departures = text.lines().any(|l| l.starts_with("departures,"));
        assert_eq!(has_departures, expect_departures, "{policy:?}");

        // Arrival curve values never decrease and boardings never exceed
        // arrivals.
        let arrivals: Vec<f64> = text
            .lines()
            .filter(|l| l.starts_with("arrivals,"))
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(arrivals.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let boardings: Vec<f64> = text
            .lines()
            .filter(|l| l.starts_with("boardings,"))
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(boardings.last().unwrap() <= arrivals.last().unwrap());
    }
}

#[test]
fn metrics_table_covers_the_demand_grid() {
    let base = LineParameters {
        iteration_count: 1,
        ..LineParameters::default()
    };
    let demands: Vec<f64> = (1..=10).map(|k| f64::from(k) * 250.0).collect();
    let outcomes = demand_sweep(&base, &demands, 1.5);
    let mut buffer = Vec::new();
    emit_metrics(&mut buffer, &outcomes).unwrap();
    let text = String::from_utf8(buffer).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], metrics_header());
    // Golden header: downstream plotting scripts key on these column names.
    assert_eq!(
        lines[0],
        "policy,eta,demand,fleet_size,target_headway_s,iterations,failed,\
         avg_wait_min_mean,avg_wait_min_std,avg_in_vehicle_min_mean,avg_in_vehicle_min_std,\
         avg_walk_min_mean,avg_walk_min_std,avg_cost_min_mean,avg_cost_min_std,\
         expected_cost_min_mean,expected_cost_min_std,overhead_pct_mean,overhead_pct_std,\
         mape_all_pct_mean,mape_all_pct_std,mape_served_pct_mean,mape_served_pct_std,\
         avg_cycle_min_mean,avg_cycle_min_std,avg_load_pax_mean,avg_load_pax_std,\
         frac_full_mean,frac_full_std,arrived_mean,arrived_std,boarded_mean,boarded_std,\
         alighted_mean,alighted_std,cap_binding_events_mean,cap_binding_events_std,\
         oversaturated_mean,oversaturated_std"
    );
    assert_eq!(lines.len(), 31, "header plus 3 policies x 10 demands");
    for line in &lines[1..] {
        if line.starts_with("none,") {
            let fields: Vec<&str> = line.split(',').collect();
            // avg_walk columns sit right after the identity block and the
            // wait/in-vehicle stats.
            let walk_mean: f64 = fields[11].parse().unwrap();
            let walk_std: f64 = fields[12].parse().unwrap();
            assert_eq!(walk_mean, 0.0);
            assert_eq!(walk_std, 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Binary surface
// ---------------------------------------------------------------------------

fn busline() -> Command {
    Command::new(env!("CARGO_BIN_EXE_busline"))
}

#[test]
fn defaults_output_round_trips() {
    let output = busline().arg("defaults").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let config = parse_config(&text).unwrap();
    assert_eq!(config, RunConfig::default());
    assert_eq!(serialize_config(&config), text);
}

#[test]
fn fleet_table_reproduces_reference_design() {
    let output = busline().arg("fleet-table").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let expected = "\
demand_pax_h,fleet_size,target_headway_min
250,2,20.3
500,4,10.1
750,6,6.8
1000,8,5.1
1250,10,4.1
1500,12,3.4
1750,14,2.9
2000,16,2.5
2250,18,2.3
2500,20,2.0
";
    assert_eq!(text, expected);
}

#[test]
fn bad_configuration_exits_with_code_1() {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "no_such_key = 1\n").unwrap();
    let output = busline()
        .args(["--config", path.to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("no_such_key"), "{stderr}");
}

#[test]
fn unwritable_output_exits_with_code_3() {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(dir).unwrap();
    // A regular file where the output directory should go.
    let blocker = dir.join("not_a_dir");
    std::fs::write(&blocker, "x").unwrap();
    let output = busline()
        .args(["simulate", "--out", blocker.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn infeasible_demand_exits_with_code_2() {
    let output = busline()
        .args(["simulate", "--demand", "0"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn simulate_writes_requested_files() {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("sim_out");
    let output = busline()
        .args([
            "simulate",
            "--seed",
            "3",
            "--emit",
            "visits,metrics",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(dir.join("visits.csv").exists());
    assert!(dir.join("metrics.csv").exists());
    assert!(!dir.join("curves.csv").exists());
}

#[test]
fn environment_seed_changes_the_run() {
    let run = |env: Option<&str>| -> String {
        let mut cmd = busline();
        cmd.args(["simulate", "--emit", "visits", "--out"]);
        let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"))
            .join(format!("env_seed_{}", env.unwrap_or("none")));
        cmd.arg(dir.to_str().unwrap());
        if let Some(seed) = env {
            cmd.env("BUSLINE_SEED", seed);
        }
        let output = cmd.output().unwrap();
        assert!(output.status.success());
        std::fs::read_to_string(dir.join("visits.csv")).unwrap()
    };
    let default_run = run(None);
    let seeded_run = run(Some("123"));
    assert_ne!(default_run, seeded_run);
    // Explicit --seed beats the environment.
    let mut cmd = busline();
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("env_seed_flag");
    cmd.args(["simulate", "--emit", "visits", "--seed", "42", "--out"])
        .arg(dir.to_str().unwrap())
        .env("BUSLINE_SEED", "123");
    assert!(cmd.output().unwrap().status.success());
    let flagged = std::fs::read_to_string(dir.join("visits.csv")).unwrap();
    assert_eq!(flagged, default_run);
}
