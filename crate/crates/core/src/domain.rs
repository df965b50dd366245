//! Line configuration, quasi-homogeneous line synthesis, and the closed-form
//! fleet-sizing relations.

use crate::error::DomainError;
use crate::rng::{DrawKey, Purpose, SubstreamFactory};
use rand_distr::{Distribution, Normal};

/// Which headway-control policy a simulation runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    NoControl,
    StopSkipping,
    BusSplitting,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::NoControl,
        PolicyKind::StopSkipping,
        PolicyKind::BusSplitting,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::NoControl => "none",
            PolicyKind::StopSkipping => "stop-skipping",
            PolicyKind::BusSplitting => "bus-splitting",
        }
    }
}

/// Control policy plus its trigger threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// A departing headway above `threshold * H` triggers the control action.
    /// Unused for `NoControl`.
    pub threshold: f64,
}

impl PolicySpec {
    pub fn no_control() -> Self {
        PolicySpec {
            kind: PolicyKind::NoControl,
            threshold: 1.0,
        }
    }

    pub fn stop_skipping(threshold: f64) -> Self {
        PolicySpec {
            kind: PolicyKind::StopSkipping,
            threshold,
        }
    }

    pub fn bus_splitting(threshold: f64) -> Self {
        PolicySpec {
            kind: PolicyKind::BusSplitting,
            threshold,
        }
    }
}

/// All exogenous scalars describing a line and an experiment.
///
/// Speeds are stored in m/s and demand in passengers per hour; conversion
/// from the configuration units (km/h) happens at the CLI boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParameters {
    pub stop_count: u32,
    pub mean_spacing_m: f64,
    /// Total capacity of a coupled bus; each modular unit holds half.
    pub bus_capacity: u32,
    pub cruise_speed_ms: f64,
    pub walk_speed_ms: f64,
    /// Fixed time lost per served stop (doors, deceleration, ...), seconds.
    pub fixed_stop_loss_s: f64,
    pub board_time_s: f64,
    pub alight_time_s: f64,
    pub wait_weight: f64,
    pub walk_weight: f64,
    pub fleet_multiplier: f64,
    pub hourly_demand: f64,
    pub noise_shape: f64,
    pub noise_scale_fraction: f64,
    pub heterogeneity_cv: f64,
    pub policy: PolicySpec,
    pub master_seed: u64,
    pub iteration_count: u32,
    pub warmup_cycles: u32,
    pub eval_duration_s: f64,
    /// Reuse the iteration-0 line realization for every iteration instead of
    /// resampling per iteration.
    pub freeze_line: bool,
}

const KMH_TO_MS: f64 = 1.0 / 3.6;

impl Default for LineParameters {
    /// The reference configuration used throughout: 20 stops, 400 m spacing,
    /// 80-passenger buses, 20 km/h cruise, 1500 pax/h demand.
    fn default() -> Self {
        LineParameters {
            stop_count: 20,
            mean_spacing_m: 400.0,
            bus_capacity: 80,
            cruise_speed_ms: 20.0 * KMH_TO_MS,
            walk_speed_ms: 4.5 * KMH_TO_MS,
            fixed_stop_loss_s: 20.0,
            board_time_s: 4.0,
            alight_time_s: 3.0,
            wait_weight: 2.1,
            walk_weight: 2.2,
            fleet_multiplier: 1.5,
            hourly_demand: 1500.0,
            noise_shape: 2.0,
            noise_scale_fraction: 0.3,
            heterogeneity_cv: 0.10,
            policy: PolicySpec::no_control(),
            master_seed: 42,
            iteration_count: 500,
            warmup_cycles: 2,
            eval_duration_s: 3600.0,
            freeze_line: false,
        }
    }
}

impl LineParameters {
    pub fn unit_capacity(&self) -> u32 {
        self.bus_capacity / 2
    }

    /// Mean per-stop arrival rate in pax/s: the hourly demand split evenly
    /// across stops.
    pub fn mean_arrival_rate(&self) -> f64 {
        self.hourly_demand / (3600.0 * f64::from(self.stop_count))
    }

    /// Expected cruising time of one average segment, seconds.
    pub fn mean_cruise_s(&self) -> f64 {
        self.mean_spacing_m / self.cruise_speed_ms
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |msg: String| Err(DomainError::InvalidConfiguration(msg));
        if self.stop_count < 2 {
            return fail(format!("stop_count must be >= 2, got {}", self.stop_count));
        }
        if self.bus_capacity < 2 || !self.bus_capacity.is_multiple_of(2) {
            return fail(format!(
                "bus_capacity must be even and >= 2, got {}",
                self.bus_capacity
            ));
        }
        if self.fleet_multiplier.is_nan() || self.fleet_multiplier <= 1.0 {
            return fail(format!(
                "fleet_multiplier must be > 1, got {}",
                self.fleet_multiplier
            ));
        }
        for (name, value) in [
            ("mean_spacing_m", self.mean_spacing_m),
            ("cruise_speed_ms", self.cruise_speed_ms),
            ("walk_speed_ms", self.walk_speed_ms),
            ("fixed_stop_loss_s", self.fixed_stop_loss_s),
            ("board_time_s", self.board_time_s),
            ("alight_time_s", self.alight_time_s),
            ("eval_duration_s", self.eval_duration_s),
        ] {
            if value <= 0.0 || !value.is_finite() {
                return fail(format!("{name} must be strictly positive, got {value}"));
            }
        }
        if self.hourly_demand < 0.0 || !self.hourly_demand.is_finite() {
            return fail(format!(
                "hourly_demand must be non-negative, got {}",
                self.hourly_demand
            ));
        }
        if self.wait_weight < 1.0 || self.walk_weight < 1.0 {
            return fail(format!(
                "time weights must be >= 1, got wait {} walk {}",
                self.wait_weight, self.walk_weight
            ));
        }
        if self.noise_shape.is_nan() || self.noise_shape <= 0.0 {
            return fail(format!(
                "noise_shape must be > 0, got {}",
                self.noise_shape
            ));
        }
        if self.noise_scale_fraction < 0.0
            || self.noise_scale_fraction * self.noise_shape >= 1.0
        {
            return fail(format!(
                "noise_scale_fraction must satisfy 0 <= scale*shape < 1, got {}",
                self.noise_scale_fraction
            ));
        }
        if self.heterogeneity_cv < 0.0 {
            return fail(format!(
                "heterogeneity_cv must be >= 0, got {}",
                self.heterogeneity_cv
            ));
        }
        if self.policy.kind != PolicyKind::NoControl
            && (self.policy.threshold.is_nan() || self.policy.threshold <= 0.0)
        {
            return fail(format!(
                "control threshold must be > 0, got {}",
                self.policy.threshold
            ));
        }
        if self.iteration_count < 1 {
            return fail("iteration_count must be >= 1".to_string());
        }
        if self.warmup_cycles < 1 {
            return fail("warmup_cycles must be >= 1".to_string());
        }
        Ok(())
    }
}

/// One sampled realization of the route plus the derived service design.
#[derive(Debug, Clone, PartialEq)]
pub struct LineInstance {
    /// Distance from stop `s` to the next stop, metres. Length = stop count.
    pub spacing_m: Vec<f64>,
    /// Passenger arrival rate at each stop, pax/s.
    pub arrival_rate: Vec<f64>,
    /// Probability that an on-board passenger alights when arriving at each
    /// stop.
    pub alight_prob: Vec<f64>,
    /// Expected cruising time over each segment, seconds.
    pub expected_cruise_s: Vec<f64>,
    pub fleet_size: u32,
    pub target_headway_s: f64,
    pub cycle_time_s: f64,
    /// Expected average on-board load at equilibrium (may be fractional).
    pub expected_load: f64,
    /// Real-valued minimum fleet before applying the multiplier and ceiling.
    pub min_fleet_real: f64,
}

impl LineInstance {
    pub fn stop_count(&self) -> usize {
        self.spacing_m.len()
    }
}

/// Mean alighting probability that makes the average trip cover half the
/// cyclic route: the geometric trip length 1/p must equal S/2.
pub fn mean_alight_probability(stop_count: u32) -> Result<f64, DomainError> {
    if stop_count < 2 {
        return Err(DomainError::InvalidConfiguration(format!(
            "stop_count must be >= 2, got {stop_count}"
        )));
    }
    Ok(2.0 / f64::from(stop_count))
}

/// Real-valued minimum fleet size that keeps the expected load within bus
/// capacity for a uniform OD demand.
pub fn min_fleet(params: &LineParameters) -> f64 {
    let s = f64::from(params.stop_count);
    let rate = params.mean_arrival_rate();
    let dwell_pp = params.alight_time_s + params.board_time_s;
    let cruise = params.mean_cruise_s();
    dwell_pp * s * rate
        + (cruise + params.fixed_stop_loss_s) * s * s * rate / (2.0 * f64::from(params.bus_capacity))
}

/// Fleet size: the multiplied minimum fleet, rounded up.
pub fn fleet_size(params: &LineParameters) -> u32 {
    (params.fleet_multiplier * min_fleet(params)).ceil() as u32
}

/// Target headway solving the cycle-time identity
/// `(cruise + (a+b)*rate*H + E) * S = N * H` for `H`.
pub fn target_headway(params: &LineParameters, fleet: u32) -> Result<f64, DomainError> {
    let s = f64::from(params.stop_count);
    let rate = params.mean_arrival_rate();
    let dwell_pp = params.alight_time_s + params.board_time_s;
    let denominator = f64::from(fleet) - dwell_pp * s * rate;
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(DomainError::InfeasibleFleet {
            fleet,
            denominator,
        });
    }
    Ok((params.mean_cruise_s() + params.fixed_stop_loss_s) * s / denominator)
}

/// Expected average load at equilibrium for a given headway.
pub fn expected_load(params: &LineParameters, headway_s: f64) -> f64 {
    f64::from(params.stop_count) * params.mean_arrival_rate() * headway_s / 2.0
}

/// Initial per-bus loads and dispatch times: every bus starts with the
/// (rounded) expected load and buses are released one headway apart.
pub fn initial_conditions(instance: &LineInstance) -> (Vec<u32>, Vec<f64>) {
    let load = instance.expected_load.round() as u32;
    let loads = vec![load; instance.fleet_size as usize];
    let starts = (0..instance.fleet_size)
        .map(|r| f64::from(r) * instance.target_headway_s)
        .collect();
    (loads, starts)
}

const MAX_SAMPLE_ATTEMPTS: u32 = 1000;

/// Draw from `Normal(mean, cv*mean)`, resampling until the value passes
/// `valid`. A zero cv or zero mean short-circuits to the mean itself.
fn sample_truncated<R: rand::Rng>(
    rng: &mut R,
    mean: f64,
    cv: f64,
    valid: impl Fn(f64) -> bool,
    stop: u32,
) -> Result<f64, DomainError> {
    if cv == 0.0 || mean == 0.0 {
        return Ok(mean);
    }
    let normal = Normal::new(mean, cv * mean)
        .map_err(|e| DomainError::InvalidConfiguration(format!("normal({mean}, cv {cv}): {e}")))?;
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let value = normal.sample(rng);
        if valid(value) {
            return Ok(value);
        }
    }
    Err(DomainError::SamplingFailed {
        stop,
        attempts: MAX_SAMPLE_ATTEMPTS,
    })
}

/// Synthesize a quasi-homogeneous line: per-stop spacing, arrival rate, and
/// alighting probability drawn around their common means with the configured
/// coefficient of variation, plus the derived fleet design.
pub fn sample_line(
    params: &LineParameters,
    factory: &SubstreamFactory,
) -> Result<LineInstance, DomainError> {
    params.validate()?;
    let stop_count = params.stop_count;
    let mean_rate = params.mean_arrival_rate();
    let mean_prob = mean_alight_probability(stop_count)?;
    let cv = params.heterogeneity_cv;

    let mut spacing = Vec::with_capacity(stop_count as usize);
    let mut rates = Vec::with_capacity(stop_count as usize);
    let mut probs = Vec::with_capacity(stop_count as usize);
    for s in 0..stop_count {
        let mut rng = factory.stream(DrawKey::new(Purpose::LineSynthesis, 0, s, 0, 0));
        spacing.push(sample_truncated(
            &mut rng,
            params.mean_spacing_m,
            cv,
            |d| d > 0.0,
            s,
        )?);
        rates.push(sample_truncated(
            &mut rng,
            mean_rate,
            cv,
            |r| r > 0.0,
            s,
        )?);
        probs.push(sample_truncated(
            &mut rng,
            mean_prob,
            cv,
            |p| p > 0.0 && p <= 1.0,
            s,
        )?);
    }
    let expected_cruise: Vec<f64> = spacing.iter().map(|d| d / params.cruise_speed_ms).collect();

    let min_fleet_real = min_fleet(params);
    let fleet = fleet_size(params);
    let headway = target_headway(params, fleet)?;
    Ok(LineInstance {
        spacing_m: spacing,
        arrival_rate: rates,
        alight_prob: probs,
        expected_cruise_s: expected_cruise,
        fleet_size: fleet,
        target_headway_s: headway,
        cycle_time_s: f64::from(fleet) * headway,
        expected_load: expected_load(params, headway),
        min_fleet_real,
    })
}
