//! Cumulative passenger-count curves.
//!
//! Boardings, alightings, and system departures are step functions. Passenger
//! arrivals at stops are only known as Poisson counts per inter-visit
//! interval, so the arrival curve rises as a linear ramp over each interval
//! (the conditional expectation of the unobserved individual arrival times).
//! Average waiting and riding times are areas between these curves.

/// One event of a cumulative curve.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CurveEvent {
    /// Instantaneous increment of `count` at `at`.
    Step { at: f64, count: f64 },
    /// Linear increase of `count` spread over `(from, to]`.
    Ramp { from: f64, to: f64, count: f64 },
}

/// A non-decreasing cumulative count curve, stored as its increment events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CumulativeCurve {
    events: Vec<CurveEvent>,
}

impl CumulativeCurve {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `count` passengers instantaneously at time `at`.
    pub fn add_step(&mut self, at: f64, count: u32) {
        if count > 0 {
            self.events.push(CurveEvent::Step {
                at,
                count: f64::from(count),
            });
        }
    }

    /// Add `count` passengers spread uniformly over `(from, to]`.
    /// Degenerates to a step when the interval is empty.
    pub fn add_ramp(&mut self, from: f64, to: f64, count: u32) {
        if count == 0 {
            return;
        }
        if to > from {
            self.events.push(CurveEvent::Ramp {
                from,
                to,
                count: f64::from(count),
            });
        } else {
            self.add_step(to, count);
        }
    }

    /// Curve value at time `t` (events at exactly `t` included).
    pub fn value_at(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for event in &self.events {
            total += match *event {
                CurveEvent::Step { at, count } => {
                    if at <= t {
                        count
                    } else {
                        0.0
                    }
                }
                CurveEvent::Ramp { from, to, count } => {
                    if t >= to {
                        count
                    } else if t <= from {
                        0.0
                    } else {
                        count * (t - from) / (to - from)
                    }
                }
            };
        }
        total
    }

    /// Curve value just before time `t` (steps at exactly `t` excluded).
    pub fn value_before(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for event in &self.events {
            total += match *event {
                CurveEvent::Step { at, count } => {
                    if at < t {
                        count
                    } else {
                        0.0
                    }
                }
                CurveEvent::Ramp { from, to, count } => {
                    if t >= to {
                        count
                    } else if t <= from {
                        0.0
                    } else {
                        count * (t - from) / (to - from)
                    }
                }
            };
        }
        total
    }

    /// Number of passengers added during `[t0, t1]` (inclusive of both ends).
    pub fn count_between(&self, t0: f64, t1: f64) -> f64 {
        self.value_at(t1) - self.value_before(t0)
    }

    /// Integral of the curve over `[t0, t1]`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut total = 0.0;
        for event in &self.events {
            total += match *event {
                CurveEvent::Step { at, count } => count * (t1 - at.clamp(t0, t1)),
                CurveEvent::Ramp { from, to, count } => {
                    // Piecewise: zero before `from`, linear on [from, to],
                    // constant `count` after `to`.
                    let slope = count / (to - from);
                    let lin_lo = from.clamp(t0, t1).max(from);
                    let lin_hi = to.clamp(t0, t1).max(from);
                    let linear_part = if lin_hi > lin_lo {
                        slope * ((lin_hi - from).powi(2) - (lin_lo - from).powi(2)) / 2.0
                    } else {
                        0.0
                    };
                    let flat_part = count * (t1 - to.clamp(t0, t1));
                    linear_part + flat_part
                }
            };
        }
        total
    }

    /// Total count added by the curve.
    pub fn total(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match *e {
                CurveEvent::Step { count, .. } => count,
                CurveEvent::Ramp { count, .. } => count,
            })
            .sum()
    }

    /// All times at which the curve changes slope or jumps, sorted.
    pub fn breakpoint_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = Vec::with_capacity(self.events.len() * 2);
        for event in &self.events {
            match *event {
                CurveEvent::Step { at, .. } => times.push(at),
                CurveEvent::Ramp { from, to, .. } => {
                    times.push(from);
                    times.push(to);
                }
            }
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// `(time, value)` pairs at every breakpoint, value taken just after the
    /// breakpoint. Suitable for plotting.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        self.breakpoint_times()
            .into_iter()
            .map(|t| (t, self.value_at(t)))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Area between two cumulative curves over `[t0, t1]`.
pub fn area_between(upper: &CumulativeCurve, lower: &CumulativeCurve, t0: f64, t1: f64) -> f64 {
    upper.integral(t0, t1) - lower.integral(t0, t1)
}
