//! Headway-triggered control laws: stop-skipping and modular bus-splitting.
//!
//! Both policies are evaluated at the moment a bus departs a stop, using only
//! its own departing headway, and affect the treatment of the next stop (the
//! control stop). Decisions are non-predictive, distributed, and myopic.

/// Outcome of evaluating a control law at a departure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlAction {
    None,
    /// Pass the next stop without serving it.
    SkipNext,
    /// Decouple into two units en route to the next stop.
    SplitForNext,
}

/// Stop-skipping trigger. A bus skips the next stop when its departing
/// headway exceeds `threshold * target`, subject to two restrictions: it must
/// have served the current stop (no two consecutive skips by one bus), and
/// the previous bus must have served the next stop (no stop skipped by two
/// consecutive buses).
pub fn skip_decision(
    departing_headway_s: f64,
    target_headway_s: f64,
    threshold: f64,
    served_current: bool,
    predecessor_served_next: bool,
) -> ControlAction {
    if departing_headway_s > threshold * target_headway_s
        && served_current
        && predecessor_served_next
    {
        ControlAction::SkipNext
    } else {
        ControlAction::None
    }
}

/// Bus-splitting trigger. A coupled bus splits for the next stop when its
/// departing headway exceeds `threshold * target` and the current stop was
/// not itself a control stop (a decoupled unit cannot split further). There
/// is no predecessor restriction: the control stop is still served, so a stop
/// may be a control stop for consecutive buses.
pub fn split_decision(
    departing_headway_s: f64,
    target_headway_s: f64,
    threshold: f64,
    split_at_current: bool,
) -> ControlAction {
    if departing_headway_s > threshold * target_headway_s && !split_at_current {
        ControlAction::SplitForNext
    } else {
        ControlAction::None
    }
}

/// Load split between the decoupling units: the leading unit takes the
/// ceiling half, the trailing unit the floor half.
pub fn split_loads(load: u32) -> (u32, u32) {
    let trailing = load / 2;
    (load - trailing, trailing)
}

/// Passengers wishing to alight from the trailing unit at the control stop:
/// a binomial draw over the full pre-split load, capped by the trailing
/// unit's load (everyone wishing to alight there was moved to the trailing
/// unit before decoupling). Returns the wish count and whether the cap bound.
pub fn trailing_alight_wish_at_control(
    pre_split_load: u32,
    trailing_load: u32,
    draw: impl FnOnce(u32) -> u32,
) -> (u32, bool) {
    let raw = draw(pre_split_load);
    (raw.min(trailing_load), raw > trailing_load)
}

/// Passengers wishing to alight from the leading unit at the recoupling stop:
/// a binomial draw over the pre-split load excluding those who wished to
/// alight at the control stop, capped by the leading unit's load.
pub fn leading_alight_wish_at_recouple(
    pre_split_load: u32,
    trailing_wish_at_control: u32,
    leading_load: u32,
    draw: impl FnOnce(u32) -> u32,
) -> (u32, bool) {
    let population = pre_split_load.saturating_sub(trailing_wish_at_control);
    let raw = draw(population);
    (raw.min(leading_load), raw > leading_load)
}

/// Passengers wishing to alight from the trailing unit at the recoupling
/// stop: only the one-stop riders who boarded it at the control stop.
pub fn trailing_alight_wish_at_recouple(
    boarded_at_control: u32,
    draw: impl FnOnce(u32) -> u32,
) -> u32 {
    draw(boarded_at_control)
}

/// Passengers waiting for the trailing unit at the control stop: exactly
/// those the leading unit left behind when it passed without serving.
pub fn trailing_wish_board(leading_wish_board: u32) -> u32 {
    leading_wish_board
}

/// Departure time of the recoupled bus: the later of the two units'
/// individually computed ready-to-depart times.
pub fn recouple_departure(leading_ready_s: f64, trailing_ready_s: f64) -> f64 {
    leading_ready_s.max(trailing_ready_s)
}

/// Time a residual passenger spends walking back from the stop after the
/// skipped one, given the skipped segment's length.
pub fn residual_walk_duration(segment_m: f64, walk_speed_ms: f64) -> f64 {
    segment_m / walk_speed_ms
}
