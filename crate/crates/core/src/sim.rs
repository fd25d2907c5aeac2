//! Closed-loop room simulator: well-mixed CO₂ mass balance, saturation + PID
//! ventilation control, infiltration, and measurement noise.

use chrono::NaiveDateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::params::{ControllerConfig, RoomParams, SimConfig};
use crate::scenario::Scenario;
use crate::timeseries::{canonical_start, hour_of_day, variance, TimeSeries, STEP_S, WEEK_SAMPLES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub co2_ppm: f64,
    pub pid_integrator: f64,
    pub pid_prev_error: f64,
    pub clock: NaiveDateTime,
}

impl SimState {
    pub fn new(co2_ppm: f64, clock: NaiveDateTime) -> Self {
        SimState {
            co2_ppm,
            pid_integrator: 0.0,
            pid_prev_error: 0.0,
            clock,
        }
    }

    pub fn reset_controller(&mut self) {
        self.pid_integrator = 0.0;
        self.pid_prev_error = 0.0;
    }
}

/// Air flows over one step, m³/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flows {
    pub vent_in: f64,
    pub vent_out: f64,
    pub leak_in: f64,
    pub leak_out: f64,
}

impl Flows {
    /// Outdoor air entering the zone.
    pub fn fresh_air(&self) -> f64 {
        self.vent_in + self.leak_in
    }
}

/// Static map from measured CO₂ to the normalised demand signal in [0, 1].
pub fn saturation(co2_ppm: f64, cfg: &ControllerConfig) -> f64 {
    if co2_ppm < cfg.sat_low_ppm {
        0.0
    } else if co2_ppm > cfg.sat_high_ppm {
        1.0
    } else {
        (co2_ppm - cfg.sat_low_ppm) / (cfg.sat_high_ppm - cfg.sat_low_ppm)
    }
}

/// One update of the PID acting on the demand signal (reference zero).
///
/// Backward-Euler integral and backward-difference derivative. The integrator
/// only moves while the unclamped output is inside [0, 1], or when the error
/// pushes it back toward that range.
pub fn pid_step(state: &mut SimState, u: f64, dt: f64, cfg: &ControllerConfig) -> f64 {
    let e = u;
    let deriv = cfg.kd * (e - state.pid_prev_error) / dt;
    let pre = cfg.kp * e + cfg.ki * state.pid_integrator + deriv;
    let saturated_high = pre >= 1.0 && e > 0.0;
    let saturated_low = pre <= 0.0 && e < 0.0;
    if !(saturated_high || saturated_low) {
        state.pid_integrator += e * dt;
    }
    state.pid_prev_error = e;
    (cfg.kp * e + cfg.ki * state.pid_integrator + deriv).clamp(0.0, 1.0)
}

pub fn ventilation_active(clock: NaiveDateTime, room: &RoomParams) -> bool {
    let h = hour_of_day(clock);
    room.vent_start_hour <= h && h < room.vent_end_hour
}

/// Mechanical supply flow for control signal `c`: base flow plus the
/// controlled share up to the maximum, and nothing outside the schedule.
pub fn ventilation_flow(
    c: f64,
    clock: NaiveDateTime,
    room: &RoomParams,
    ctrl: &ControllerConfig,
) -> f64 {
    if ventilation_active(clock, room) {
        ctrl.v0_flow + c.clamp(0.0, 1.0) * (room.vent_flow_max - ctrl.v0_flow)
    } else {
        0.0
    }
}

/// Balanced infiltration: envelope leakage plus wind-driven flow through open
/// windows.
pub fn infiltration_flow(wind_speed: f64, window_opening: f64, room: &RoomParams) -> (f64, f64) {
    let wind = wind_speed.max(0.0);
    let opening = window_opening.clamp(0.0, 1.0);
    let leak =
        room.envelope_leakage() + room.window_coeff * opening * room.window_area_total * wind;
    (leak, leak)
}

/// Exact zero-order-hold step of `V dC/dt = g·o·1e6 − Q (C − C_out)`.
pub fn co2_step(co2: f64, q_total: f64, occupancy: f64, dt: f64, room: &RoomParams) -> f64 {
    let source = room.gen_rate_per_person() * occupancy * 1e6;
    let v = room.volume();
    if q_total <= 0.0 {
        return co2 + source / v * dt;
    }
    let steady = room.co2_outdoor_ppm + source / q_total;
    steady + (co2 - steady) * (-q_total * dt / v).exp()
}

/// Adds white Gaussian noise whose variance is the mean-removed signal
/// variance divided by `10^(snr/10)`. `None` or an infinite target returns
/// the input unchanged.
pub fn add_noise(co2: &TimeSeries, target_snr_db: Option<f64>, seed: u64) -> Result<TimeSeries> {
    let snr = match target_snr_db {
        Some(s) if s.is_finite() => s,
        _ => return Ok(co2.clone()),
    };
    let var = variance(co2.values());
    if var <= 0.0 {
        return Err(Error::Arithmetic(
            "cannot scale noise to a constant signal".into(),
        ));
    }
    let sd = (var / 10f64.powf(snr / 10.0)).sqrt();
    let normal = Normal::new(0.0, sd).map_err(|e| Error::Arithmetic(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    co2.with_values(
        co2.values()
            .iter()
            .map(|v| v + normal.sample(&mut rng))
            .collect(),
    )
}

fn check_grid(name: &str, ts: &TimeSeries) -> Result<()> {
    if ts.start() != canonical_start() || ts.step_s() != STEP_S || ts.len() != WEEK_SAMPLES {
        return Err(Error::Config(format!(
            "scenario channel `{name}` is not on the canonical week grid"
        )));
    }
    Ok(())
}

/// Runs the closed loop for one week and returns all nine channels.
///
/// The controller reads noiseless CO₂ and is reset while the ventilation
/// schedule is off; noise is added afterwards.
pub fn simulate_week(scenario: &Scenario, cfg: &SimConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    check_grid("occupancy", &scenario.occupancy)?;
    check_grid("window_opening", &scenario.window_opening)?;
    check_grid("wind_speed", &scenario.wind_speed)?;
    let room = &cfg.room;
    let ctrl = &cfg.controller;
    let dt = STEP_S as f64;
    let n = WEEK_SAMPLES;

    let mut co2 = Vec::with_capacity(n);
    let mut control = Vec::with_capacity(n);
    let mut flows = Vec::with_capacity(n);
    let mut state = SimState::new(room.co2_initial_ppm, scenario.occupancy.start());

    for i in 0..n {
        state.clock = scenario.occupancy.time_at(i);
        let c = if ventilation_active(state.clock, room) {
            let u = saturation(state.co2_ppm, ctrl);
            pid_step(&mut state, u, dt, ctrl)
        } else {
            state.reset_controller();
            0.0
        };
        let vent = ventilation_flow(c, state.clock, room, ctrl);
        let (leak_in, leak_out) = infiltration_flow(
            scenario.wind_speed.values()[i],
            scenario.window_opening.values()[i],
            room,
        );
        let f = Flows {
            vent_in: vent,
            vent_out: vent,
            leak_in,
            leak_out,
        };
        co2.push(state.co2_ppm);
        control.push(c);
        flows.push(f);
        state.co2_ppm = co2_step(
            state.co2_ppm,
            f.fresh_air(),
            scenario.occupancy.values()[i],
            dt,
            room,
        );
    }

    let grid = &scenario.occupancy;
    let channel = |f: fn(&Flows) -> f64| grid.with_values(flows.iter().map(f).collect());
    let co2 = grid.with_values(co2)?;
    let co2_noise = add_noise(&co2, cfg.snr_db, seed)?;
    let ds = Dataset {
        occupancy: scenario.occupancy.clone(),
        co2,
        co2_noise,
        outflow_leakages: channel(|f| f.leak_out)?,
        inflow_leakages: channel(|f| f.leak_in)?,
        outflow_ventilation: channel(|f| f.vent_out)?,
        inflow_ventilation: channel(|f| f.vent_in)?,
        ventilation_control: grid.with_values(control)?,
        window_opening: scenario.window_opening.clone(),
        meta: DatasetMeta {
            scenario: scenario.labels,
            seed,
            params: cfg.clone(),
            door_events: scenario.door_events.clone(),
        },
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;
    use proptest::prelude::*;

    fn at_hour(h: i64) -> NaiveDateTime {
        canonical_start() + Duration::hours(h)
    }

    #[test]
    fn saturation_knees() {
        let c = ControllerConfig::default();
        assert_eq!(saturation(650.0, &c), 0.0);
        assert_eq!(saturation(900.0, &c), 0.5);
        assert_eq!(saturation(1100.0, &c), 1.0);
        assert_eq!(saturation(1200.0, &c), 1.0);
        assert!(saturation(700.0 - 1e-9, &c).abs() < 1e-12);
        assert!(saturation(700.0, &c).abs() < 1e-12);
        assert!((saturation(1100.0 + 1e-9, &c) - saturation(1100.0, &c)).abs() < 1e-12);
    }

    #[test]
    fn pid_zero_input_stays_zero() {
        let cfg = ControllerConfig::default();
        let mut s = SimState::new(420.0, canonical_start());
        for _ in 0..1000 {
            assert_eq!(pid_step(&mut s, 0.0, 180.0, &cfg), 0.0);
        }
    }

    #[test]
    fn pid_pure_proportional() {
        let cfg = ControllerConfig {
            kp: 1.0,
            ki: 0.0,
            kd: 0.0,
            ..Default::default()
        };
        let mut s = SimState::new(420.0, canonical_start());
        assert_eq!(pid_step(&mut s, 0.5, 180.0, &cfg), 0.5);
    }

    #[test]
    fn pid_step_response_matches_recursion() {
        let cfg = ControllerConfig {
            kp: 0.2,
            ki: 0.001,
            kd: 0.0,
            ..Default::default()
        };
        let dt = 180.0;
        let mut s = SimState::new(420.0, canonical_start());
        // Reference recursion: integrate while the output is below the clamp.
        let mut integ = 0.0f64;
        let mut hit = None;
        for k in 0..200 {
            let c = pid_step(&mut s, 1.0, dt, &cfg);
            if cfg.kp + cfg.ki * integ < 1.0 {
                integ += dt;
            }
            let expected = (cfg.kp + cfg.ki * integ).min(1.0);
            assert!((c - expected).abs() < 1e-15, "step {k}: {c} vs {expected}");
            if c == 1.0 && hit.is_none() {
                hit = Some(k);
            }
            if let Some(h) = hit {
                assert_eq!(c, 1.0, "left saturation at step {k} after {h}");
            }
        }
        // 0.2 + 0.18 k ≥ 1 first at k = 5 (steps are 0-indexed).
        assert_eq!(hit, Some(4));
        // Anti-windup: the integrator stops at the first value that saturates.
        assert!((s.pid_integrator - 5.0 * dt).abs() < 1e-9);
    }

    #[test]
    fn ventilation_schedule_and_range() {
        let r = RoomParams::default();
        let c = ControllerConfig::default();
        assert!((ventilation_flow(0.0, at_hour(10), &r, &c) - 0.08).abs() < 1e-15);
        assert!((ventilation_flow(1.0, at_hour(10), &r, &c) - 0.28).abs() < 1e-15);
        assert_eq!(ventilation_flow(1.0, at_hour(19), &r, &c), 0.0);
        assert!((ventilation_flow(0.5, at_hour(10), &r, &c) - 0.18).abs() < 1e-15);
        assert!(ventilation_flow(0.0, at_hour(8), &r, &c) > 0.0);
        assert_eq!(ventilation_flow(0.0, at_hour(18), &r, &c), 0.0);
    }

    #[test]
    fn infiltration_examples() {
        let r = RoomParams::default();
        let q_tight: f64 = 232.0 * (1.5 / 20.0) / 3600.0;
        assert!((q_tight - 4.8333e-3).abs() < 1e-7);
        let (li, lo) = infiltration_flow(0.0, 0.0, &r);
        assert!((li - q_tight).abs() < 1e-15);
        assert_eq!(li, lo);
        assert!((infiltration_flow(7.0, 0.0, &r).0 - q_tight).abs() < 1e-15);
        let (li, _) = infiltration_flow(2.0, 0.5, &r);
        assert!((li - (q_tight + 0.128)).abs() < 1e-12);
    }

    #[test]
    fn co2_equilibrium_and_steady_state() {
        let r = RoomParams::default();
        assert_eq!(co2_step(420.0, 0.1, 0.0, 180.0, &r), 420.0);
        let steady: f64 = 420.0 + 10.0 * 7.6e-6 / 0.1 * 1e6;
        assert!((steady - 1180.0).abs() < 1e-9);
        let mut c = 420.0;
        for _ in 0..2000 {
            c = co2_step(c, 0.1, 10.0, 180.0, &r);
        }
        assert!((c - steady).abs() / steady < 1e-6);
    }

    #[test]
    fn co2_zero_flow_is_linear_growth() {
        let r = RoomParams::default();
        let c = co2_step(500.0, 0.0, 2.0, 100.0, &r);
        let expected = 500.0 + 2.0 * r.gen_rate_per_person() * 1e6 / 232.0 * 100.0;
        assert!((c - expected).abs() < 1e-12);
    }

    #[test]
    fn noise_off_is_identity() {
        let ts = TimeSeries::week((0..100).map(|i| i as f64).collect()).unwrap();
        assert_eq!(add_noise(&ts, None, 1).unwrap(), ts);
        assert_eq!(add_noise(&ts, Some(f64::INFINITY), 1).unwrap(), ts);
        let flat = TimeSeries::week(vec![3.0; 10]).unwrap();
        assert!(matches!(
            add_noise(&flat, Some(10.0), 1),
            Err(Error::Arithmetic(_))
        ));
    }

    proptest! {
        #[test]
        fn saturation_monotone_in_unit_range(a in 0f64..2000.0, b in 0f64..2000.0) {
            let c = ControllerConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (sl, sh) = (saturation(lo, &c), saturation(hi, &c));
            prop_assert!(sl <= sh);
            prop_assert!((0.0..=1.0).contains(&sl) && (0.0..=1.0).contains(&sh));
        }

        #[test]
        fn decay_stays_between_current_and_outdoor(c0 in 421f64..3000.0, q in 1e-3f64..1.0) {
            let r = RoomParams::default();
            let c1 = co2_step(c0, q, 0.0, 180.0, &r);
            prop_assert!(c1 < c0 && c1 > 420.0);
        }
    }
}
