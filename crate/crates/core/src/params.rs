//! Room and controller parameters, loadable from a TOML file in which every
//! field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical description of the simulated office room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomParams {
    /// m
    pub room_height: f64,
    /// m²
    pub floor_area: f64,
    /// m², summed over all windows
    pub window_area_total: f64,
    pub n_windows: u32,
    /// m²
    pub door_area: f64,
    /// m³/s
    pub vent_flow_min: f64,
    /// m³/s
    pub vent_flow_max: f64,
    /// air changes per hour at 50 Pa
    pub air_tightness_ach50: f64,
    /// ACH50 to natural-infiltration divisor
    pub ach50_divisor: f64,
    /// MET
    pub activity_met: f64,
    /// m³/s of CO₂ per person per MET
    pub co2_gen_per_met: f64,
    pub co2_outdoor_ppm: f64,
    /// Concentration at the first sample of the week.
    pub co2_initial_ppm: f64,
    /// Orifice factor for wind-driven flow through open windows.
    pub window_coeff: f64,
    pub vent_start_hour: f64,
    pub vent_end_hour: f64,
}

impl Default for RoomParams {
    fn default() -> Self {
        RoomParams {
            room_height: 2.9,
            floor_area: 80.0,
            window_area_total: 2.56,
            n_windows: 4,
            door_area: 1.6,
            vent_flow_min: 0.08,
            vent_flow_max: 0.28,
            air_tightness_ach50: 1.5,
            ach50_divisor: 20.0,
            activity_met: 1.8,
            co2_gen_per_met: 7.6e-6 / 1.8,
            co2_outdoor_ppm: 420.0,
            co2_initial_ppm: 420.0,
            window_coeff: 0.05,
            vent_start_hour: 8.0,
            vent_end_hour: 18.0,
        }
    }
}

impl RoomParams {
    /// m³
    pub fn volume(&self) -> f64 {
        self.room_height * self.floor_area
    }

    /// CO₂ generation per occupant, m³/s.
    pub fn gen_rate_per_person(&self) -> f64 {
        self.co2_gen_per_met * self.activity_met
    }

    /// Envelope leakage with all openings closed, m³/s.
    pub fn envelope_leakage(&self) -> f64 {
        self.volume() * (self.air_tightness_ach50 / self.ach50_divisor) / 3600.0
    }

    /// CO₂ rise in ppm that one occupant causes over a single step of `dt`
    /// seconds at base ventilation. This is the first tap of the room's
    /// impulse response from occupancy to CO₂: the controller reacts one step
    /// late, so feedback cannot change it.
    pub fn co2_rise_per_person(&self, dt: f64) -> f64 {
        let g = self.gen_rate_per_person() * 1e6;
        let q = self.vent_flow_min + self.envelope_leakage();
        g * (1.0 - (-q * dt / self.volume()).exp()) / q
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("room_height", self.room_height),
            ("floor_area", self.floor_area),
            ("air_tightness_ach50", self.air_tightness_ach50),
            ("ach50_divisor", self.ach50_divisor),
            ("co2_outdoor_ppm", self.co2_outdoor_ppm),
            ("co2_initial_ppm", self.co2_initial_ppm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("window_area_total", self.window_area_total),
            ("activity_met", self.activity_met),
            ("co2_gen_per_met", self.co2_gen_per_met),
            ("window_coeff", self.window_coeff),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(0.0 < self.vent_flow_min && self.vent_flow_min < self.vent_flow_max) {
            return Err(Error::Config(format!(
                "need 0 < vent_flow_min < vent_flow_max, got {} and {}",
                self.vent_flow_min, self.vent_flow_max
            )));
        }
        if !(0.0 <= self.vent_start_hour
            && self.vent_start_hour < self.vent_end_hour
            && self.vent_end_hour <= 24.0)
        {
            return Err(Error::Config(
                "ventilation schedule is not a valid day interval".into(),
            ));
        }
        Ok(())
    }
}

/// Saturation plus PID controller driving the ventilation damper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub sat_low_ppm: f64,
    pub sat_high_ppm: f64,
    pub kp: f64,
    /// 1/s
    pub ki: f64,
    /// s
    pub kd: f64,
    /// Base ventilation while the schedule is active, m³/s.
    pub v0_flow: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            sat_low_ppm: 700.0,
            sat_high_ppm: 1100.0,
            kp: 2.0,
            ki: 0.01,
            kd: 0.0,
            v0_flow: 0.08,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self, room: &RoomParams) -> Result<()> {
        if self.sat_low_ppm.partial_cmp(&self.sat_high_ppm) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(
                "sat_low_ppm must be below sat_high_ppm".into(),
            ));
        }
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd.is_finite()) {
            return Err(Error::Config("kp and ki must be nonnegative".into()));
        }
        if !(room.vent_flow_min <= self.v0_flow && self.v0_flow <= room.vent_flow_max) {
            return Err(Error::Config(format!(
                "v0_flow {} outside [{}, {}]",
                self.v0_flow, room.vent_flow_min, room.vent_flow_max
            )));
        }
        Ok(())
    }
}

/// Everything the simulator needs besides the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub room: RoomParams,
    pub controller: ControllerConfig,
    /// Target SNR of the measurement noise; `None` disables noise.
    pub snr_db: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            room: RoomParams::default(),
            controller: ControllerConfig::default(),
            snr_db: Some(10.0),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.controller.validate(&self.room)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }
}
