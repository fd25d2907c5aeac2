//! Simulation and blind occupancy identification for a single office room.
//!
//! The crate regenerates week-long CO₂ records of a ventilated room under
//! six occupancy/window scenarios, then estimates the occupancy signal from
//! CO₂ and door events alone with two methods: a lifted least-squares
//! baseline and a kernel-regularised alternating scheme.

pub mod benchmark;
pub mod blind;
pub mod dataset;
pub mod error;
pub mod params;
pub mod plot;
pub mod scenario;
pub mod sim;
pub mod timeseries;

pub use blind::{BlindIdProblem, BlindIdResult, KernelOptions, ScaleMode};
pub use dataset::{read_dataset, write_dataset, Dataset, DatasetMeta};
pub use error::{Error, Result};
pub use params::{ControllerConfig, RoomParams, SimConfig};
pub use scenario::{make_all_scenarios, OccupancyLevel, Scenario, ScenarioLabels, WindowMode};
pub use sim::simulate_week;
pub use timeseries::{DayWindow, TimeSeries};
