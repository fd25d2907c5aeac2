//! The six benchmark scenarios: occupancy level × window behaviour, each with
//! its occupancy profile, door events, window schedule and wind.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{
    canonical_start, TimeSeries, SAMPLES_PER_DAY, SAMPLES_PER_HOUR, STEP_S, WEEK_SAMPLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccupancyLevel {
    Low,
    Medium,
    High,
}

impl OccupancyLevel {
    pub const ALL: [OccupancyLevel; 3] = [Self::Low, Self::Medium, Self::High];

    pub fn peak(self) -> u32 {
        match self {
            Self::Low => 5,
            Self::Medium => 12,
            Self::High => 25,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Self::Low => "lo",
            Self::Medium => "mo",
            Self::High => "ho",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Closed,
    Open,
}

impl WindowMode {
    pub const ALL: [WindowMode; 2] = [Self::Closed, Self::Open];

    fn code(self) -> &'static str {
        match self {
            Self::Closed => "wc",
            Self::Open => "wo",
        }
    }
}

/// Scenario identity; displays as the dataset file stem (`kth_mowc`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioLabels {
    pub occupancy_level: OccupancyLevel,
    pub window_mode: WindowMode,
}

impl ScenarioLabels {
    /// Table order: the three closed-window sets, then the open ones.
    pub fn all() -> Vec<ScenarioLabels> {
        WindowMode::ALL
            .iter()
            .flat_map(|&window_mode| {
                OccupancyLevel::ALL
                    .iter()
                    .map(move |&occupancy_level| ScenarioLabels {
                        occupancy_level,
                        window_mode,
                    })
            })
            .collect()
    }

    pub fn name(&self) -> String {
        // kth_lowc: "lo" + "wc"; kth_mowo: "mo" + "wo"
        format!(
            "kth_{}{}",
            self.occupancy_level.code(),
            self.window_mode.code()
        )
    }
}

impl fmt::Display for ScenarioLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ScenarioLabels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stem = s.trim_end_matches(".csv").trim_end_matches(".mat");
        Self::all()
            .into_iter()
            .find(|l| l.name() == stem)
            .ok_or_else(|| Error::Argument(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub labels: ScenarioLabels,
    /// Seed for everything derived from this scenario downstream (noise).
    pub seed: u64,
    pub occupancy: TimeSeries,
    /// Sample indices at which occupancy may change value, increasing.
    pub door_events: Vec<usize>,
    pub window_opening: TimeSeries,
    pub wind_speed: TimeSeries,
}

impl Scenario {
    pub fn name(&self) -> String {
        self.labels.name()
    }
}

/// Window-opening fractions available to the generator.
pub const WINDOW_STEPS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

const DAY_OPEN: usize = 8 * SAMPLES_PER_HOUR;
const DAY_CLOSE: usize = 18 * SAMPLES_PER_HOUR;
const MIN_SEGMENT: usize = 4;
const FIRST_ARRIVAL: usize = 9 * SAMPLES_PER_HOUR;

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn is_weekday(t: NaiveDateTime) -> bool {
    !matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Day indices (0-based from the start of the week) that fall Monday..Friday.
pub fn weekday_indices(start: NaiveDateTime) -> Vec<u8> {
    (0..7u8)
        .filter(|&d| is_weekday(start + Duration::days(d as i64)))
        .collect()
}

/// Piecewise-constant integer occupancy for one week plus the door events.
pub fn gen_occupancy(level: OccupancyLevel, seed: u64) -> (TimeSeries, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peak = level.peak();
    let mut occ = vec![0.0; WEEK_SAMPLES];
    let mut events = Vec::new();

    for day in weekday_indices(canonical_start()) {
        let base = day as usize * SAMPLES_PER_DAY;
        let n_events = rng.random_range(4..=10usize);

        // First arrival 9:00-10:00, last departure 16:00-18:00.
        let arrive = FIRST_ARRIVAL + rng.random_range(0..=SAMPLES_PER_HOUR);
        let leave = DAY_CLOSE - rng.random_range(0..=40);
        let mut times = vec![arrive];
        let inner = n_events - 2;
        let span = (leave - arrive) / MIN_SEGMENT;
        let mut slots: Vec<usize> = (1..span).collect();
        for i in 0..inner {
            let j = rng.random_range(i..slots.len());
            slots.swap(i, j);
        }
        let mut picked: Vec<usize> = slots[..inner]
            .iter()
            .map(|s| arrive + s * MIN_SEGMENT)
            .collect();
        picked.sort_unstable();
        times.extend(picked);
        times.push(leave);

        let segments = n_events - 1;
        let mut levels: Vec<u32> = (0..segments)
            .map(|_| {
                if rng.random_bool(0.1) {
                    0
                } else {
                    rng.random_range(1..=peak)
                }
            })
            .collect();
        levels[0] = levels[0].max(1);
        let at_peak = rng.random_range(0..segments);
        levels[at_peak] = peak;

        for (k, w) in times.windows(2).enumerate() {
            for v in &mut occ[base + w[0]..base + w[1]] {
                *v = levels[k] as f64;
            }
        }
        events.extend(times.iter().map(|t| base + t));
    }

    (TimeSeries::week(occ).expect("nonempty"), events)
}

/// Window opening fraction for one week; zero throughout in closed mode.
pub fn gen_window_schedule(mode: WindowMode, seed: u64) -> TimeSeries {
    let mut w = vec![0.0; WEEK_SAMPLES];
    if mode == WindowMode::Open {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for day in weekday_indices(canonical_start()) {
            let base = day as usize * SAMPLES_PER_DAY;
            let n_openings = rng.random_range(1..=3usize);
            for _ in 0..n_openings {
                let start = rng.random_range(DAY_OPEN..DAY_CLOSE - SAMPLES_PER_HOUR);
                let len = rng.random_range(10..=60usize).min(DAY_CLOSE - start);
                // A short staircase of one to three steps.
                let steps = rng.random_range(1..=3usize);
                let step_len = len.div_ceil(steps);
                for s in 0..steps {
                    let level = WINDOW_STEPS[rng.random_range(1..WINDOW_STEPS.len())];
                    let a = start + s * step_len;
                    let b = (a + step_len).min(start + len);
                    for v in &mut w[base + a..base + b] {
                        *v = f64::max(*v, level);
                    }
                }
            }
        }
    }
    TimeSeries::week(w).expect("nonempty")
}

const WIND_MEAN: f64 = 3.0;
const WIND_SD: f64 = 1.2;
const WIND_TAU_S: f64 = 3.0 * 3600.0;
const WIND_MAX: f64 = 12.0;

/// Synthetic wind speed: a mean-reverting Gaussian recursion clipped to
/// [0, 12] m/s.
pub fn gen_wind(seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = STEP_S as f64;
    let a = (-dt / WIND_TAU_S).exp();
    let b = WIND_SD * (1.0 - a * a).sqrt();
    let mut state = WIND_MEAN;
    let values = (0..WEEK_SAMPLES)
        .map(|_| {
            let out = state.clamp(0.0, WIND_MAX);
            let z: f64 = StandardNormal.sample(&mut rng);
            state = WIND_MEAN + a * (state - WIND_MEAN) + b * z;
            out
        })
        .collect();
    TimeSeries::week(values).expect("nonempty")
}

/// Reads `timestamp,wind_speed` rows on any grid and resamples linearly onto
/// the canonical week; values beyond the file's extent are held constant.
pub fn load_wind_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(name, "missing column"))
    };
    let (ti, wi) = (col("timestamp")?, col("wind_speed")?);
    let mut points: Vec<(i64, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let t = crate::dataset::parse_timestamp(rec.get(ti).unwrap_or(""))
            .map_err(|_| Error::format("timestamp", "unparseable timestamp"))?;
        let w: f64 = rec
            .get(wi)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::format("wind_speed", "not a number"))?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::format(
                "wind_speed",
                "must be finite and nonnegative",
            ));
        }
        points.push(((t - canonical_start()).num_seconds(), w));
    }
    if points.is_empty() {
        return Err(Error::format("wind_speed", "no rows"));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::format("timestamp", "timestamps must increase"));
    }
    let values = (0..WEEK_SAMPLES)
        .map(|i| interp(&points, i as i64 * STEP_S as i64))
        .collect();
    TimeSeries::week(values)
}

fn interp(points: &[(i64, f64)], t: i64) -> f64 {
    let k = points.partition_point(|p| p.0 <= t);
    if k == 0 {
        return points[0].1;
    }
    if k == points.len() {
        return points[k - 1].1;
    }
    let (t0, v0) = points[k - 1];
    let (t1, v1) = points[k];
    v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path.display().to_string(), e.to_string())
}

pub fn make_scenario(labels: ScenarioLabels, base_seed: u64) -> Scenario {
    let level_salt = labels.occupancy_level as u64 + 1;
    let mode_salt = labels.window_mode as u64 + 1;
    let index = ScenarioLabels::all()
        .iter()
        .position(|l| *l == labels)
        .expect("labels are from the table") as u64;
    // Closed and open variants of a level share the occupancy profile, and all
    // scenarios share one week of weather.
    let (occupancy, door_events) = gen_occupancy(
        labels.occupancy_level,
        mix_seed(base_seed, 100 + level_salt),
    );
    let window_opening = gen_window_schedule(
        labels.window_mode,
        mix_seed(base_seed, 200 + 10 * level_salt + mode_salt),
    );
    Scenario {
        labels,
        seed: mix_seed(base_seed, 300 + index),
        occupancy,
        door_events,
        window_opening,
        wind_speed: gen_wind(mix_seed(base_seed, 400)),
    }
}

pub fn make_all_scenarios(base_seed: u64) -> Vec<Scenario> {
    ScenarioLabels::all()
        .into_iter()
        .map(|l| make_scenario(l, base_seed))
        .collect()
}
