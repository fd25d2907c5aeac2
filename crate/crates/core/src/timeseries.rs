//! Uniformly sampled signals and the day-window arithmetic used to cut them
//! into daily identification records.

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical sampling step: three minutes.
pub const STEP_S: u32 = 180;
/// Samples per hour at the canonical step.
pub const SAMPLES_PER_HOUR: usize = 20;
/// Samples per day at the canonical step.
pub const SAMPLES_PER_DAY: usize = 480;
/// Samples in one simulated week.
pub const WEEK_SAMPLES: usize = 7 * SAMPLES_PER_DAY;

/// The simulated week starts at midnight on 13 July 2014 (a Sunday).
pub fn canonical_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2014, 7, 13)
        .unwrap()
        .and_time(NaiveTime::MIN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: NaiveDateTime,
    step_s: u32,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: NaiveDateTime, step_s: u32, values: Vec<f64>) -> Result<Self> {
        if step_s == 0 {
            return Err(Error::Argument("time step must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Argument("time series must not be empty".into()));
        }
        Ok(TimeSeries {
            start,
            step_s,
            values,
        })
    }

    /// A series on the canonical week grid.
    pub fn week(values: Vec<f64>) -> Result<Self> {
        Self::new(canonical_start(), STEP_S, values)
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step_s(&self) -> u32 {
        self.step_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::seconds(index as i64 * self.step_s as i64)
    }

    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        self.start == other.start && self.step_s == other.step_s && self.len() == other.len()
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.start, self.step_s, values)
    }

    /// Contiguous sub-series `[from, to)` by sample index.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::Range(format!(
                "slice {from}..{to} outside series of length {}",
                self.len()
            )));
        }
        Self::new(
            self.time_at(from),
            self.step_s,
            self.values[from..to].to_vec(),
        )
    }

    /// Sub-series covering `window` on day `window.day_index` (counted from
    /// the calendar date of the first sample).
    pub fn slice_window(&self, window: &DayWindow) -> Result<Self> {
        let (from, to) = window.index_range(self)?;
        self.slice(from, to)
    }
}

/// A clock interval on one day of a weekly record. Both ends are inclusive,
/// except that an end of 24:00 stops before the following midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub day_index: u8,
    pub start_min: u32,
    pub end_min: u32,
}

impl DayWindow {
    pub fn new(day_index: u8, start_min: u32, end_min: u32) -> Result<Self> {
        if day_index > 6 {
            return Err(Error::Range(format!(
                "day index {day_index} outside the week (0..=6)"
            )));
        }
        if start_min >= end_min || end_min > 24 * 60 {
            return Err(Error::Range(format!(
                "invalid clock window {start_min}..{end_min} minutes"
            )));
        }
        Ok(DayWindow {
            day_index,
            start_min,
            end_min,
        })
    }

    pub fn hours(day_index: u8, start_hour: u32, end_hour: u32) -> Result<Self> {
        Self::new(day_index, start_hour * 60, end_hour * 60)
    }

    /// The 9:00 to 18:00 evaluation window.
    pub fn office(day_index: u8) -> Self {
        Self::hours(day_index, 9, 18).expect("static window is valid")
    }

    pub fn on_day(&self, day_index: u8) -> Result<Self> {
        Self::new(day_index, self.start_min, self.end_min)
    }

    /// Parses `HH:MM-HH:MM`; the day index is left at 0.
    pub fn parse_clock(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("window `{s}` is not HH:MM-HH:MM"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let parse = |t: &str| -> Result<u32> {
            let (h, m) = t.trim().split_once(':').ok_or_else(bad)?;
            let h: u32 = h.parse().map_err(|_| bad())?;
            let m: u32 = m.parse().map_err(|_| bad())?;
            if m >= 60 || h > 24 || (h == 24 && m > 0) {
                return Err(bad());
            }
            Ok(h * 60 + m)
        };
        Self::new(0, parse(a)?, parse(b)?)
    }

    pub fn clock_label(&self) -> String {
        format!(
            "{:02}:{:02}-{:02}:{:02}",
            self.start_min / 60,
            self.start_min % 60,
            self.end_min / 60,
            self.end_min % 60
        )
    }

    /// Number of samples the window spans at the given step.
    pub fn sample_count(&self, step_s: u32) -> usize {
        let span = ((self.end_min - self.start_min) * 60 / step_s) as usize;
        if self.end_min == 24 * 60 {
            span
        } else {
            span + 1
        }
    }

    /// Half-open index range of the window within `ts`.
    pub fn index_range(&self, ts: &TimeSeries) -> Result<(usize, usize)> {
        let step = ts.step_s() as i64;
        let t0 = ts.start();
        let midnight = t0.date().and_time(NaiveTime::MIN);
        let day_start = midnight + Duration::days(self.day_index as i64);
        let begin = day_start + Duration::minutes(self.start_min as i64);
        let offset = (begin - t0).num_seconds();
        if offset < 0 || offset % step != 0 || (self.start_min as i64 * 60) % step != 0 {
            return Err(Error::Range(format!(
                "window {} on day {} does not start on the series grid",
                self.clock_label(),
                self.day_index
            )));
        }
        let from = (offset / step) as usize;
        let to = from + self.sample_count(ts.step_s());
        if to > ts.len() {
            return Err(Error::Range(format!(
                "window {} on day {} runs past the end of the series",
                self.clock_label(),
                self.day_index
            )));
        }
        Ok((from, to))
    }
}

/// Fractional hour of day of a timestamp.
pub fn hour_of_day(t: NaiveDateTime) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Signal-to-noise ratio in dB, using the mean-removed signal variance.
pub fn snr_db(signal: &TimeSeries, noise: &TimeSeries) -> Result<f64> {
    if !signal.same_grid(noise) {
        return Err(Error::Argument(
            "signal and noise are on different grids".into(),
        ));
    }
    snr_db_values(signal.values(), noise.values())
}

pub fn snr_db_values(signal: &[f64], noise: &[f64]) -> Result<f64> {
    if signal.len() != noise.len() || signal.is_empty() {
        return Err(Error::Argument("signal and noise lengths differ".into()));
    }
    let vn = variance(noise);
    if vn <= 0.0 || !vn.is_finite() {
        return Err(Error::Arithmetic("noise has zero variance".into()));
    }
    Ok(10.0 * (variance(signal) / vn).log10())
}
