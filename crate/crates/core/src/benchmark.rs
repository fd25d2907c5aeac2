//! Evaluation harness: per-weekday problem extraction, fit scores, and
//! aggregated reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blind::{
    baseline_identify, kernel_identify, BlindIdProblem, BlindIdResult, KernelOptions, Method,
    ScaleMode, SnapGrid,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scenario::weekday_indices;
use crate::timeseries::{mean, DayWindow};

/// `1 − ‖ŷ − y‖ / ‖y − mean(y)‖`.
pub fn fit_co2(y_hat: &[f64], y_true: &[f64]) -> Result<f64> {
    if y_hat.len() != y_true.len() || y_true.is_empty() {
        return Err(Error::Argument("fit inputs differ in length".into()));
    }
    let m = mean(y_true);
    let den: f64 = y_true.iter().map(|y| (y - m).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::Arithmetic("reference CO₂ is constant".into()));
    }
    let num: f64 = y_hat.iter().zip(y_true).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - (num / den).sqrt())
}

/// `1 − ‖ô − o‖ / ‖o‖`; the reference mean is deliberately not removed.
pub fn fit_occupancy(o_hat: &[f64], o_true: &[f64]) -> Result<f64> {
    if o_hat.len() != o_true.len() || o_true.is_empty() {
        return Err(Error::Argument("fit inputs differ in length".into()));
    }
    let den: f64 = o_true.iter().map(|o| o * o).sum();
    if den == 0.0 {
        return Err(Error::Arithmetic(
            "reference occupancy is identically zero".into(),
        ));
    }
    let num: f64 = o_hat.iter().zip(o_true).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - (num / den).sqrt())
}

/// Where the segment boundaries of a day problem come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventSource {
    /// Change points of the occupancy channel.
    #[default]
    ChangePoints,
    /// The door-sensor events stored with the dataset.
    DoorSensor,
}

/// One weekday's identification problem. Holds no occupancy values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProblem {
    pub day_index: u8,
    pub date: String,
    pub window: DayWindow,
    /// Index of the first window sample within the week.
    pub offset: usize,
    pub problem: BlindIdProblem,
}

/// Maps week-level event indices into window-local ones ending at `N`.
pub fn local_events(events: impl IntoIterator<Item = usize>, from: usize, to: usize) -> Vec<usize> {
    let mut local: Vec<usize> = events
        .into_iter()
        .filter(|&e| e > from && e < to)
        .map(|e| e - from)
        .collect();
    local.sort_unstable();
    local.dedup();
    local.push(to - from);
    local
}

pub fn extract_day_problems(
    ds: &Dataset,
    window: &DayWindow,
    order: usize,
    source: EventSource,
) -> Result<Vec<DayProblem>> {
    ds.validate()?;
    let outdoor = ds.meta.params.room.co2_outdoor_ppm;
    weekday_indices(ds.co2.start())
        .into_iter()
        .map(|day| {
            let w = window.on_day(day)?;
            let (from, to) = w.index_range(&ds.co2_noise)?;
            let y: Vec<f64> = ds.co2_noise.values()[from..to]
                .iter()
                .map(|c| c - outdoor)
                .collect();
            let events = match source {
                EventSource::ChangePoints => {
                    let occ = ds.occupancy.values();
                    let changes = (from + 1..to).filter(|&i| occ[i] != occ[i - 1]);
                    local_events(changes, from, to)
                }
                EventSource::DoorSensor => {
                    local_events(ds.meta.door_events.iter().copied(), from, to)
                }
            };
            Ok(DayProblem {
                day_index: day,
                date: ds.co2.time_at(from).date().to_string(),
                window: w,
                offset: from,
                problem: BlindIdProblem::new(y, events, order)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    pub window: DayWindow,
    pub order: usize,
    pub events: EventSource,
    pub kernel: KernelOptions,
    pub snap: SnapGrid,
    /// Round the rescaled occupancy estimate to whole people before scoring.
    pub round_occupancy: bool,
    /// Centre the integer-snap search on the first-step CO₂ rise implied by
    /// the dataset's room parameters (unless `snap.first_tap` is already set).
    pub anchor_first_tap: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            window: DayWindow::office(0),
            order: 30,
            events: EventSource::ChangePoints,
            kernel: KernelOptions::default(),
            snap: SnapGrid::default(),
            round_occupancy: true,
            anchor_first_tap: true,
        }
    }
}

/// Largest FIR order, up to `requested`, at which the baseline's lifted
/// regressor has full column rank.
///
/// The lag-`k` columns are unit steps starting at `T_{i-1} + k`, so they are
/// independent exactly when every segment is at least `n` samples long and
/// the last one is longer than `n`.
pub fn baseline_order(problem: &BlindIdProblem, requested: usize) -> usize {
    let lengths = problem.event_matrix().segment_lengths();
    let (last, rest) = lengths.split_last().expect("at least one segment");
    rest.iter()
        .copied()
        .fold(requested.min(last.saturating_sub(1)), usize::min)
        .max(1)
}

pub fn identify(day: &DayProblem, method: Method, opts: &BenchOptions) -> Result<BlindIdResult> {
    match method {
        Method::Kernel => kernel_identify(&day.problem, &opts.kernel),
        Method::Baseline => {
            let mut p = day.problem.clone();
            p.order = baseline_order(&p, p.order);
            baseline_identify(&p)
        }
    }
}

/// Scores for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFit {
    pub day_index: u8,
    pub date: String,
    pub fit_co2: Option<f64>,
    pub fit_occupancy: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Snap grid for a dataset, with the first-tap anchor filled in from its room.
pub fn snap_grid(ds: &Dataset, opts: &BenchOptions) -> SnapGrid {
    let mut grid = opts.snap;
    if opts.anchor_first_tap && grid.first_tap.is_none() {
        let room = &ds.meta.params.room;
        grid.first_tap = Some(room.co2_rise_per_person(ds.co2_noise.step_s() as f64));
    }
    grid
}

/// Occupancy estimate on the sample grid after integer-snap rescaling.
pub fn occupancy_estimate(
    day: &DayProblem,
    result: &BlindIdResult,
    grid: &SnapGrid,
    round: bool,
) -> Result<Vec<f64>> {
    let h = day.problem.event_matrix();
    let weights: Vec<f64> = h.segment_lengths().iter().map(|&l| l as f64).collect();
    let snapped = if result.q.iter().all(|&v| v == 0.0) {
        result.clone()
    } else {
        result.rescaled(ScaleMode::IntegerSnap, &weights, grid)?
    };
    let mut o = h.expand(&snapped.x);
    if round {
        o.iter_mut().for_each(|v| *v = v.round());
    }
    Ok(o)
}

/// Scores a result against the noiseless CO₂ and true occupancy.
pub fn evaluate_day(
    ds: &Dataset,
    day: &DayProblem,
    result: &BlindIdResult,
    opts: &BenchOptions,
) -> Result<(f64, f64)> {
    let n = day.problem.samples();
    let range = day.offset..day.offset + n;
    let outdoor = ds.meta.params.room.co2_outdoor_ppm;
    let y_true: Vec<f64> = ds.co2.values()[range.clone()]
        .iter()
        .map(|c| c - outdoor)
        .collect();
    let o_true = &ds.occupancy.values()[range];
    let fc = fit_co2(&result.y_hat, &y_true)?;
    let o_hat = occupancy_estimate(day, result, &snap_grid(ds, opts), opts.round_occupancy)?;
    let fo = fit_occupancy(&o_hat, o_true)?;
    Ok((fc, fo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dataset: String,
    pub method: Method,
    pub window: String,
    pub days: Vec<DayFit>,
    pub avg_fit_co2: Option<f64>,
    pub avg_fit_occupancy: Option<f64>,
}

fn average(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

impl FitReport {
    pub fn new(dataset: String, method: Method, window: String, days: Vec<DayFit>) -> Self {
        let avg_fit_co2 = average(days.iter().map(|d| d.fit_co2));
        let avg_fit_occupancy = average(days.iter().map(|d| d.fit_occupancy));
        FitReport {
            dataset,
            method,
            window,
            days,
            avg_fit_co2,
            avg_fit_occupancy,
        }
    }
}

fn run_day(ds: &Dataset, day: &DayProblem, method: Method, opts: &BenchOptions) -> DayFit {
    let scored = identify(day, method, opts)
        .and_then(|r| evaluate_day(ds, day, &r, opts).map(|f| (f, r.diagnostics.converged)));
    match scored {
        Ok(((fc, fo), converged)) => DayFit {
            day_index: day.day_index,
            date: day.date.clone(),
            fit_co2: Some(fc),
            fit_occupancy: Some(fo),
            converged,
            error: None,
        },
        Err(e) => DayFit {
            day_index: day.day_index,
            date: day.date.clone(),
            fit_co2: None,
            fit_occupancy: None,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `method` on every weekday of every dataset. Days that fail are kept
/// as empty entries; only problem extraction errors abort the run.
pub fn run_benchmark(
    datasets: &[Dataset],
    method: Method,
    opts: &BenchOptions,
) -> Result<Vec<FitReport>> {
    let problems = datasets
        .iter()
        .map(|ds| extract_day_problems(ds, &opts.window, opts.order, opts.events))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, &DayProblem)> = problems
        .iter()
        .enumerate()
        .flat_map(|(i, days)| days.iter().map(move |d| (i, d)))
        .collect();
    let fits: Vec<(usize, DayFit)> = jobs
        .par_iter()
        .map(|&(i, day)| (i, run_day(&datasets[i], day, method, opts)))
        .collect();
    Ok(datasets
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let days = fits
                .iter()
                .filter(|(j, _)| *j == i)
                .map(|(_, f)| f.clone())
                .collect();
            FitReport::new(ds.name(), method, opts.window.clock_label(), days)
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub const REPORT_HEADER: &str = "dataset,day,method,fit_co2,fit_occupancy,converged";

/// Machine-readable report, one row per dataset-day.
pub fn report_csv(reports: &[FitReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        for d in &r.days {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.dataset,
                d.date,
                r.method.name(),
                fmt_opt(d.fit_co2),
                fmt_opt(d.fit_occupancy),
                d.converged
            );
        }
    }
    out
}

/// Aligned plain-text table of per-dataset averages, in percent.
pub fn report_table(reports: &[FitReport]) -> String {
    let pct = |v: Option<f64>| v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or("-".into());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<9} {:>27} {:>23} {:>5}",
        "Database", "Method", "Average occupancy fit (%)", "Average CO2 fit (%)", "Days"
    );
    let _ = writeln!(out, "{}", "-".repeat(78));
    for r in reports {
        let ok = r.days.iter().filter(|d| d.fit_co2.is_some()).count();
        let _ = writeln!(
            out,
            "{:<10} {:<9} {:>27} {:>23} {:>5}",
            r.dataset,
            r.method.name(),
            pct(r.avg_fit_occupancy),
            pct(r.avg_fit_co2),
            format!("{ok}/{}", r.days.len())
        );
    }
    out
}
