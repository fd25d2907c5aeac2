//! One simulated week: nine channels on a shared grid, persisted as CSV with
//! a JSON sidecar for metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SimConfig;
use crate::scenario::ScenarioLabels;
use crate::timeseries::TimeSeries;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Channel names in file column order.
pub const CHANNELS: [&str; 9] = [
    "occupancy",
    "co2",
    "co2_noise",
    "outflow_leakages",
    "inflow_leakages",
    "outflow_ventilation",
    "inflow_ventilation",
    "ventilation_control",
    "window_opening",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenario: ScenarioLabels,
    pub seed: u64,
    pub params: SimConfig,
    /// Door-sensor events as sample indices into the week.
    pub door_events: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub occupancy: TimeSeries,
    pub co2: TimeSeries,
    pub co2_noise: TimeSeries,
    pub outflow_leakages: TimeSeries,
    pub inflow_leakages: TimeSeries,
    pub outflow_ventilation: TimeSeries,
    pub inflow_ventilation: TimeSeries,
    pub ventilation_control: TimeSeries,
    pub window_opening: TimeSeries,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn name(&self) -> String {
        self.meta.scenario.name()
    }

    pub fn len(&self) -> usize {
        self.co2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.co2.is_empty()
    }

    pub fn channels(&self) -> [(&'static str, &TimeSeries); 9] {
        [
            (CHANNELS[0], &self.occupancy),
            (CHANNELS[1], &self.co2),
            (CHANNELS[2], &self.co2_noise),
            (CHANNELS[3], &self.outflow_leakages),
            (CHANNELS[4], &self.inflow_leakages),
            (CHANNELS[5], &self.outflow_ventilation),
            (CHANNELS[6], &self.inflow_ventilation),
            (CHANNELS[7], &self.ventilation_control),
            (CHANNELS[8], &self.window_opening),
        ]
    }

    pub fn channel(&self, name: &str) -> Option<&TimeSeries> {
        self.channels()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, ts)| ts)
    }

    /// Checks the shared-grid and value-range invariants.
    pub fn validate(&self) -> Result<()> {
        let reference = &self.co2;
        for (name, ts) in self.channels() {
            if !ts.same_grid(reference) {
                return Err(Error::format(name, "channel grid differs from `co2`"));
            }
            if ts.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::format(name, "non-finite value"));
            }
        }
        if self
            .occupancy
            .values()
            .iter()
            .any(|&v| v < 0.0 || v.fract() != 0.0)
        {
            return Err(Error::format("occupancy", "must be nonnegative integers"));
        }
        if self
            .window_opening
            .values()
            .iter()
            .any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::format("window_opening", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| Error::format("timestamp", e.to_string()))
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<stem>.csv` and its `<stem>.json` sidecar.
pub fn write_dataset(ds: &Dataset, csv_path: impl AsRef<Path>) -> Result<()> {
    let csv_path = csv_path.as_ref();
    ds.validate()?;
    let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(csv_path, e);
    write!(w, "timestamp").map_err(io)?;
    for name in CHANNELS {
        write!(w, ",{name}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let channels = ds.channels();
    for i in 0..ds.len() {
        write!(w, "{}", ds.co2.time_at(i).format(TIMESTAMP_FORMAT)).map_err(io)?;
        for (_, ts) in &channels {
            // `Display` for f64 is the shortest string that parses back exactly.
            write!(w, ",{}", ts.values()[i]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let meta_path = sidecar_path(csv_path);
    let json = serde_json::to_string_pretty(&ds.meta)
        .map_err(|e| Error::format("metadata", e.to_string()))?;
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn read_dataset(csv_path: impl AsRef<Path>) -> Result<Dataset> {
    let csv_path = csv_path.as_ref();
    let meta_path = sidecar_path(csv_path);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::format("metadata", e.to_string()))?;

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(csv_path)
        .map_err(|e| Error::format("header", e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::format("header", e.to_string()))?
        .clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(name, "missing column"))
    };
    let ts_col = index_of("timestamp")?;
    let cols = CHANNELS
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<Vec<_>>>()?;

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); CHANNELS.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format("row", e.to_string()))?;
        times.push(parse_timestamp(rec.get(ts_col).unwrap_or(""))?);
        for (k, &c) in cols.iter().enumerate() {
            let field = rec.get(c).ok_or_else(|| {
                Error::format(
                    CHANNELS[k],
                    format!("row {} is missing this value", row + 1),
                )
            })?;
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(
                    CHANNELS[k],
                    format!("row {}: `{field}` is not a number", row + 1),
                )
            })?;
            values[k].push(v);
        }
    }
    if times.is_empty() {
        return Err(Error::format("timestamp", "file has no data rows"));
    }
    let step = if times.len() > 1 {
        (times[1] - times[0]).num_seconds()
    } else {
        crate::timeseries::STEP_S as i64
    };
    if step <= 0
        || times
            .windows(2)
            .any(|w| (w[1] - w[0]).num_seconds() != step)
    {
        return Err(Error::format(
            "timestamp",
            "samples are not uniformly spaced",
        ));
    }
    let mut series = values
        .into_iter()
        .map(|v| TimeSeries::new(times[0], step as u32, v))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || series.next().expect("nine channels");
    let ds = Dataset {
        occupancy: next(),
        co2: next(),
        co2_noise: next(),
        outflow_leakages: next(),
        inflow_leakages: next(),
        outflow_ventilation: next(),
        inflow_ventilation: next(),
        ventilation_control: next(),
        window_opening: next(),
        meta,
    };
    ds.validate()?;
    Ok(ds)
}
