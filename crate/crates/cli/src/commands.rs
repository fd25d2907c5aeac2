use std::fs;
use std::path::{Path, PathBuf};

use roomid_core::benchmark::{
    self, evaluate_day, extract_day_problems, occupancy_estimate, report_csv, report_table,
    run_benchmark, snap_grid, BenchOptions, DayProblem,
};
use roomid_core::blind::Method;
use roomid_core::plot::{render, Panel, Series};
use roomid_core::scenario::{load_wind_csv, make_scenario};
use roomid_core::{
    read_dataset, simulate_week, write_dataset, BlindIdResult, Dataset, Error, Result,
    ScenarioLabels, SimConfig,
};
use serde::Serialize;

use crate::{BenchmarkArgs, GenerateArgs, IdentArgs, IdentifyArgs, SimArgs};

/// Snapshot of a command's settings, written next to its outputs.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    version: &'a str,
    out: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scenarios: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    methods: Vec<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wind_csv: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<&'a SimConfig>,
}

impl<'a> RunConfig<'a> {
    fn new(command: &'a str, out: &'a Path) -> Self {
        RunConfig {
            command,
            version: env!("CARGO_PKG_VERSION"),
            out,
            seed: None,
            scenarios: Vec::new(),
            methods: Vec::new(),
            window: None,
            order: None,
            noise: None,
            wind_csv: None,
            dataset: None,
            data: None,
            sim: None,
        }
    }

    fn write(&self) -> Result<()> {
        write_json(
            &self.out.join(format!("{}_config.json", self.command)),
            self,
        )
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        channel: path.display().to_string(),
        reason: e.to_string(),
    })?;
    write_text(path, &(text + "\n"))
}

fn sim_config(args: &SimArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if args.no_noise {
        cfg.snr_db = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn selected(all: bool, chosen: &[ScenarioLabels]) -> Vec<ScenarioLabels> {
    if all || chosen.is_empty() {
        ScenarioLabels::all()
    } else {
        chosen.to_vec()
    }
}

fn simulate(labels: &[ScenarioLabels], args: &SimArgs, cfg: &SimConfig) -> Result<Vec<Dataset>> {
    let wind = args.wind_csv.as_ref().map(load_wind_csv).transpose()?;
    labels
        .iter()
        .map(|&l| {
            let mut sc = make_scenario(l, args.seed);
            if let Some(w) = &wind {
                sc.wind_speed = w.clone();
            }
            simulate_week(&sc, cfg, sc.seed)
        })
        .collect()
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let out = &args.out.out;
    let cfg = sim_config(&args.sim)?;
    let labels = selected(args.all, &args.scenario);
    let datasets = simulate(&labels, &args.sim, &cfg)?;
    create_dir(out)?;
    for ds in &datasets {
        let path = out.join(format!("{}.csv", ds.name()));
        write_dataset(ds, &path)?;
        println!("wrote {}", path.display());
    }
    RunConfig {
        seed: Some(args.sim.seed),
        scenarios: labels.iter().map(|l| l.name()).collect(),
        noise: Some(cfg.snr_db.is_some()),
        wind_csv: args.sim.wind_csv.as_deref(),
        sim: Some(&cfg),
        ..RunConfig::new("generate", out)
    }
    .write()
}

fn bench_options(ident: &IdentArgs) -> BenchOptions {
    BenchOptions {
        window: ident.window,
        order: ident.order,
        ..BenchOptions::default()
    }
}

/// Per-day output record of `identify`.
#[derive(Debug, Serialize)]
struct DayRecord<'a> {
    dataset: String,
    date: &'a str,
    day_index: u8,
    window: String,
    fit_co2: f64,
    fit_occupancy: f64,
    /// Occupancy estimate on the window grid after integer-snap rescaling.
    occupancy_estimate: Vec<f64>,
    result: &'a BlindIdResult,
}

fn overlay(ds: &Dataset, day: &DayProblem, result: &BlindIdResult, o_hat: &[f64]) -> String {
    let n = day.problem.samples();
    let range = day.offset..day.offset + n;
    let outdoor = ds.meta.params.room.co2_outdoor_ppm;
    let predicted: Vec<f64> = result.y_hat.iter().map(|v| v + outdoor).collect();
    let title = format!("{} {}", ds.name(), day.date);
    render(
        &[
            Panel {
                title: &title,
                y_label: "CO2 (ppm)",
                series: vec![
                    Series {
                        label: "measured",
                        color: "#9aa5b1",
                        values: &ds.co2_noise.values()[range.clone()],
                    },
                    Series {
                        label: "noiseless",
                        color: "#1f4e79",
                        values: &ds.co2.values()[range.clone()],
                    },
                    Series {
                        label: "predicted",
                        color: "#c0392b",
                        values: &predicted,
                    },
                ],
            },
            Panel {
                title: "occupancy",
                y_label: "people",
                series: vec![
                    Series {
                        label: "true",
                        color: "#1f4e79",
                        values: &ds.occupancy.values()[range],
                    },
                    Series {
                        label: "estimated",
                        color: "#c0392b",
                        values: o_hat,
                    },
                ],
            },
        ],
        "sample (3 min)",
    )
}

pub fn identify(args: &IdentifyArgs) -> Result<()> {
    let out = &args.out.out;
    let ds = read_dataset(&args.dataset)?;
    let opts = bench_options(&args.ident);
    let days = extract_day_problems(&ds, &opts.window, opts.order, opts.events)?;
    let grid = snap_grid(&ds, &opts);
    create_dir(out)?;
    let stem = format!("{}_{}", ds.name(), args.method.name());
    let mut first_err = None;
    for day in &days {
        let result = match benchmark::identify(day, args.method, &opts) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{} {}: {e}", ds.name(), day.date);
                first_err.get_or_insert(e);
                continue;
            }
        };
        let (fc, fo) = evaluate_day(&ds, day, &result, &opts)?;
        let o_hat = occupancy_estimate(day, &result, &grid, opts.round_occupancy)?;
        let record = DayRecord {
            dataset: ds.name(),
            date: &day.date,
            day_index: day.day_index,
            window: opts.window.clock_label(),
            fit_co2: fc,
            fit_occupancy: fo,
            occupancy_estimate: o_hat.clone(),
            result: &result,
        };
        let base = out.join(format!("{stem}_{}", day.date));
        write_json(&base.with_extension("json"), &record)?;
        if !args.no_plots {
            write_text(
                &base.with_extension("svg"),
                &overlay(&ds, day, &result, &o_hat),
            )?;
        }
        println!(
            "{} {} {}: CO2 fit {:.2}%, occupancy fit {:.2}%",
            ds.name(),
            day.date,
            args.method.name(),
            100.0 * fc,
            100.0 * fo
        );
    }
    RunConfig {
        methods: vec![args.method],
        window: Some(opts.window.clock_label()),
        order: Some(opts.order),
        dataset: Some(&args.dataset),
        sim: Some(&ds.meta.params),
        ..RunConfig::new("identify", out)
    }
    .write()?;
    first_err.map_or(Ok(()), Err)
}

fn dataset_path(dir: &Path, labels: ScenarioLabels) -> PathBuf {
    dir.join(format!("{}.csv", labels.name()))
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let out = &args.out.out;
    let labels = selected(false, &args.scenario);
    let cfg = sim_config(&args.sim)?;
    let data_dir = args.data.clone().unwrap_or_else(|| out.clone());
    let datasets = if args.generate {
        simulate(&labels, &args.sim, &cfg)?
    } else {
        labels
            .iter()
            .map(|&l| read_dataset(dataset_path(&data_dir, l)))
            .collect::<Result<Vec<_>>>()?
    };
    let opts = bench_options(&args.ident);

    let mut reports = Vec::new();
    let mut tables = String::new();
    for &method in &args.methods {
        let r = run_benchmark(&datasets, method, &opts)?;
        for report in &r {
            for d in report.days.iter().filter(|d| d.error.is_some()) {
                eprintln!(
                    "{} {} {}: {}",
                    report.dataset,
                    d.date,
                    method.name(),
                    d.error.as_deref().unwrap_or_default()
                );
            }
        }
        tables.push_str(&report_table(&r));
        tables.push('\n');
        reports.extend(r);
    }
    create_dir(out)?;
    write_text(&out.join("report.csv"), &report_csv(&reports))?;
    write_text(&out.join("report.txt"), &tables)?;
    print!("{tables}");
    RunConfig {
        seed: args.generate.then_some(args.sim.seed),
        scenarios: labels.iter().map(|l| l.name()).collect(),
        methods: args.methods.clone(),
        window: Some(opts.window.clock_label()),
        order: Some(opts.order),
        noise: args.generate.then_some(cfg.snr_db.is_some()),
        data: (!args.generate).then_some(data_dir.as_path()),
        sim: args.generate.then_some(&cfg),
        ..RunConfig::new("benchmark", out)
    }
    .write()
}
