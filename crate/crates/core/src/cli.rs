//! Experiment configs, run manifests and the `longcal` subcommands.
//!
//! Every subcommand writes into an output directory and finishes with a
//! `manifest.json` listing its inputs and outputs with SHA-256 hashes.
//! Outputs are deterministic for a fixed config and seed, except the files
//! listed under `unhashed` (wall-clock timings).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::offline::{cross_validate, train_offline, CvReport, ModelKind, OfflineConfig};
use crate::online::{write_session_log, OnlineConfig};
use crate::preprocess::{read_drive_log_file, write_drive_log};
use crate::simulator::{
    generate_drive_log, percentile, sweep_frozen, sweep_online, ClosedLoopConfig, DriverScript, PlantConfig,
    SweepConfig, SweepRun, TraceFrame,
};
use crate::table::{uniform_grid, CalibrationTable};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INSUFFICIENT_DATA: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vehicle {
    Ax1,
    Mkz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// m/s.
    pub speed_step: f64,
    /// %.
    pub cmd_step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            speed_step: 0.2,
            cmd_step: 5.0,
        }
    }
}

/// Everything a run needs. Loaded from TOML; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vehicle: Vehicle,
    /// Replaces the vehicle preset. Its `load` is overwritten per run.
    pub plant: Option<PlantConfig>,
    /// Cargo carried while collecting the manual log, kg.
    pub load: f64,
    /// Seeds the log generator, the offline pipeline and the sweeps.
    pub seed: u64,
    /// Keep every n-th frame in trace files.
    pub trace_stride: usize,
    pub grid: GridConfig,
    pub driver: DriverScript,
    pub offline: OfflineConfig,
    pub online: OnlineConfig,
    pub closed_loop: ClosedLoopConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            vehicle: Vehicle::Ax1,
            plant: None,
            load: 0.0,
            seed: 0,
            trace_stride: 10,
            grid: GridConfig::default(),
            driver: DriverScript::default(),
            offline: OfflineConfig::default(),
            online: OnlineConfig::default(),
            closed_loop: ClosedLoopConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn plant_config(&self, load: f64) -> PlantConfig {
        let base = match (&self.plant, self.vehicle) {
            (Some(p), _) => p.clone(),
            (None, Vehicle::Ax1) => PlantConfig::ax1(0.0),
            (None, Vehicle::Mkz) => PlantConfig::mkz(0.0),
        };
        PlantConfig { load, ..base }
    }

    pub fn speed_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(0.0, self.plant_config(0.0).v_max, self.grid.speed_step)
    }

    pub fn cmd_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(-100.0, 100.0, self.grid.cmd_step)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        let plant = self.plant_config(self.load);
        plant.validate().map_err(cfg_err)?;
        self.speed_grid().map_err(cfg_err)?;
        self.cmd_grid().map_err(cfg_err)?;
        self.online.validate().map_err(cfg_err)?;
        self.closed_loop.profile.validate(plant.v_max).map_err(cfg_err)?;
        if self.trace_stride == 0 {
            return Err(Error::Config("trace_stride must be at least 1".into()));
        }
        if self.offline.folds < 2 {
            return Err(Error::Config("offline.folds must be at least 2".into()));
        }
        if self.sweep.rounds == 0 || self.sweep.loads.is_empty() {
            return Err(Error::Config("sweep needs at least one load and one round".into()));
        }
        if self.sweep.loads.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("sweep loads must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub inputs: Vec<Artifact>,
    /// Paths relative to `out`.
    pub outputs: Vec<Artifact>,
    /// Outputs that differ between reruns, relative to `out`.
    pub unhashed: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<Artifact> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Artifact {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

/// Output directory that records what gets written into it.
struct OutputDir {
    root: PathBuf,
    outputs: Vec<Artifact>,
    unhashed: Vec<PathBuf>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
            unhashed: Vec::new(),
        })
    }

    fn put(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.put(rel, bytes)?;
        self.outputs.push(Artifact {
            path: rel.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_unhashed(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.put(rel, bytes)?;
        self.unhashed.push(rel.into());
        Ok(())
    }

    fn finish(self, subcommand: &str, config: Option<&Path>, seed: Option<u64>, inputs: Vec<Artifact>) -> Result<RunManifest> {
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            config: config.map(Path::to_path_buf),
            seed,
            out: self.root.clone(),
            inputs,
            outputs: self.outputs,
            unhashed: self.unhashed,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = manifest.out.join("manifest.json");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

#[derive(Debug, Parser)]
#[command(name = "longcal", version, about = "Longitudinal calibration table toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drive the simulated vehicle by hand and log it.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Learn a table from a manual log and cross-validate the models.
    Train {
        /// Drive log CSV.
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Track the test profile in closed loop across a load sweep.
    Simulate {
        /// Initial table file.
        #[arg(long)]
        table: PathBuf,
        /// Also run with online calibration.
        #[arg(long)]
        online: bool,
        /// Comma-separated cargo loads, kg.
        #[arg(long, value_delimiter = ',')]
        loads: Option<Vec<f64>>,
        /// Repeated rounds per load
        #[arg(long)]
        rounds: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Dump a table as `cmd,v,acc` rows for plotting.
    Heatmap {
        /// Table file
        #[arg(long)]
        table: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for a failed run.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::Parse { .. }
        | Error::InvalidTable(_)
        | Error::MonotonicityViolation { .. }
        | Error::InvalidLog(_) => EXIT_CONFIG,
        Error::TooFewSamples { .. } | Error::EmptyTrace => EXIT_INSUFFICIENT_DATA,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => 1,
    }
}

/// Parses the process arguments, runs, and maps errors to exit codes.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execute(cli: Cli) -> Result<RunManifest> {
    match cli.command {
        Command::Generate { common } => cmd_generate(&common),
        Command::Train { log, common } => cmd_train(&log, &common),
        Command::Simulate {
            table,
            online,
            loads,
            rounds,
            common,
        } => cmd_simulate(&table, online, loads, rounds, &common),
        Command::Heatmap { table, out } => cmd_heatmap(&table, &out),
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn config_inputs(common: &CommonArgs) -> Result<Vec<Artifact>> {
    common.config.iter().map(|p| hash_file(p)).collect()
}

#[derive(Serialize)]
struct CellRow {
    cmd: f64,
    v: f64,
    count: usize,
}

pub fn cmd_generate(common: &CommonArgs) -> Result<RunManifest> {
    let cfg = load_config(common)?;
    let (speed_grid, cmd_grid) = (cfg.speed_grid()?, cfg.cmd_grid()?);
    let plant = cfg.plant_config(cfg.load);
    let log = generate_drive_log(&plant, &cfg.driver, &speed_grid, &cmd_grid, cfg.seed);

    let mut out = OutputDir::create(&common.out)?;
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    let mut buf = Vec::new();
    write_drive_log(&mut buf, &log.samples)?;
    out.write("drive_log.csv", &buf)?;
    let (counts, speeds) = (&log.cell_counts, &speed_grid);
    let cells = cmd_grid.iter().enumerate().flat_map(|(i, &cmd)| {
        speeds.iter().enumerate().map(move |(j, &v)| CellRow {
            cmd,
            v,
            count: counts[i * speeds.len() + j],
        })
    });
    out.write("coverage.csv", &csv_bytes(cells)?)?;

    println!(
        "{} frames, coverage {:.1} % of {} cells",
        log.samples.len(),
        100.0 * log.coverage(),
        log.cell_counts.len()
    );
    out.finish("generate", common.config.as_deref(), Some(cfg.seed), config_inputs(common)?)
}

#[derive(Serialize)]
struct CvRow<'a> {
    model: &'a str,
    fold: String,
    mae: f64,
    rmse: f64,
}

fn cv_rows(kind: ModelKind, report: &CvReport) -> Vec<CvRow<'static>> {
    let mut rows: Vec<CvRow> = report
        .folds
        .iter()
        .enumerate()
        .map(|(k, f)| CvRow {
            model: kind.name(),
            fold: (k + 1).to_string(),
            mae: f.mae,
            rmse: f.rmse,
        })
        .collect();
    rows.push(CvRow {
        model: kind.name(),
        fold: "mean".into(),
        mae: report.mae,
        rmse: report.rmse,
    });
    rows
}

#[derive(Serialize)]
struct TimingRow {
    stage: String,
    count: usize,
    p50_us: f64,
    p99_us: f64,
    max_us: f64,
}

impl TimingRow {
    fn single(stage: &str, d: Duration) -> Self {
        let us = d.as_secs_f64() * 1e6;
        Self {
            stage: stage.into(),
            count: 1,
            p50_us: us,
            p99_us: us,
            max_us: us,
        }
    }

    fn of(stage: String, samples: &[Duration]) -> Self {
        let us = |d: Option<Duration>| d.map_or(0.0, |d| d.as_secs_f64() * 1e6);
        Self {
            stage,
            count: samples.len(),
            p50_us: us(percentile(samples, 0.5)),
            p99_us: us(percentile(samples, 0.99)),
            max_us: us(samples.iter().max().copied()),
        }
    }
}

pub fn cmd_train(log_path: &Path, common: &CommonArgs) -> Result<RunManifest> {
    let mut cfg = load_config(common)?;
    cfg.offline.seed = cfg.seed;
    let (speed_grid, cmd_grid) = (cfg.speed_grid()?, cfg.cmd_grid()?);
    let log = read_drive_log_file(log_path)?;

    let t0 = Instant::now();
    let models = train_offline(&log, &cfg.offline, &speed_grid, &cmd_grid)?;
    let train_time = t0.elapsed();

    let samples: Vec<_> = models.throttle_samples.iter().chain(&models.brake_samples).copied().collect();
    let t0 = Instant::now();
    let nn = cross_validate(&samples, cfg.offline.folds, ModelKind::NeuralNetwork, &cfg.offline.mlp, cfg.seed)?;
    let linear = cross_validate(&samples, cfg.offline.folds, ModelKind::Linear, &cfg.offline.mlp, cfg.seed)?;
    let cv_time = t0.elapsed();

    let mut out = OutputDir::create(&common.out)?;
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    out.write("table.txt", models.table.serialize().as_bytes())?;
    let mut rows = cv_rows(ModelKind::NeuralNetwork, &nn);
    rows.extend(cv_rows(ModelKind::Linear, &linear));
    out.write("cv_report.csv", &csv_bytes(rows)?)?;
    out.write("throttle_model.txt", models.throttle.model.to_text().as_bytes())?;
    out.write("brake_model.txt", models.brake.model.to_text().as_bytes())?;
    let timing = [TimingRow::single("train", train_time), TimingRow::single("cross_validate", cv_time)];
    out.write_unhashed("timing.csv", &csv_bytes(timing)?)?;

    println!(
        "{} throttle + {} brake samples; trained in {:.2} s",
        models.throttle_samples.len(),
        models.brake_samples.len(),
        train_time.as_secs_f64()
    );
    println!("cv nn     mae {:.4} rmse {:.4}", nn.mae, nn.rmse);
    println!("cv linear mae {:.4} rmse {:.4}", linear.mae, linear.rmse);
    let mut inputs = vec![hash_file(log_path)?];
    inputs.extend(config_inputs(common)?);
    out.finish("train", common.config.as_deref(), Some(cfg.seed), inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub load: f64,
    pub online: bool,
    pub speed_mae: f64,
    pub speed_rmse: f64,
    pub station_mae: f64,
    pub station_rmse: f64,
}

/// One row per run plus a `mean` row per `(online, load)` group, in run
/// order.
pub fn report_rows(runs: &[SweepRun]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    let mut groups: Vec<(bool, f64)> = Vec::new();
    for r in runs {
        if !groups.contains(&(r.online, r.load)) {
            groups.push((r.online, r.load));
        }
    }
    for (online, load) in groups {
        let group: Vec<&SweepRun> = runs.iter().filter(|r| r.online == online && r.load == load).collect();
        for r in &group {
            let m = &r.run.metrics;
            rows.push(ReportRow {
                scenario: format!("round{}", r.round + 1),
                load,
                online,
                speed_mae: m.speed_mae,
                speed_rmse: m.speed_rmse,
                station_mae: m.station_mae,
                station_rmse: m.station_rmse,
            });
        }
        let n = group.len() as f64;
        let mean = |f: fn(&SweepRun) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        rows.push(ReportRow {
            scenario: "mean".into(),
            load,
            online,
            speed_mae: mean(|r| r.run.metrics.speed_mae),
            speed_rmse: mean(|r| r.run.metrics.speed_rmse),
            station_mae: mean(|r| r.run.metrics.station_mae),
            station_rmse: mean(|r| r.run.metrics.station_rmse),
        });
    }
    rows
}

#[derive(Serialize)]
struct VisitRow {
    cmd: f64,
    v: f64,
    visits: usize,
    acc_before: f64,
    acc_after: f64,
}

fn read_table(path: &Path) -> Result<CalibrationTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CalibrationTable::deserialize(&text)
}

pub fn cmd_simulate(
    table_path: &Path,
    online: bool,
    loads: Option<Vec<f64>>,
    rounds: Option<usize>,
    common: &CommonArgs,
) -> Result<RunManifest> {
    let mut cfg = load_config(common)?;
    if let Some(loads) = loads {
        cfg.sweep.loads = loads;
    }
    if let Some(rounds) = rounds {
        cfg.sweep.rounds = rounds;
    }
    cfg.sweep.seed = cfg.seed;
    cfg.validate()?;
    let table = read_table(table_path)?;
    let plant_fn = |load: f64| cfg.plant_config(load);

    let mut runs = sweep_frozen(plant_fn, &table, &cfg.closed_loop, &cfg.sweep)?;
    if online {
        runs.extend(sweep_online(plant_fn, &table, &cfg.online, &cfg.closed_loop, &cfg.sweep)?);
    }

    let mut out = OutputDir::create(&common.out)?;
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    let rows = report_rows(&runs);
    out.write("report.csv", &csv_bytes(&rows)?)?;
    for r in &runs {
        let name = format!(
            "traces/{}_load{}_round{}.csv",
            if r.online { "on" } else { "off" },
            r.load,
            r.round + 1
        );
        let frames = r.run.trace.iter().step_by(cfg.trace_stride).copied();
        out.write(&name, &csv_bytes::<TraceFrame>(frames)?)?;
    }

    let online_runs: Vec<&SweepRun> = runs.iter().filter(|r| r.online).collect();
    if let Some(last) = online_runs.last() {
        let after = &last.run.final_table;
        out.write("table_before.txt", table.serialize().as_bytes())?;
        out.write("table_after.txt", after.serialize().as_bytes())?;
        let mut visits = vec![0; table.n_cells()];
        for r in &online_runs {
            for (total, v) in visits.iter_mut().zip(&r.run.visits) {
                *total += v;
            }
        }
        let n_speed = table.n_speed();
        let cells = (0..table.n_cmd()).flat_map(|i| {
            let (table, visits) = (&table, &visits);
            (0..n_speed).map(move |j| VisitRow {
                cmd: table.cmd_grid()[i],
                v: table.speed_grid()[j],
                visits: visits[i * n_speed + j],
                acc_before: table.get(i, j),
                acc_after: after.get(i, j),
            })
        });
        out.write("visits.csv", &csv_bytes(cells)?)?;
        let mut session = Vec::new();
        let records: Vec<_> = online_runs.iter().flat_map(|r| r.run.session.iter().cloned()).collect();
        write_session_log(&mut session, &records)?;
        out.write("session_log.csv", &session)?;

        let mut timing: Vec<TimingRow> = online_runs
            .iter()
            .map(|r| TimingRow::of(format!("update_load{}_round{}", r.load, r.round + 1), &r.run.step_times))
            .collect();
        let all: Vec<Duration> = online_runs.iter().flat_map(|r| r.run.step_times.iter().copied()).collect();
        timing.push(TimingRow::of("update_all".into(), &all));
        out.write_unhashed("timing.csv", &csv_bytes(timing)?)?;
        if let Some(p99) = percentile(&all, 0.99) {
            println!("online update p99 {:.1} us over {} updates", p99.as_secs_f64() * 1e6, all.len());
        }
    }

    for row in rows.iter().filter(|r| r.scenario == "mean") {
        println!(
            "load {:>6} {:<3} speed mae {:.4} rmse {:.4} | station mae {:.4} rmse {:.4}",
            row.load,
            if row.online { "on" } else { "off" },
            row.speed_mae,
            row.speed_rmse,
            row.station_mae,
            row.station_rmse
        );
    }
    let mut inputs = vec![hash_file(table_path)?];
    inputs.extend(config_inputs(common)?);
    out.finish("simulate", common.config.as_deref(), Some(cfg.seed), inputs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub cmd: f64,
    pub v: f64,
    pub acc: f64,
}

/// One row per grid cell, command-major.
pub fn heatmap_rows(table: &CalibrationTable) -> Vec<HeatmapRow> {
    let mut rows = Vec::with_capacity(table.n_cells());
    for (i, &cmd) in table.cmd_grid().iter().enumerate() {
        for (j, &v) in table.speed_grid().iter().enumerate() {
            rows.push(HeatmapRow {
                cmd,
                v,
                acc: table.get(i, j),
            });
        }
    }
    rows
}

pub fn cmd_heatmap(table_path: &Path, out_dir: &Path) -> Result<RunManifest> {
    let table = read_table(table_path)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write("heatmap.csv", &csv_bytes(heatmap_rows(&table))?)?;
    println!("{} cells", table.n_cells());
    out.finish("heatmap", None, None, vec![hash_file(table_path)?])
}
