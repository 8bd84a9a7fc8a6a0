//! Track the test profile at four cargo loads, with the offline table frozen
//! and with online calibration carried from load to load.

use longcal::simulator::{
    sweep_frozen, sweep_online, ClosedLoopConfig, PlantConfig, SweepConfig, SweepRun,
};
use longcal::table::{default_cmd_grid, default_speed_grid, CalibrationTable};
use longcal::online::OnlineConfig;

fn mean(runs: &[SweepRun], online: bool, load: f64, f: fn(&SweepRun) -> f64) -> f64 {
    let xs: Vec<f64> = runs.iter().filter(|r| r.online == online && r.load == load).map(f).collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn main() -> longcal::Result<()> {
    let empty = PlantConfig::ax1(0.0);
    let table = CalibrationTable::from_fn(default_speed_grid(empty.v_max)?, default_cmd_grid(), |c, v| {
        empty.steady_state_acc(c, v)
    })?;
    let loop_cfg = ClosedLoopConfig::default();
    let sweep = SweepConfig::default();

    let mut runs = sweep_frozen(PlantConfig::ax1, &table, &loop_cfg, &sweep)?;
    runs.extend(sweep_online(PlantConfig::ax1, &table, &OnlineConfig::default(), &loop_cfg, &sweep)?);

    println!("load kg | speed MAE off / on | station MAE off / on");
    for &load in &sweep.loads {
        println!(
            "{load:>7} | {:>7.4} / {:<7.4} | {:>8.2} / {:<8.2}",
            mean(&runs, false, load, |r| r.run.metrics.speed_mae),
            mean(&runs, true, load, |r| r.run.metrics.speed_mae),
            mean(&runs, false, load, |r| r.run.metrics.station_mae),
            mean(&runs, true, load, |r| r.run.metrics.station_mae),
        );
    }
    Ok(())
}
