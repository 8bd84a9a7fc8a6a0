//! Write `cmd,v,acc` grids for a table before and after online adaptation,
//! ready for any surface or heatmap plot.
//!
//! Usage: `cargo run --example heatmap -- [out_dir]`

use std::path::PathBuf;

use longcal::cli::heatmap_rows;
use longcal::online::{OnlineCalibrator, OnlineConfig};
use longcal::simulator::{run_closed_loop, ClosedLoopConfig, Feedforward, PlantConfig};
use longcal::table::{default_cmd_grid, default_speed_grid, CalibrationTable};

fn write(path: &PathBuf, table: &CalibrationTable) -> Result<(), Box<dyn std::error::Error>> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in heatmap_rows(table) {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "heatmap_out".into()));
    std::fs::create_dir_all(&out)?;

    let empty = PlantConfig::ax1(0.0);
    let before = CalibrationTable::from_fn(default_speed_grid(empty.v_max)?, default_cmd_grid(), |c, v| {
        empty.steady_state_acc(c, v)
    })?;
    let mut cal = OnlineCalibrator::new(before.clone(), OnlineConfig::default())?;
    let cfg = ClosedLoopConfig {
        duration: 600.0,
        ..ClosedLoopConfig::default()
    };
    let run = run_closed_loop(&PlantConfig::ax1(300.0), 3, Feedforward::Online(&mut cal), &cfg)?;

    write(&out.join("before.csv"), &before)?;
    write(&out.join("after.csv"), &run.final_table)?;
    println!("{} cells each in {}", before.n_cells(), out.display());
    Ok(())
}
