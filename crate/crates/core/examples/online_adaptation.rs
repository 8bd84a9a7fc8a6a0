//! Start from a table fitted to the empty vehicle, then drive with 300 kg of
//! cargo while the online calibrator corrects the table.

use longcal::online::{OnlineCalibrator, OnlineConfig};
use longcal::simulator::{run_closed_loop, ClosedLoopConfig, Feedforward, PlantConfig};
use longcal::table::{default_cmd_grid, default_speed_grid, CalibrationTable};

fn main() -> longcal::Result<()> {
    let empty = PlantConfig::ax1(0.0);
    let loaded = PlantConfig::ax1(300.0);
    let initial = CalibrationTable::from_fn(default_speed_grid(empty.v_max)?, default_cmd_grid(), |c, v| {
        empty.steady_state_acc(c, v)
    })?;
    let loop_cfg = ClosedLoopConfig {
        duration: 300.0,
        ..ClosedLoopConfig::default()
    };

    let frozen = run_closed_loop(&loaded, 1, Feedforward::Fixed(&initial), &loop_cfg)?;
    let mut cal = OnlineCalibrator::new(initial.clone(), OnlineConfig::default())?;
    let adaptive = run_closed_loop(&loaded, 1, Feedforward::Online(&mut cal), &loop_cfg)?;

    for (name, run) in [("frozen", &frozen), ("online", &adaptive)] {
        println!(
            "{name}: speed MAE {:.4} m/s, station MAE {:.3} m",
            run.metrics.speed_mae, run.metrics.station_mae
        );
    }
    let p99 = adaptive.step_time_percentile(0.99).unwrap_or_default();
    println!(
        "{} updates over {} cycles, revision {}, p99 update {:?}",
        adaptive.session.len(),
        cal.cycle(),
        cal.publisher().revision(),
        p99
    );

    let after = &adaptive.final_table;
    println!("cmd %  v m/s  visits  initial  adapted  plant");
    let n_speed = initial.n_speed();
    let mut busiest: Vec<usize> = (0..adaptive.visits.len()).collect();
    busiest.sort_by_key(|&k| std::cmp::Reverse(adaptive.visits[k]));
    for &k in busiest.iter().take(8) {
        let (i, j) = (k / n_speed, k % n_speed);
        let (c, v) = (initial.cmd_grid()[i], initial.speed_grid()[j]);
        println!(
            "{c:>5} {v:>6.1} {:>7} {:>8.3} {:>8.3} {:>6.3}",
            adaptive.visits[k],
            initial.get(i, j),
            after.get(i, j),
            loaded.steady_state_acc(c, v)
        );
    }
    Ok(())
}
