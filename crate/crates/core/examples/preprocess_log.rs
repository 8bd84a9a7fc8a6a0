//! Clean a simulated manual-driving log for training, then push a few
//! seconds of autonomous driving through the online feedback gates.

use longcal::preprocess::{butterworth_lowpass, prepare_offline, OfflinePreprocessConfig};
use longcal::simulator::{generate_drive_log, DriverScript, PlantConfig};
use longcal::table::{default_cmd_grid, default_speed_grid};

fn main() -> longcal::Result<()> {
    let plant = PlantConfig::ax1(0.0);
    let speeds = default_speed_grid(plant.v_max)?;
    let cmds = default_cmd_grid();
    let script = DriverScript {
        duration: 300.0,
        ..DriverScript::default()
    };
    let log = generate_drive_log(&plant, &script, &speeds, &cmds, 7);
    let turning = log.samples.iter().filter(|s| s.theta.abs() >= 10.0).count();
    println!(
        "{} frames, {turning} in turns, raw coverage {:.1} %",
        log.samples.len(),
        100.0 * log.coverage()
    );

    let raw_acc: Vec<f64> = log.samples.iter().map(|s| s.acc).collect();
    let smooth = butterworth_lowpass(&raw_acc, plant.sample_rate)?;
    let rough = |xs: &[f64]| xs.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / xs.len() as f64;
    println!(
        "mean |d acc| per frame: raw {:.4}, low-passed {:.4}",
        rough(&raw_acc),
        rough(&smooth)
    );

    let cfg = OfflinePreprocessConfig::default();
    let bins = prepare_offline(&log.samples, &cfg, &speeds, &cmds, 0)?;
    let counts = bins.counts();
    let full = counts.iter().filter(|&&c| c >= cfg.cell_cap / 2).count();
    println!(
        "{} training samples in {} non-empty cells ({full} at least half full)",
        bins.len(),
        counts.iter().filter(|&&c| c > 0).count()
    );

    let (i, j) = (cmds.iter().position(|&c| c == 30.0).unwrap(), 5);
    let cell = bins.cell(i, j);
    if !cell.is_empty() {
        let mean = cell.iter().map(|s| s.acc).sum::<f64>() / cell.len() as f64;
        println!(
            "cell (30 %, {} m/s): {} samples, mean acc {mean:.3}, plant says {:.3}",
            speeds[j],
            cell.len(),
            plant.steady_state_acc(30.0, speeds[j])
        );
    }
    Ok(())
}
