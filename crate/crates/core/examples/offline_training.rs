//! Learn a table from a 20-minute manual log and cross-validate the neural
//! network against the linear baseline.
//!
//! Pass `--quick` for 3 folds instead of 10.

use std::time::Instant;

use longcal::offline::{cross_validate, train_offline, ModelKind, OfflineConfig};
use longcal::simulator::{generate_drive_log, DriverScript, PlantConfig};
use longcal::table::{default_cmd_grid, default_speed_grid};

fn main() -> longcal::Result<()> {
    let folds = if std::env::args().any(|a| a == "--quick") { 3 } else { 10 };
    let plant = PlantConfig::ax1(0.0);
    let speeds = default_speed_grid(plant.v_max)?;
    let cmds = default_cmd_grid();
    let log = generate_drive_log(&plant, &DriverScript::default(), &speeds, &cmds, 42);

    let cfg = OfflineConfig::default();
    let t0 = Instant::now();
    let models = train_offline(&log.samples, &cfg, &speeds, &cmds)?;
    println!(
        "trained on {} throttle + {} brake samples in {:.2} s",
        models.throttle_samples.len(),
        models.brake_samples.len(),
        t0.elapsed().as_secs_f64()
    );

    let samples: Vec<_> = models.throttle_samples.iter().chain(&models.brake_samples).copied().collect();
    for kind in [ModelKind::NeuralNetwork, ModelKind::Linear] {
        let report = cross_validate(&samples, folds, kind, &cfg.mlp, 0)?;
        println!("{folds}-fold {:<6} MAE {:.4} RMSE {:.4}", kind.name(), report.mae, report.rmse);
    }

    // Compare against the plant at cells the log actually reached.
    let mut worst = (0.0, 0.0, 0.0);
    for (i, &c) in cmds.iter().enumerate() {
        for (j, &v) in speeds.iter().enumerate() {
            if models.bins.cell(i, j).is_empty() {
                continue;
            }
            let err = (models.table.get(i, j) - plant.steady_state_acc(c, v)).abs();
            if err > worst.0 {
                worst = (err, c, v);
            }
        }
    }
    println!(
        "largest table error at a covered cell: {:.3} m/s^2 at ({} %, {:.1} m/s)",
        worst.0, worst.1, worst.2
    );
    Ok(())
}
