//! Build a table, look values up in both directions, repair a noisy table
//! and round-trip it through the text format.

use longcal::table::{default_cmd_grid, default_speed_grid, CalibrationTable};

fn main() -> longcal::Result<()> {
    let speeds = default_speed_grid(3.0)?;
    let cmds = default_cmd_grid();
    let table = CalibrationTable::from_fn(speeds.clone(), cmds.clone(), |c, v| 0.03 * c - 0.05 * v * v)?;
    println!("{} x {} table", table.n_cmd(), table.n_speed());

    let acc = table.lookup_acc(27.5, 1.3);
    let cmd = table.invert()?.lookup_cmd(1.3, acc);
    println!("acc(27.5 %, 1.3 m/s) = {acc:.4} m/s^2, inverse gives {cmd:.6} %");

    // A wiggle that breaks monotonicity in command.
    let noisy = CalibrationTable::from_fn(speeds, cmds, |c, v| {
        0.03 * c - 0.05 * v * v + 0.2 * (c / 3.0).sin()
    })?;
    let violation = noisy.monotonicity_violation();
    let fixed = noisy.project_monotone();
    println!("noisy table violation at {violation:?}; after projection monotone = {}", fixed.is_monotone());
    println!("projecting twice changes nothing: {}", fixed.project_monotone() == fixed);

    let text = fixed.serialize();
    let back = CalibrationTable::deserialize(&text)?;
    println!("text form: {} bytes, first line {:?}", text.len(), text.lines().next().unwrap_or(""));
    let worst = back
        .values()
        .iter()
        .zip(fixed.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round-trip max difference {worst:e}");
    Ok(())
}
