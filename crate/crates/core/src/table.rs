//! Calibration table: `acc = T[cmd][v]` over a rectangular grid.
//!
//! Commands use one signed axis: brake in `[-100, 0)`, throttle in
//! `(0, 100]`. Lookups clamp to the grid instead of extrapolating.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::isotonic::{is_non_decreasing, isotonic_increasing};

/// Default speed resolution (m/s).
pub const DEFAULT_SPEED_STEP: f64 = 0.2;
/// Default command resolution (% pedal).
pub const DEFAULT_CMD_STEP: f64 = 5.0;

/// Evenly spaced grid from `lo` to `hi` inclusive.
///
/// The last point is `hi` even when `hi - lo` is not a multiple of `step`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid needs lo < hi and step > 0 (got {lo}, {hi}, {step})"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if hi - grid[n] > 1e-9 * step.max(1.0) {
        grid.push(hi);
    } else {
        grid[n] = hi;
    }
    Ok(grid)
}

/// Speed grid `0, 0.2, ..., v_max`.
pub fn default_speed_grid(v_max: f64) -> Result<Vec<f64>> {
    uniform_grid(0.0, v_max, DEFAULT_SPEED_STEP)
}

/// Command grid `-100, -95, ..., 100`.
pub fn default_cmd_grid() -> Vec<f64> {
    uniform_grid(-100.0, 100.0, DEFAULT_CMD_STEP).expect("static grid")
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidTable(format!("{name} needs at least 2 points")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidTable(format!("{name} has non-finite entries")));
    }
    if let Some(i) = grid.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::InvalidTable(format!(
            "{name} is not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Bracketing index and weight for `x` on `grid`, clamped to the ends.
///
/// Returns `(i, w)` with the value `(1 - w) * f[i] + w * f[i + 1]`.
pub(crate) fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[last] {
        return (last - 1, 1.0);
    }
    let hi = grid.partition_point(|&g| g <= x).min(last);
    let lo = hi - 1;
    (lo, (x - grid[lo]) / (grid[hi] - grid[lo]))
}

/// Index of the grid point nearest to `x` (ties go to the lower point).
pub fn nearest_index(grid: &[f64], x: f64) -> usize {
    let (i, w) = bracket(grid, x);
    if w > 0.5 {
        i + 1
    } else {
        i
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    speed_grid: Vec<f64>,
    cmd_grid: Vec<f64>,
    /// Row-major `[cmd][speed]`.
    acc: Vec<f64>,
}

impl CalibrationTable {
    /// Builds a table from rows indexed `[cmd][speed]`.
    ///
    /// Checks grid ordering, dimensions and finiteness. Monotonicity in
    /// command is not required here; see [`CalibrationTable::is_monotone`]
    /// and [`CalibrationTable::project_monotone`].
    pub fn new(speed_grid: Vec<f64>, cmd_grid: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != cmd_grid.len() {
            return Err(Error::InvalidTable(format!(
                "expected {} rows, got {}",
                cmd_grid.len(),
                rows.len()
            )));
        }
        let mut acc = Vec::with_capacity(cmd_grid.len() * speed_grid.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != speed_grid.len() {
                return Err(Error::InvalidTable(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    speed_grid.len()
                )));
            }
            acc.extend(row);
        }
        Self::from_flat(speed_grid, cmd_grid, acc)
    }

    pub(crate) fn from_flat(speed_grid: Vec<f64>, cmd_grid: Vec<f64>, acc: Vec<f64>) -> Result<Self> {
        check_grid("speed_grid", &speed_grid)?;
        check_grid("cmd_grid", &cmd_grid)?;
        if acc.len() != speed_grid.len() * cmd_grid.len() {
            return Err(Error::InvalidTable("matrix size does not match grids".into()));
        }
        if acc.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidTable("non-finite acceleration".into()));
        }
        Ok(Self {
            speed_grid,
            cmd_grid,
            acc,
        })
    }

    /// Tabulates `f(cmd, v)` over the grids.
    pub fn from_fn(
        speed_grid: Vec<f64>,
        cmd_grid: Vec<f64>,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut acc = Vec::with_capacity(speed_grid.len() * cmd_grid.len());
        for &c in &cmd_grid {
            for &v in &speed_grid {
                acc.push(f(c, v));
            }
        }
        Self::from_flat(speed_grid, cmd_grid, acc)
    }

    pub fn speed_grid(&self) -> &[f64] {
        &self.speed_grid
    }

    pub fn cmd_grid(&self) -> &[f64] {
        &self.cmd_grid
    }

    pub fn n_cmd(&self) -> usize {
        self.cmd_grid.len()
    }

    pub fn n_speed(&self) -> usize {
        self.speed_grid.len()
    }

    pub fn n_cells(&self) -> usize {
        self.acc.len()
    }

    pub fn get(&self, cmd_index: usize, speed_index: usize) -> f64 {
        self.acc[cmd_index * self.speed_grid.len() + speed_index]
    }

    /// Flat row-major values, `[cmd][speed]`.
    pub fn values(&self) -> &[f64] {
        &self.acc
    }

    pub fn row(&self, cmd_index: usize) -> &[f64] {
        let n = self.speed_grid.len();
        &self.acc[cmd_index * n..(cmd_index + 1) * n]
    }

    /// Accelerations over all commands at one speed, ascending in command.
    pub fn column(&self, speed_index: usize) -> Vec<f64> {
        let n = self.speed_grid.len();
        self.acc.iter().skip(speed_index).step_by(n).copied().collect()
    }

    /// Same grids, new values. Values must be row-major `[cmd][speed]`.
    pub fn with_values(&self, acc: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.speed_grid.clone(), self.cmd_grid.clone(), acc)
    }

    /// Bilinear interpolation, clamped to the grid.
    pub fn lookup_acc(&self, cmd: f64, v: f64) -> f64 {
        let (i, wc) = bracket(&self.cmd_grid, cmd);
        let (j, wv) = bracket(&self.speed_grid, v);
        let a00 = self.get(i, j);
        let a01 = self.get(i, j + 1);
        let a10 = self.get(i + 1, j);
        let a11 = self.get(i + 1, j + 1);
        let lo = a00 + wv * (a01 - a00);
        let hi = a10 + wv * (a11 - a10);
        lo + wc * (hi - lo)
    }

    /// First violation of non-decreasing acceleration in command, if any.
    pub fn monotonicity_violation(&self) -> Option<(usize, usize)> {
        (0..self.n_speed()).find_map(|j| {
            let col = self.column(j);
            col.windows(2).position(|w| w[0] > w[1]).map(|i| (j, i + 1))
        })
    }

    pub fn is_monotone(&self) -> bool {
        self.monotonicity_violation().is_none()
    }

    /// Replaces every speed column by its least-squares non-decreasing fit.
    pub fn project_monotone(&self) -> Self {
        let mut acc = self.acc.clone();
        let n = self.n_speed();
        for j in 0..n {
            let col = self.column(j);
            if is_non_decreasing(&col) {
                continue;
            }
            for (i, a) in isotonic_increasing(&col).into_iter().enumerate() {
                acc[i * n + j] = a;
            }
        }
        Self {
            speed_grid: self.speed_grid.clone(),
            cmd_grid: self.cmd_grid.clone(),
            acc,
        }
    }

    /// Acceleration-to-command view used by the controller.
    pub fn invert(&self) -> Result<InverseTableView> {
        if let Some((speed_index, cmd_index)) = self.monotonicity_violation() {
            return Err(Error::MonotonicityViolation {
                speed_index,
                cmd_index,
            });
        }
        Ok(InverseTableView {
            speed_grid: self.speed_grid.clone(),
            cmd_grid: self.cmd_grid.clone(),
            columns: (0..self.n_speed()).map(|j| self.column(j)).collect(),
        })
    }

    /// Text form: two grid lines, then one line of accelerations per command.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        write_numbers(&mut out, "speed_grid:", &self.speed_grid);
        write_numbers(&mut out, "cmd_grid:", &self.cmd_grid);
        for i in 0..self.n_cmd() {
            write_numbers(&mut out, "", self.row(i));
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (speed_line, speed_grid) = parse_header(lines.next(), "speed_grid:")?;
        let (cmd_line, cmd_grid) = parse_header(lines.next(), "cmd_grid:")?;
        check_grid("speed_grid", &speed_grid).map_err(|e| parse_err(speed_line, e))?;
        check_grid("cmd_grid", &cmd_grid).map_err(|e| parse_err(cmd_line, e))?;

        let mut acc = Vec::with_capacity(speed_grid.len() * cmd_grid.len());
        let mut rows = 0;
        let mut last_line = cmd_line;
        for (line, content) in lines {
            last_line = line;
            if rows == cmd_grid.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("more than {} acceleration rows", cmd_grid.len()),
                });
            }
            let row = parse_numbers(line, content)?;
            if row.len() != speed_grid.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} values, got {}", speed_grid.len(), row.len()),
                });
            }
            if row.iter().any(|a| !a.is_finite()) {
                return Err(Error::Parse {
                    line,
                    message: "non-finite acceleration".into(),
                });
            }
            acc.extend(row);
            rows += 1;
        }
        if rows != cmd_grid.len() {
            return Err(Error::Parse {
                line: last_line,
                message: format!("expected {} acceleration rows, got {rows}", cmd_grid.len()),
            });
        }
        Self::from_flat(speed_grid, cmd_grid, acc)
    }
}

/// Nine significant digits, scientific notation.
pub(crate) fn fmt_sig9(x: f64) -> String {
    let s = format!("{x:.8e}");
    // Avoid "-0.00000000e0" so the output is stable for signed zeros.
    if x == 0.0 {
        "0.00000000e0".to_string()
    } else {
        s
    }
}

fn write_numbers(out: &mut String, label: &str, xs: &[f64]) {
    out.push_str(label);
    for (k, x) in xs.iter().enumerate() {
        if k > 0 || !label.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{}", fmt_sig9(*x));
    }
    out.push('\n');
}

fn parse_err(line: usize, e: Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_numbers(line: usize, content: &str) -> Result<Vec<f64>> {
    content
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {tok:?}"),
            })
        })
        .collect()
}

fn parse_header(entry: Option<(usize, &str)>, label: &str) -> Result<(usize, Vec<f64>)> {
    let (line, content) = entry.ok_or_else(|| Error::Parse {
        line: 0,
        message: format!("missing `{label}` line"),
    })?;
    let rest = content.strip_prefix(label).ok_or_else(|| Error::Parse {
        line,
        message: format!("expected `{label}`"),
    })?;
    Ok((line, parse_numbers(line, rest)?))
}

/// `cmd = T^-1[v][acc]`, piecewise linear per speed column.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseTableView {
    speed_grid: Vec<f64>,
    cmd_grid: Vec<f64>,
    /// One non-decreasing acceleration column per speed.
    columns: Vec<Vec<f64>>,
}

impl InverseTableView {
    pub fn speed_grid(&self) -> &[f64] {
        &self.speed_grid
    }

    /// Command achieving `acc` at grid speed `speed_index`.
    ///
    /// Clamps to the extreme commands outside the column's range. Where
    /// the column is flat the lowest command on the plateau wins.
    pub fn column_cmd(&self, speed_index: usize, acc: f64) -> f64 {
        let col = &self.columns[speed_index];
        let last = col.len() - 1;
        if acc <= col[0] {
            return self.cmd_grid[0];
        }
        if acc > col[last] {
            return self.cmd_grid[last];
        }
        let k = col.partition_point(|&a| a < acc);
        if col[k] == acc {
            return self.cmd_grid[k];
        }
        let w = (acc - col[k - 1]) / (col[k] - col[k - 1]);
        self.cmd_grid[k - 1] + w * (self.cmd_grid[k] - self.cmd_grid[k - 1])
    }

    /// Linear blend of the two neighbouring speed columns.
    pub fn lookup_cmd(&self, v: f64, acc: f64) -> f64 {
        let (j, w) = bracket(&self.speed_grid, v);
        let lo = self.column_cmd(j, acc);
        if w == 0.0 {
            return lo;
        }
        let hi = self.column_cmd(j + 1, acc);
        lo + w * (hi - lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_2x2() -> CalibrationTable {
        CalibrationTable::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0], vec![2.0, 3.0]],
        )
        .unwrap()
    }

    fn linear_table() -> CalibrationTable {
        // acc = 0.02 * cmd + 0.1 * v, strictly increasing in cmd.
        CalibrationTable::from_fn(vec![0.0, 1.0, 2.0, 3.0], vec![-50.0, 0.0, 25.0, 50.0], |c, v| {
            0.02 * c + 0.1 * v
        })
        .unwrap()
    }

    #[test]
    fn constant_table_lookup() {
        let t = CalibrationTable::from_fn(vec![0.0, 2.0, 4.0], vec![-10.0, 0.0, 10.0], |_, _| 0.7)
            .unwrap();
        for (c, v) in [(-10.0, 0.0), (3.3, 1.7), (250.0, -5.0), (0.0, 4.0)] {
            assert_eq!(t.lookup_acc(c, v), 0.7);
        }
    }

    #[test]
    fn grid_points_are_exact() {
        let t = CalibrationTable::from_fn(
            default_speed_grid(3.0).unwrap(),
            default_cmd_grid(),
            |c, v| (c * 0.013).sin() + v * v * 0.3,
        )
        .unwrap();
        assert_eq!(t.lookup_acc(t.cmd_grid()[2], t.speed_grid()[3]), t.get(2, 3));
        for (i, &c) in t.cmd_grid().iter().enumerate() {
            for (j, &v) in t.speed_grid().iter().enumerate() {
                assert_eq!(t.lookup_acc(c, v), t.get(i, j));
            }
        }
    }

    #[test]
    fn cell_midpoint_is_average() {
        // Hand bilinear: (0 + 1 + 2 + 3) / 4.
        assert_eq!(table_2x2().lookup_acc(0.5, 0.5), 1.5);
    }

    #[test]
    fn out_of_range_clamps() {
        let t = table_2x2();
        assert_eq!(t.lookup_acc(-5.0, -5.0), 0.0);
        assert_eq!(t.lookup_acc(5.0, 5.0), 3.0);
        assert_eq!(t.lookup_acc(5.0, 0.5), 2.5);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(CalibrationTable::new(vec![0.0], vec![0.0, 1.0], vec![vec![0.0]; 2]).is_err());
        assert!(CalibrationTable::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![vec![0.0; 2]; 2]).is_err());
        assert!(
            CalibrationTable::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![vec![0.0, f64::NAN]; 2])
                .is_err()
        );
        assert!(CalibrationTable::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![vec![0.0; 2]]).is_err());
    }

    #[test]
    fn uniform_grid_includes_endpoint() {
        let g = default_speed_grid(3.0).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(*g.last().unwrap(), 3.0);
        let g = uniform_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(default_cmd_grid().len(), 41);
    }

    #[test]
    fn invert_linear_column() {
        let t = CalibrationTable::new(
            vec![0.0, 1.0],
            vec![-50.0, 0.0, 50.0],
            vec![vec![-1.0, -1.0], vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let inv = t.invert().unwrap();
        assert!((inv.lookup_cmd(0.0, 0.5) - 25.0).abs() < 1e-12);
        assert_eq!(inv.lookup_cmd(0.3, 0.0), 0.0);
        // Above the column max: clamp to the largest command.
        assert_eq!(inv.lookup_cmd(0.0, 7.0), 50.0);
        assert_eq!(inv.lookup_cmd(0.0, -7.0), -50.0);
    }

    #[test]
    fn invert_rejects_decreasing_column() {
        let t = CalibrationTable::new(
            vec![0.0, 1.0],
            vec![-1.0, 0.0, 1.0],
            vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![2.0, 0.5]],
        )
        .unwrap();
        match t.invert() {
            Err(Error::MonotonicityViolation {
                speed_index,
                cmd_index,
            }) => assert_eq!((speed_index, cmd_index), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_blends_speed_columns() {
        // Identical column shapes offset in speed: at the midpoint speed the
        // command is the mean of the two per-column commands.
        let t = CalibrationTable::new(
            vec![0.0, 2.0],
            vec![0.0, 10.0, 20.0],
            vec![vec![0.0, -1.0], vec![1.0, 0.0], vec![2.0, 1.0]],
        )
        .unwrap();
        let inv = t.invert().unwrap();
        let c0 = inv.column_cmd(0, 0.5);
        let c1 = inv.column_cmd(1, 0.5);
        assert_eq!((c0, c1), (5.0, 15.0));
        assert!((inv.lookup_cmd(1.0, 0.5) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn odd_table_inverts_to_zero() {
        let t = CalibrationTable::from_fn(vec![0.0, 1.0, 2.0], default_cmd_grid(), |c, _| {
            0.03 * c + 1e-5 * c * c * c
        })
        .unwrap();
        let inv = t.invert().unwrap();
        for v in [0.0, 0.7, 2.0] {
            assert!(inv.lookup_cmd(v, 0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plateau_returns_lowest_command() {
        let t = CalibrationTable::new(
            vec![0.0, 1.0],
            vec![-10.0, 0.0, 10.0, 20.0],
            vec![vec![-1.0; 2], vec![0.5; 2], vec![0.5; 2], vec![2.0; 2]],
        )
        .unwrap();
        let inv = t.invert().unwrap();
        assert_eq!(inv.lookup_cmd(0.5, 0.5), 0.0);
    }

    #[test]
    fn projection_pools_violators() {
        let t = CalibrationTable::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0, 0.0], vec![3.0, 1.0], vec![2.0, 2.0]],
        )
        .unwrap();
        let p = t.project_monotone();
        assert_eq!(p.column(0), vec![1.0, 2.5, 2.5]);
        assert_eq!(p.column(1), vec![0.0, 1.0, 2.0]);
        assert!(p.is_monotone());
        assert_eq!(linear_table().project_monotone(), linear_table());
    }

    #[test]
    fn round_trip_at_grid_points() {
        let t = linear_table();
        let inv = t.invert().unwrap();
        for &c in t.cmd_grid() {
            for &v in t.speed_grid() {
                let back = inv.lookup_cmd(v, t.lookup_acc(c, v));
                assert!((back - c).abs() <= 1e-9, "{c} {v} -> {back}");
            }
        }
    }

    #[test]
    fn serialize_layout() {
        let text = table_2x2().serialize();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "speed_grid: 0.00000000e0 1.00000000e0");
        assert_eq!(lines[1], "cmd_grid: 0.00000000e0 1.00000000e0");
        assert_eq!(lines[2], "0.00000000e0 1.00000000e0");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn deserialize_accepts_comments_and_blank_lines() {
        let text = "# header\nspeed_grid: 0 1 # m/s\n\ncmd_grid: -1 1\n0 0.5\n# brake above\n1 1.5\n";
        let t = CalibrationTable::deserialize(text).unwrap();
        assert_eq!(t.get(1, 1), 1.5);
    }

    #[test]
    fn deserialize_errors_carry_line_numbers() {
        let cases = [
            ("speed_grid: 0 1\ncmd_grid: 0 1\n0 1\n0 x\n", 4),
            ("speed_grid: 1 0\ncmd_grid: 0 1\n0 1\n0 1\n", 1),
            ("speed_grid: 0 1\ncmd_grid: 0 1\n0 1 2\n0 1\n", 3),
            ("cmd_grid: 0 1\nspeed_grid: 0 1\n0 1\n0 1\n", 1),
            ("speed_grid: 0 1\ncmd_grid: 0 1\n0 1\n", 3),
            ("speed_grid: 0 1\ncmd_grid: 0 0\n0 1\n0 1\n", 2),
        ];
        for (text, want) in cases {
            match CalibrationTable::deserialize(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    fn arb_table() -> impl Strategy<Value = CalibrationTable> {
        (2usize..6, 2usize..7).prop_flat_map(|(nv, nc)| {
            prop::collection::vec(-5.0f64..5.0, nv * nc).prop_map(move |acc| {
                let speeds = (0..nv).map(|j| j as f64 * 0.5).collect();
                let cmds = (0..nc).map(|i| -50.0 + i as f64 * 20.0).collect();
                CalibrationTable::from_flat(speeds, cmds, acc).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn projection_is_monotone_and_idempotent(t in arb_table()) {
            let p = t.project_monotone();
            prop_assert!(p.is_monotone());
            prop_assert_eq!(p.project_monotone(), p);
        }

        #[test]
        fn lookup_bounded_by_enclosing_cell(t in arb_table(), fc in 0.0f64..1.0, fv in 0.0f64..1.0) {
            let cg = t.cmd_grid();
            let sg = t.speed_grid();
            let c = cg[0] + fc * (cg[cg.len() - 1] - cg[0]);
            let v = sg[0] + fv * (sg[sg.len() - 1] - sg[0]);
            let (i, _) = bracket(cg, c);
            let (j, _) = bracket(sg, v);
            let corners = [t.get(i, j), t.get(i, j + 1), t.get(i + 1, j), t.get(i + 1, j + 1)];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let a = t.lookup_acc(c, v);
            prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
        }

        #[test]
        fn invert_round_trip_on_strict_tables(
            steps in prop::collection::vec(0.01f64..2.0, 5 * 4),
            base in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            // Strictly increasing columns built from positive increments.
            let nv = 4;
            let nc = 5;
            let mut acc = vec![0.0; nv * nc];
            for j in 0..nv {
                let mut a = base[j];
                for i in 0..nc {
                    a += steps[i * nv + j];
                    acc[i * nv + j] = a;
                }
            }
            let t = CalibrationTable::from_flat(
                vec![0.0, 0.7, 1.9, 3.0],
                vec![-100.0, -20.0, 0.0, 35.0, 100.0],
                acc,
            ).unwrap();
            let inv = t.invert().unwrap();
            for &c in t.cmd_grid() {
                for &v in t.speed_grid() {
                    let back = inv.lookup_cmd(v, t.lookup_acc(c, v));
                    prop_assert!((back - c).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn text_round_trip_is_stable(t in arb_table()) {
            let text = t.serialize();
            let back = CalibrationTable::deserialize(&text).unwrap();
            prop_assert_eq!(back.serialize(), text);
            for (a, b) in t.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300));
            }
        }
    }
}
