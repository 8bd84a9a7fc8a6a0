//! Ground-truth plant, scripted data collection and closed-loop evaluation.

mod closed_loop;
mod driver;
mod metrics;
mod plant;
mod profile;
mod sweep;

pub use closed_loop::{
    percentile, run_closed_loop, ClosedLoopConfig, ClosedLoopRun, ControllerConfig, Feedforward, TraceFrame,
};
pub use driver::{cell_counts, generate_drive_log, DriveLog, DriverScript};
pub use metrics::{compute_metrics, metrics_from_errors, TrackingMetrics};
pub use plant::{Plant, PlantConfig, GRAVITY};
pub use profile::{ProfilePoint, SpeedProfile};
pub use sweep::{job_seed, sweep_frozen, sweep_online, SweepConfig, SweepRun};
