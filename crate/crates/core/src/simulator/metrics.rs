use serde::{Deserialize, Serialize};

use super::closed_loop::TraceFrame;
use crate::error::{Error, Result};
use crate::offline::mae_rmse;

/// Speed error is desired minus actual speed; station error is expected
/// minus actual position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub speed_mae: f64,
    pub speed_rmse: f64,
    pub station_mae: f64,
    pub station_rmse: f64,
}

pub fn metrics_from_errors(speed_errors: &[f64], station_errors: &[f64]) -> Result<TrackingMetrics> {
    if speed_errors.is_empty() || station_errors.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let (speed_mae, speed_rmse) = mae_rmse(speed_errors.iter().copied());
    let (station_mae, station_rmse) = mae_rmse(station_errors.iter().copied());
    Ok(TrackingMetrics {
        speed_mae,
        speed_rmse,
        station_mae,
        station_rmse,
    })
}

pub fn compute_metrics(trace: &[TraceFrame]) -> Result<TrackingMetrics> {
    let speed: Vec<f64> = trace.iter().map(|f| f.speed_error).collect();
    let station: Vec<f64> = trace.iter().map(|f| f.station_error).collect();
    metrics_from_errors(&speed, &station)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = metrics_from_errors(&[1.0, -1.0], &[0.0, 2.0]).unwrap();
        assert_eq!((m.speed_mae, m.speed_rmse), (1.0, 1.0));
        assert_eq!(m.station_mae, 1.0);
        assert!((m.station_rmse - 2f64.sqrt()).abs() < 1e-15);
        let z = metrics_from_errors(&[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(z, TrackingMetrics { speed_mae: 0.0, speed_rmse: 0.0, station_mae: 0.0, station_rmse: 0.0 });
        assert!(matches!(compute_metrics(&[]), Err(Error::EmptyTrace)));
    }
}
