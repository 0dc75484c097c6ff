use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::SensorReading;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and population standard deviation of the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    /// Channels whose standard deviation was raised to [`STD_FLOOR`].
    pub floored: [bool; 3],
}

pub fn fit_sensor_stats<'a>(readings: impl IntoIterator<Item = &'a SensorReading>) -> Result<SensorStats> {
    let rows: Vec<[f64; 3]> = readings.into_iter().map(SensorReading::as_array).collect();
    if rows.len() < 2 {
        return Err(Error::invalid("sensor statistics need at least 2 training samples"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sensor value"));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    for r in &rows {
        for c in 0..3 {
            mean[c] += r[c];
        }
    }
    mean = mean.map(|m| m / n);
    let mut var = [0.0; 3];
    for r in &rows {
        for c in 0..3 {
            var[c] += (r[c] - mean[c]).powi(2);
        }
    }
    let mut std = [0.0; 3];
    let mut floored = [false; 3];
    for c in 0..3 {
        let s = (var[c] / n).sqrt();
        if s < STD_FLOOR {
            log::warn!("sensor channel {c} is constant; std floored at {STD_FLOOR}");
            std[c] = STD_FLOOR;
            floored[c] = true;
        } else {
            std[c] = s;
        }
    }
    Ok(SensorStats { mean, std, floored })
}

pub fn apply_sensor_norm(reading: &SensorReading, stats: &SensorStats) -> Result<[f64; 3]> {
    let x = reading.as_array();
    let out: [f64; 3] = std::array::from_fn(|c| (x[c] - stats.mean[c]) / stats.std[c]);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sensor normalisation produced a non-finite value"));
    }
    Ok(out)
}

pub fn denormalize_sensor(z: &[f64; 3], stats: &SensorStats) -> SensorReading {
    SensorReading {
        speed: z[0] * stats.std[0] + stats.mean[0],
        latitude: z[1] * stats.std[1] + stats.mean[1],
        longitude: z[2] * stats.std[2] + stats.mean[2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(speed: f64, lat: f64, lon: f64) -> SensorReading {
        SensorReading {
            speed,
            latitude: lat,
            longitude: lon,
        }
    }

    #[test]
    fn two_point_population_std() {
        let rows = [r(10.0, 1.5, 3.0), r(20.0, 1.5, 5.0)];
        let s = fit_sensor_stats(&rows).unwrap();
        assert_eq!(s.mean[0], 15.0);
        assert_eq!(s.std[0], 5.0);
        assert_eq!(s.mean[1], 1.5);
        assert_eq!(s.std[1], STD_FLOOR);
        assert_eq!(s.floored, [false, true, false]);
    }

    #[test]
    fn mean_maps_to_zero_and_mean_plus_std_to_one() {
        let rows = [r(10.0, 40.0, -70.0), r(20.0, 42.0, -71.0), r(12.0, 41.0, -72.0)];
        let s = fit_sensor_stats(&rows).unwrap();
        let at_mean = r(s.mean[0], s.mean[1], s.mean[2]);
        assert_eq!(apply_sensor_norm(&at_mean, &s).unwrap(), [0.0; 3]);
        let plus = r(s.mean[0] + s.std[0], s.mean[1] + s.std[1], s.mean[2] + s.std[2]);
        for v in apply_sensor_norm(&plus, &s).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_rejected() {
        assert!(fit_sensor_stats(&[r(1.0, 0.0, 0.0)]).is_err());
    }
}
