use serde::{Deserialize, Serialize};

/// Idle emission rate of the surrogate CO2 model, kg/s.
pub const CO2_IDLE: f64 = 2.5e-4;
/// Distance-proportional emission of the surrogate CO2 model, kg/m.
pub const CO2_PER_METER: f64 = 5.0e-5;
/// Vehicles slower than this count as waiting.
pub const WAITING_SPEED: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriveMode {
    Idle,
    Cruise,
}

impl DriveMode {
    pub fn from_speed(speed: f64) -> Self {
        if speed < WAITING_SPEED {
            DriveMode::Idle
        } else {
            DriveMode::Cruise
        }
    }
}

/// Surrogate per-vehicle CO2 emission rate in kg/s: an idle floor plus a
/// term linear in speed. Not a calibrated emission model.
pub fn surrogate_co2(speed: f64, mode: DriveMode) -> f64 {
    match mode {
        DriveMode::Idle => CO2_IDLE,
        DriveMode::Cruise => CO2_IDLE + CO2_PER_METER * speed.max(0.0),
    }
}

/// Network-wide indicators for one simulated second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// m/s; free-flow speed when the network is empty.
    pub mean_velocity: f64,
    pub waiting_ratio: f64,
    /// kg/s summed over vehicles.
    pub co2_rate: f64,
    /// `x^T Q x` for the bias vector at the end of the step.
    pub squared_bias: f64,
    pub vehicle_count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_floor() {
        assert_eq!(surrogate_co2(0.0, DriveMode::Idle), 2.5e-4);
        assert_eq!(surrogate_co2(0.0, DriveMode::Cruise), 2.5e-4);
    }

    #[test]
    fn cruising_at_urban_speed() {
        let rate = surrogate_co2(13.89, DriveMode::Cruise);
        assert!((rate - 9.445e-4).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_speed() {
        let mut last = 0.0;
        for k in 0..30 {
            let v = k as f64 * 0.5;
            let r = surrogate_co2(v, DriveMode::from_speed(v));
            assert!(r >= last);
            assert!(r > 0.0);
            last = r;
        }
    }
}
