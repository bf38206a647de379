use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Two-rate simulation clock. Time is an integer count of flight steps so that
/// repeated runs never drift apart through float accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub step: u64,
    pub flight_dt: f64,
    pub circuit_dt: f64,
    substeps: u32,
}

impl SimClock {
    pub fn new(flight_dt: f64, circuit_dt: f64) -> Result<Self> {
        if !(flight_dt > 0.0 && flight_dt.is_finite()) {
            return Err(SimError::BadStep(flight_dt));
        }
        if !(circuit_dt > 0.0 && circuit_dt <= flight_dt) {
            return Err(SimError::BadStep(circuit_dt));
        }
        let ratio = flight_dt / circuit_dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-6 {
            return Err(SimError::Config(format!(
                "circuit_dt {circuit_dt} does not divide flight_dt {flight_dt}"
            )));
        }
        Ok(Self { step: 0, flight_dt, circuit_dt, substeps: n as u32 })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.flight_dt
    }

    pub fn substeps_per_flight_step(&self) -> u32 {
        self.substeps
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rates_give_100_substeps() {
        let c = SimClock::new(0.01, 1e-4).unwrap();
        assert_eq!(c.substeps_per_flight_step(), 100);
    }

    #[test]
    fn time_is_exact_after_many_steps() {
        let mut c = SimClock::new(0.01, 1e-4).unwrap();
        for _ in 0..360_000 {
            c.advance();
        }
        assert_eq!(c.t(), 3600.0);
    }

    #[test]
    fn rejects_non_dividing_rates() {
        assert!(SimClock::new(0.01, 3e-3).is_err());
        assert!(SimClock::new(0.0, 1e-4).is_err());
    }
}
