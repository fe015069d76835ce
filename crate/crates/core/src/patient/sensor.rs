use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::constants::ModelConstants;
use super::state::PatientState;
use crate::error::{Error, Result};

/// Which glucose signal the CGM reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorSite {
    /// Plasma glucose, `y = h(x) + ε`.
    #[default]
    Plasma,
    /// The lagged sensor-side compartment.
    Interstitial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Standard deviation of the additive Gaussian noise, mg/dL.
    pub noise_std: f64,
    /// Sampling period, minutes. Also the control step.
    pub cgm_period: f64,
    pub site: SensorSite,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            noise_std: 5.0,
            cgm_period: 5.0,
            site: SensorSite::Plasma,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("sensor noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(self.cgm_period > 0.0 && self.cgm_period.is_finite()) {
            return Err(Error::Config(format!("cgm_period must be > 0, got {}", self.cgm_period)));
        }
        Ok(())
    }

    /// Noiseless reading of `x`.
    pub fn read(&self, x: &PatientState, c: &ModelConstants) -> f64 {
        match self.site {
            SensorSite::Plasma => x.bg(c),
            SensorSite::Interstitial => x.sensor_glucose(),
        }
    }
}

/// One CGM sample: the noiseless reading plus N(0, σ_ε), clamped at zero.
pub fn cgm_observe(x: &PatientState, c: &ModelConstants, sensor: &SensorConfig, rng: &mut impl Rng) -> f64 {
    let clean = sensor.read(x, c);
    if sensor.noise_std == 0.0 {
        return clean;
    }
    let noise = Normal::new(0.0, sensor.noise_std).expect("validated std");
    (clean + noise.sample(rng)).max(0.0)
}
