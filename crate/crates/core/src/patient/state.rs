use serde::{Deserialize, Serialize};

use super::constants::{ModelConstants, MGDL_PER_MMOL};

pub const STATE_DIM: usize = 14;

/// Compartment indices into [`PatientState`].
pub mod idx {
    /// Glucose mass in the accessible (plasma) compartment, mmol.
    pub const Q1: usize = 0;
    /// Glucose mass in the non-accessible compartment, mmol.
    pub const Q2: usize = 1;
    /// Subcutaneous insulin, first depot, mU.
    pub const S1: usize = 2;
    /// Subcutaneous insulin, second depot, mU.
    pub const S2: usize = 3;
    /// Plasma insulin concentration, mU/L.
    pub const I: usize = 4;
    /// Insulin action on glucose transport, 1/min.
    pub const X1: usize = 5;
    /// Insulin action on glucose disposal, 1/min.
    pub const X2: usize = 6;
    /// Insulin action on endogenous production, dimensionless.
    pub const X3: usize = 7;
    /// Fast carbohydrate channel, first and second compartment, mmol.
    pub const D1_FAST: usize = 8;
    pub const D2_FAST: usize = 9;
    /// Slow carbohydrate channel, first and second compartment, mmol.
    pub const D1_SLOW: usize = 10;
    pub const D2_SLOW: usize = 11;
    /// Interstitial glucose concentration, mmol/L.
    pub const G_INT: usize = 12;
    /// Sensor-side glucose concentration, mmol/L.
    pub const G_SENSOR: usize = 13;
}

pub const COMPARTMENT_NAMES: [&str; STATE_DIM] = [
    "Q1", "Q2", "S1", "S2", "I", "x1", "x2", "x3", "D1_fast", "D2_fast", "D1_slow", "D2_slow",
    "G_int", "G_sensor",
];

/// Physiological state of the virtual patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientState(pub [f64; STATE_DIM]);

impl PatientState {
    pub fn zeros() -> Self {
        PatientState([0.0; STATE_DIM])
    }

    #[inline]
    pub fn as_array(&self) -> &[f64; STATE_DIM] {
        &self.0
    }

    /// Finite and non-negative in every compartment.
    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Plasma glucose concentration in mg/dL.
    #[inline]
    pub fn bg(&self, c: &ModelConstants) -> f64 {
        self.0[idx::Q1] / c.glucose_volume_l() * MGDL_PER_MMOL
    }

    /// Sensor-side (interstitial, lagged) glucose in mg/dL.
    #[inline]
    pub fn sensor_glucose(&self) -> f64 {
        self.0[idx::G_SENSOR] * MGDL_PER_MMOL
    }

    /// Glucose mass still in the gut, mmol.
    pub fn gut_glucose(&self) -> f64 {
        self.0[idx::D1_FAST] + self.0[idx::D2_FAST] + self.0[idx::D1_SLOW] + self.0[idx::D2_SLOW]
    }
}

impl std::ops::Index<usize> for PatientState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for PatientState {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Noiseless glucose output of a state: plasma concentration in mg/dL.
pub fn bg_of_state(x: &PatientState, c: &ModelConstants) -> f64 {
    x.bg(c)
}
