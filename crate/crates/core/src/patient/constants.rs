//! Model constants of the glucose-insulin model.
//!
//! The structure follows the Hovorka nonlinear model: two glucose
//! compartments, a two-stage subcutaneous insulin depot, plasma insulin, three
//! insulin-action states and gut absorption. Gut absorption is split into a
//! fast and a slow two-compartment channel, and two first-order sensing stages
//! (interstitial fluid, sensor electrode) follow plasma glucose. Nominal values
//! are the published population means for a 70 kg adult.

use serde::{Deserialize, Serialize};

/// Number of scalar constants in [`ModelConstants`].
pub const N_CONSTANTS: usize = 22;

/// Molar mass of glucose, g/mol.
pub const GLUCOSE_MOLAR_MASS: f64 = 180.16;

/// mg/dL per mmol/L of glucose.
pub const MGDL_PER_MMOL: f64 = 18.016;

/// Time-invariant constants of one virtual patient.
///
/// Volumes are per kilogram of body weight; rates are per minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Body weight, kg.
    pub body_weight: f64,
    /// Glucose distribution volume, L/kg.
    pub vol_glucose: f64,
    /// Insulin distribution volume, L/kg.
    pub vol_insulin: f64,
    /// Transfer rate from the non-accessible to the accessible glucose compartment, 1/min.
    pub k12: f64,
    /// Deactivation rates of the three insulin-action states, 1/min.
    pub ka1: f64,
    pub ka2: f64,
    pub ka3: f64,
    /// Insulin sensitivity of glucose transport, 1/min per mU/L.
    pub sens_transport: f64,
    /// Insulin sensitivity of glucose disposal, 1/min per mU/L.
    pub sens_disposal: f64,
    /// Insulin sensitivity of endogenous glucose production, L/mU.
    pub sens_egp: f64,
    /// Plasma insulin elimination rate, 1/min.
    pub ke: f64,
    /// Endogenous glucose production extrapolated to zero insulin, mmol/kg/min.
    pub egp0: f64,
    /// Insulin-independent glucose flux, mmol/kg/min.
    pub f01: f64,
    /// Time-to-maximum of subcutaneous insulin absorption, min.
    pub tmax_insulin: f64,
    /// Time-to-maximum of the fast and slow carbohydrate channels, min.
    pub tmax_meal_fast: f64,
    pub tmax_meal_slow: f64,
    /// Carbohydrate bioavailability, dimensionless in (0, 1].
    pub bioavailability: f64,
    /// Share of absorbed carbohydrate routed through the fast channel, in (0, 1).
    pub fast_fraction: f64,
    /// Renal clearance rate above threshold, 1/min.
    pub renal_rate: f64,
    /// Renal threshold, mmol/L.
    pub renal_threshold: f64,
    /// Plasma-to-interstitial glucose transfer rate, 1/min.
    pub ka_int: f64,
    /// Interstitial-to-sensor transfer rate, 1/min.
    pub k_sensor: f64,
}

/// Role of each constant under patient variability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variability {
    /// Varies both within a day and between patients.
    IntraAndInter,
    /// Varies only between patients (body size, volumes).
    InterOnly,
    /// Structural constants: fractions and thresholds.
    Fixed,
}

pub const CONSTANT_NAMES: [&str; N_CONSTANTS] = [
    "body_weight",
    "vol_glucose",
    "vol_insulin",
    "k12",
    "ka1",
    "ka2",
    "ka3",
    "sens_transport",
    "sens_disposal",
    "sens_egp",
    "ke",
    "egp0",
    "f01",
    "tmax_insulin",
    "tmax_meal_fast",
    "tmax_meal_slow",
    "bioavailability",
    "fast_fraction",
    "renal_rate",
    "renal_threshold",
    "ka_int",
    "k_sensor",
];

pub const VARIABILITY: [Variability; N_CONSTANTS] = {
    use Variability::*;
    [
        InterOnly,
        InterOnly,
        InterOnly,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        IntraAndInter,
        Fixed,
        Fixed,
        Fixed,
        Fixed,
        Fixed,
        Fixed,
    ]
};

impl Default for ModelConstants {
    fn default() -> Self {
        ModelConstants {
            body_weight: 70.0,
            vol_glucose: 0.16,
            vol_insulin: 0.12,
            k12: 0.066,
            ka1: 0.006,
            ka2: 0.06,
            ka3: 0.03,
            sens_transport: 51.2e-4,
            sens_disposal: 8.2e-4,
            sens_egp: 520e-4,
            ke: 0.138,
            egp0: 0.0161,
            f01: 0.0097,
            tmax_insulin: 55.0,
            tmax_meal_fast: 40.0,
            tmax_meal_slow: 90.0,
            bioavailability: 0.8,
            fast_fraction: 0.7,
            renal_rate: 0.003,
            renal_threshold: 9.0,
            ka_int: 0.066,
            k_sensor: 0.2,
        }
    }
}

impl ModelConstants {
    pub fn to_array(&self) -> [f64; N_CONSTANTS] {
        [
            self.body_weight,
            self.vol_glucose,
            self.vol_insulin,
            self.k12,
            self.ka1,
            self.ka2,
            self.ka3,
            self.sens_transport,
            self.sens_disposal,
            self.sens_egp,
            self.ke,
            self.egp0,
            self.f01,
            self.tmax_insulin,
            self.tmax_meal_fast,
            self.tmax_meal_slow,
            self.bioavailability,
            self.fast_fraction,
            self.renal_rate,
            self.renal_threshold,
            self.ka_int,
            self.k_sensor,
        ]
    }

    pub fn from_array(a: &[f64; N_CONSTANTS]) -> Self {
        ModelConstants {
            body_weight: a[0],
            vol_glucose: a[1],
            vol_insulin: a[2],
            k12: a[3],
            ka1: a[4],
            ka2: a[5],
            ka3: a[6],
            sens_transport: a[7],
            sens_disposal: a[8],
            sens_egp: a[9],
            ke: a[10],
            egp0: a[11],
            f01: a[12],
            tmax_insulin: a[13],
            tmax_meal_fast: a[14],
            tmax_meal_slow: a[15],
            bioavailability: a[16],
            fast_fraction: a[17],
            renal_rate: a[18],
            renal_threshold: a[19],
            ka_int: a[20],
            k_sensor: a[21],
        }
    }

    /// Every constant positive and finite, fractions inside their ranges.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v > 0.0)
            && self.bioavailability <= 1.0
            && self.fast_fraction < 1.0
    }

    /// Glucose distribution volume in litres.
    #[inline]
    pub fn glucose_volume_l(&self) -> f64 {
        self.vol_glucose * self.body_weight
    }

    /// Insulin distribution volume in litres.
    #[inline]
    pub fn insulin_volume_l(&self) -> f64 {
        self.vol_insulin * self.body_weight
    }
}
