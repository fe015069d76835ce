//! Virtual type-1-diabetes patient: ODE dynamics, CGM sensing, meal
//! disturbances and patient-parameter sampling.

pub mod constants;
pub mod dynamics;
pub mod meals;
pub mod params;
pub mod sensor;
pub mod state;

pub use constants::{ModelConstants, MGDL_PER_MMOL};
pub use dynamics::{basal_equilibrium, basal_rate, equilibrium_state, integrate, integrate_step, with_bg};
pub use meals::{sample_meal_schedule, DisturbanceTrace, MealDistributionSpec, MealSlot};
pub use params::{sample_patient_params, PatientConfig, PatientParameters, VariabilitySpec};
pub use sensor::{cgm_observe, SensorConfig, SensorSite};
pub use state::{bg_of_state, idx, PatientState, STATE_DIM};

use crate::control::Plant;
use crate::error::Result;

/// A patient with (possibly time-varying) parameters, advanced one control
/// step at a time.
#[derive(Debug, Clone)]
pub struct PatientModel {
    params: PatientParameters,
    constant: Option<ModelConstants>,
    step_min: f64,
    substep_min: f64,
}

impl PatientModel {
    pub fn new(params: PatientParameters, step_min: f64) -> Self {
        let constant = (!params.has_intra_variation()).then(|| params.baseline());
        PatientModel {
            params,
            constant,
            step_min,
            substep_min: dynamics::DEFAULT_SUBSTEP_MIN,
        }
    }

    pub fn with_substep(mut self, substep_min: f64) -> Self {
        self.substep_min = substep_min;
        self
    }

    pub fn params(&self) -> &PatientParameters {
        &self.params
    }

    /// λ_t at time `t_min`.
    #[inline]
    pub fn constants_at(&self, t_min: f64) -> ModelConstants {
        match &self.constant {
            Some(c) => *c,
            None => self.params.at(t_min),
        }
    }

    /// Basal rate and equilibrium of the unmodulated parameters.
    pub fn basal_equilibrium(&self, target_bg: f64) -> Result<(f64, PatientState)> {
        basal_equilibrium(&self.params.baseline(), target_bg)
    }
}

impl Plant for PatientModel {
    type State = PatientState;

    fn step_min(&self) -> f64 {
        self.step_min
    }

    fn advance(&self, x: &PatientState, t_min: f64, u: f64, carbs_g: f64) -> Result<PatientState> {
        let c = self.constants_at(t_min);
        integrate(&c, x, u, carbs_g / self.step_min, self.step_min, self.substep_min)
    }

    fn bg(&self, x: &PatientState, t_min: f64) -> f64 {
        x.bg(&self.constants_at(t_min))
    }
}
