use crate::error::Result;

/// A discrete-time plant advanced one control step at a time.
///
/// `t_min` is absolute simulation time, so time-varying parameters are
/// evaluated where the step starts.
pub trait Plant {
    type State: Clone;

    /// Control-step length, minutes.
    fn step_min(&self) -> f64;

    /// State after one control step with constant insulin `u` (mU/min) and
    /// `carbs_g` grams ingested during the step.
    fn advance(&self, x: &Self::State, t_min: f64, u: f64, carbs_g: f64) -> Result<Self::State>;

    /// Blood glucose of `x`, mg/dL.
    fn bg(&self, x: &Self::State, t_min: f64) -> f64;
}

/// A one-state plant used to check the optimisers against brute force:
/// `g' = g + dt·(a·(g_b − g) − s·(u − u_b) + k·carbs_g/dt)`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarPlant {
    pub step_min: f64,
    /// Relaxation rate towards `g_basal`, 1/min.
    pub relax: f64,
    /// Glucose drop per mU of insulin above basal, mg/dL per mU.
    pub sensitivity: f64,
    /// Glucose rise per gram of carbohydrate, mg/dL per g.
    pub carb_gain: f64,
    pub g_basal: f64,
    pub u_basal: f64,
}

impl Default for ScalarPlant {
    fn default() -> Self {
        ScalarPlant {
            step_min: 5.0,
            relax: 0.01,
            sensitivity: 0.05,
            carb_gain: 3.0,
            g_basal: 110.0,
            u_basal: 10.0,
        }
    }
}

impl Plant for ScalarPlant {
    type State = f64;

    fn step_min(&self) -> f64 {
        self.step_min
    }

    fn advance(&self, g: &f64, _t: f64, u: f64, carbs_g: f64) -> Result<f64> {
        let dt = self.step_min;
        Ok(g + dt * (self.relax * (self.g_basal - g) - self.sensitivity * (u - self.u_basal)) + self.carb_gain * carbs_g)
    }

    fn bg(&self, g: &f64, _t: f64) -> f64 {
        *g
    }
}
