//! Time-indexed patient parameters and the three experimental configurations.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::constants::{ModelConstants, Variability, N_CONSTANTS, VARIABILITY};
use crate::error::{Error, Result};

/// Parameter vector λ_t of one virtual patient.
///
/// `λ_i(t) = nominal_i · inter_scale_i · (1 + a_i · sin(2π t / 1440 + φ_i))`
/// with `t` in minutes and `φ_i` in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientParameters {
    pub nominal: ModelConstants,
    /// Daily oscillation amplitude per constant, fraction of nominal, in [0, 1).
    pub intra_amplitude: [f64; N_CONSTANTS],
    /// Oscillation phase per constant, radians.
    pub intra_phase: [f64; N_CONSTANTS],
    /// Multiplicative between-patient factor per constant.
    pub inter_scale: [f64; N_CONSTANTS],
}

/// Which variability is switched on for a test or training patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatientConfig {
    /// Nominal, time-constant parameters.
    Fixed,
    /// Nominal parameters with daily intra-patient oscillation.
    Varying,
    /// Log-normal between-patient factors plus daily oscillation.
    Cohort,
}

impl PatientConfig {
    pub const ALL: [PatientConfig; 3] = [PatientConfig::Fixed, PatientConfig::Varying, PatientConfig::Cohort];

    pub fn tag(self) -> &'static str {
        match self {
            PatientConfig::Fixed => "fixed",
            PatientConfig::Varying => "varying",
            PatientConfig::Cohort => "cohort",
        }
    }
}

impl std::str::FromStr for PatientConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PatientConfig::Fixed),
            "varying" => Ok(PatientConfig::Varying),
            "cohort" => Ok(PatientConfig::Cohort),
            other => Err(Error::Config(format!(
                "unknown patient configuration `{other}` (expected fixed|varying|cohort)"
            ))),
        }
    }
}

impl std::fmt::Display for PatientConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Magnitudes of the variability stand-ins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariabilitySpec {
    /// Daily oscillation amplitude (fraction of nominal).
    pub intra_amplitude: f64,
    /// Coefficient of variation of the between-patient log-normal factor.
    pub inter_cov: f64,
    /// Truncation interval of the between-patient factor.
    pub inter_min: f64,
    pub inter_max: f64,
}

impl Default for VariabilitySpec {
    fn default() -> Self {
        VariabilitySpec {
            intra_amplitude: 0.10,
            inter_cov: 0.15,
            inter_min: 0.6,
            inter_max: 1.6,
        }
    }
}

impl VariabilitySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.intra_amplitude)
            && self.inter_cov >= 0.0
            && self.inter_min > 0.0
            && self.inter_min <= 1.0
            && self.inter_max >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid variability spec {self:?}")))
        }
    }
}

impl PatientParameters {
    /// Time-constant parameters equal to `nominal`.
    pub fn constant(nominal: ModelConstants) -> Self {
        PatientParameters {
            nominal,
            intra_amplitude: [0.0; N_CONSTANTS],
            intra_phase: [0.0; N_CONSTANTS],
            inter_scale: [1.0; N_CONSTANTS],
        }
    }

    pub fn has_intra_variation(&self) -> bool {
        self.intra_amplitude.iter().any(|a| *a != 0.0)
    }

    /// Parameters without the daily oscillation: nominal times inter-patient factor.
    pub fn baseline(&self) -> ModelConstants {
        let mut a = self.nominal.to_array();
        for (v, s) in a.iter_mut().zip(self.inter_scale.iter()) {
            *v *= s;
        }
        ModelConstants::from_array(&a)
    }

    /// λ_t at simulation time `t_min` (minutes).
    pub fn at(&self, t_min: f64) -> ModelConstants {
        if !self.has_intra_variation() {
            return self.baseline();
        }
        let mut a = self.nominal.to_array();
        let w = 2.0 * PI * t_min / 1440.0;
        for i in 0..N_CONSTANTS {
            let mod_i = 1.0 + self.intra_amplitude[i] * (w + self.intra_phase[i]).sin();
            a[i] *= self.inter_scale[i] * mod_i;
        }
        ModelConstants::from_array(&a)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nominal.is_valid() {
            return Err(Error::Config("nominal model constants must be positive".into()));
        }
        for i in 0..N_CONSTANTS {
            let a = self.intra_amplitude[i];
            let s = self.inter_scale[i];
            if !(0.0..1.0).contains(&a) || !(s > 0.0 && s.is_finite()) || !self.intra_phase[i].is_finite() {
                return Err(Error::Config(format!(
                    "parameter {i}: amplitude {a}, inter scale {s}"
                )));
            }
        }
        if !self.baseline().is_valid() {
            return Err(Error::Config("scaled model constants leave their valid range".into()));
        }
        Ok(())
    }
}

fn draw_intra(params: &mut PatientParameters, spec: &VariabilitySpec, rng: &mut impl Rng) {
    for i in 0..N_CONSTANTS {
        if VARIABILITY[i] == Variability::IntraAndInter {
            params.intra_amplitude[i] = spec.intra_amplitude;
            params.intra_phase[i] = rng.gen_range(0.0..2.0 * PI);
        } else {
            params.intra_amplitude[i] = 0.0;
            params.intra_phase[i] = 0.0;
        }
    }
}

/// Log-normal factor with median 1 and the requested coefficient of
/// variation, redrawn until it lands in `[min, max]`.
pub fn truncated_lognormal_factor(spec: &VariabilitySpec, rng: &mut impl Rng) -> f64 {
    if spec.inter_cov == 0.0 {
        return 1.0;
    }
    let sigma = (1.0 + spec.inter_cov * spec.inter_cov).ln().sqrt();
    let dist = LogNormal::new(0.0, sigma).expect("sigma is finite and positive");
    loop {
        let f = dist.sample(rng);
        if (spec.inter_min..=spec.inter_max).contains(&f) {
            return f;
        }
    }
}

/// Draws the parameters of one test or training patient from `base`.
pub fn sample_patient_params(
    config: PatientConfig,
    base: &PatientParameters,
    spec: &VariabilitySpec,
    rng: &mut impl Rng,
) -> PatientParameters {
    let mut p = PatientParameters::constant(base.nominal);
    match config {
        PatientConfig::Fixed => {}
        PatientConfig::Varying => draw_intra(&mut p, spec, rng),
        PatientConfig::Cohort => {
            for i in 0..N_CONSTANTS {
                if VARIABILITY[i] != Variability::Fixed {
                    p.inter_scale[i] = truncated_lognormal_factor(spec, rng);
                }
            }
            draw_intra(&mut p, spec, rng);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_config_is_time_constant() {
        let base = PatientParameters::constant(ModelConstants::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_patient_params(PatientConfig::Fixed, &base, &VariabilitySpec::default(), &mut rng);
        for t in [0.0, 133.0, 700.0, 1439.0] {
            assert_eq!(p.at(t), base.nominal);
        }
    }

    #[test]
    fn varying_config_stays_within_sinusoid_bounds() {
        let base = PatientParameters::constant(ModelConstants::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sample_patient_params(PatientConfig::Varying, &base, &VariabilitySpec::default(), &mut rng);
        let samples: Vec<[f64; N_CONSTANTS]> = (0..1440).map(|t| p.at(t as f64).to_array()).collect();
        let mut any_varies = false;
        for i in 0..N_CONSTANTS {
            let max = samples.iter().map(|s| s[i]).fold(f64::MIN, f64::max);
            let min = samples.iter().map(|s| s[i]).fold(f64::MAX, f64::min);
            assert!(min > 0.0);
            assert!(max / min <= 1.1 / 0.9 + 1e-12);
            any_varies |= max > min;
        }
        assert!(any_varies);
    }

    #[test]
    fn cohort_factors_have_unit_median() {
        let base = PatientParameters::constant(ModelConstants::default());
        let spec = VariabilitySpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut scales: Vec<f64> = (0..1000)
            .map(|_| sample_patient_params(PatientConfig::Cohort, &base, &spec, &mut rng).inter_scale[7])
            .collect();
        scales.sort_by(f64::total_cmp);
        let median = 0.5 * (scales[499] + scales[500]);
        assert!((median - 1.0).abs() < 0.03, "median {median}");
        assert!(scales.iter().all(|s| (0.6..=1.6).contains(s)));
    }

    #[test]
    fn cohort_patients_are_valid() {
        let base = PatientParameters::constant(ModelConstants::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p = sample_patient_params(PatientConfig::Cohort, &base, &VariabilitySpec::default(), &mut rng);
            p.validate().unwrap();
        }
    }
}
