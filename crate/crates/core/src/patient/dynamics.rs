//! Right-hand side of the patient ODE, fixed-step RK4 integration, and the
//! basal equilibrium.

use super::constants::{ModelConstants, GLUCOSE_MOLAR_MASS, MGDL_PER_MMOL};
use super::state::{idx, PatientState, COMPARTMENT_NAMES, STATE_DIM};
use crate::error::{Error, Result};

/// Largest internal RK4 step, minutes.
pub const DEFAULT_SUBSTEP_MIN: f64 = 2.5;

// Half-widths of the smooth ramps replacing the hard switches of the
// original model (F01 saturation below 4.5 mmol/L, renal threshold, EGP
// floor at zero). They keep the right-hand side C-infinity so RK4 retains
// its order across threshold crossings.
const F01_RAMP: f64 = 0.05;
const RENAL_RAMP: f64 = 0.5;
const EGP_RAMP: f64 = 0.05;

/// Smooth approximation of `max(z, 0)` with transition width `s`.
#[inline]
fn soft_relu(z: f64, s: f64) -> f64 {
    0.5 * (z + (z * z + s * s).sqrt())
}

/// Time derivative of the state under insulin infusion `u` (mU/min) and
/// carbohydrate intake `carbs_g_per_min` (g/min).
pub fn derivatives(
    c: &ModelConstants,
    x: &[f64; STATE_DIM],
    u: f64,
    carbs_g_per_min: f64,
    dx: &mut [f64; STATE_DIM],
) {
    let vg = c.glucose_volume_l();
    let q1 = x[idx::Q1];
    let q2 = x[idx::Q2];
    let g = q1 / vg;

    // carbohydrate, g/min -> glucose mmol/min
    let intake = carbs_g_per_min * 1000.0 / GLUCOSE_MOLAR_MASS * c.bioavailability;
    let (tf, ts) = (c.tmax_meal_fast, c.tmax_meal_slow);
    dx[idx::D1_FAST] = c.fast_fraction * intake - x[idx::D1_FAST] / tf;
    dx[idx::D2_FAST] = (x[idx::D1_FAST] - x[idx::D2_FAST]) / tf;
    dx[idx::D1_SLOW] = (1.0 - c.fast_fraction) * intake - x[idx::D1_SLOW] / ts;
    dx[idx::D2_SLOW] = (x[idx::D1_SLOW] - x[idx::D2_SLOW]) / ts;
    let gut_appearance = x[idx::D2_FAST] / tf + x[idx::D2_SLOW] / ts;

    let tmax_i = c.tmax_insulin;
    dx[idx::S1] = u - x[idx::S1] / tmax_i;
    dx[idx::S2] = (x[idx::S1] - x[idx::S2]) / tmax_i;
    let plasma_i = x[idx::I];
    dx[idx::I] = x[idx::S2] / (tmax_i * c.insulin_volume_l()) - c.ke * plasma_i;

    dx[idx::X1] = c.ka1 * (c.sens_transport * plasma_i - x[idx::X1]);
    dx[idx::X2] = c.ka2 * (c.sens_disposal * plasma_i - x[idx::X2]);
    dx[idx::X3] = c.ka3 * (c.sens_egp * plasma_i - x[idx::X3]);

    let f01c = c.f01 * c.body_weight * (1.0 - soft_relu(1.0 - g / 4.5, F01_RAMP));
    let renal = c.renal_rate * vg * soft_relu(g - c.renal_threshold, RENAL_RAMP);
    let egp = c.egp0 * c.body_weight * soft_relu(1.0 - x[idx::X3], EGP_RAMP);
    dx[idx::Q1] = -f01c - x[idx::X1] * q1 + c.k12 * q2 - renal + gut_appearance + egp;
    dx[idx::Q2] = x[idx::X1] * q1 - (c.k12 + x[idx::X2]) * q2;

    dx[idx::G_INT] = c.ka_int * (g - x[idx::G_INT]);
    dx[idx::G_SENSOR] = c.k_sensor * (x[idx::G_INT] - x[idx::G_SENSOR]);
}

#[inline]
fn axpy(a: f64, x: &[f64; STATE_DIM], y: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
    let mut out = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        out[i] = y[i] + a * x[i];
    }
    out
}

/// One classical RK4 step of length `h` minutes.
#[inline]
fn rk4(c: &ModelConstants, x: &[f64; STATE_DIM], u: f64, d: f64, h: f64) -> [f64; STATE_DIM] {
    let mut k1 = [0.0; STATE_DIM];
    let mut k2 = [0.0; STATE_DIM];
    let mut k3 = [0.0; STATE_DIM];
    let mut k4 = [0.0; STATE_DIM];
    derivatives(c, x, u, d, &mut k1);
    derivatives(c, &axpy(0.5 * h, &k1, x), u, d, &mut k2);
    derivatives(c, &axpy(0.5 * h, &k2, x), u, d, &mut k3);
    derivatives(c, &axpy(h, &k3, x), u, d, &mut k4);
    let mut out = [0.0; STATE_DIM];
    let w = h / 6.0;
    for i in 0..STATE_DIM {
        out[i] = x[i] + w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Advances `x` by `dt` minutes with constant insulin `u` (mU/min) and
/// carbohydrate rate `carbs_g_per_min`, using RK4 with equal substeps no
/// longer than `max_substep` minutes.
///
/// Tiny negative values produced by rounding are clipped to zero; a
/// non-finite compartment is reported as [`Error::IntegrationBlowup`].
pub fn integrate(
    c: &ModelConstants,
    x: &PatientState,
    u: f64,
    carbs_g_per_min: f64,
    dt: f64,
    max_substep: f64,
) -> Result<PatientState> {
    debug_assert!(dt > 0.0 && max_substep > 0.0);
    let n = (dt / max_substep - 1e-9).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut s = x.0;
    for _ in 0..n {
        s = rk4(c, &s, u, carbs_g_per_min, h);
    }
    for (i, v) in s.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::IntegrationBlowup {
                index: i,
                name: COMPARTMENT_NAMES[i],
                value: *v,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(PatientState(s))
}

/// [`integrate`] with the default substep.
pub fn integrate_step(
    c: &ModelConstants,
    x: &PatientState,
    u: f64,
    carbs_g_per_min: f64,
    dt: f64,
) -> Result<PatientState> {
    integrate(c, x, u, carbs_g_per_min, dt, DEFAULT_SUBSTEP_MIN)
}

/// Plasma insulin and action states at steady state under constant `u`.
fn insulin_steady_state(c: &ModelConstants, u: f64) -> [f64; STATE_DIM] {
    let mut x = [0.0; STATE_DIM];
    x[idx::S1] = u * c.tmax_insulin;
    x[idx::S2] = u * c.tmax_insulin;
    let i = u / (c.ke * c.insulin_volume_l());
    x[idx::I] = i;
    x[idx::X1] = c.sens_transport * i;
    x[idx::X2] = c.sens_disposal * i;
    x[idx::X3] = c.sens_egp * i;
    x
}

/// Net accessible-compartment glucose flux at steady glucose `g` (mmol/L),
/// with Q2 at its own steady state. Strictly decreasing in `g`.
fn glucose_balance(c: &ModelConstants, x: &[f64; STATE_DIM], g: f64) -> f64 {
    let vg = c.glucose_volume_l();
    let q1 = g * vg;
    let (x1, x2, x3) = (x[idx::X1], x[idx::X2], x[idx::X3]);
    let q2 = x1 * q1 / (c.k12 + x2);
    let f01c = c.f01 * c.body_weight * (1.0 - soft_relu(1.0 - g / 4.5, F01_RAMP));
    let renal = c.renal_rate * vg * soft_relu(g - c.renal_threshold, RENAL_RAMP);
    let egp = c.egp0 * c.body_weight * soft_relu(1.0 - x3, EGP_RAMP);
    -f01c - x1 * q1 + c.k12 * q2 - renal + egp
}

/// Fasting steady state under constant insulin `u` and no carbohydrate.
pub fn equilibrium_state(c: &ModelConstants, u: f64) -> Result<PatientState> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::NoEquilibrium(format!("insulin rate {u} is not a valid infusion")));
    }
    let mut x = insulin_steady_state(c, u);
    let (mut lo, mut hi) = (0.0_f64, 200.0_f64);
    if glucose_balance(c, &x, hi) > 0.0 {
        return Err(Error::NoEquilibrium(format!(
            "glucose diverges under u = {u} mU/min"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if glucose_balance(c, &x, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let g = 0.5 * (lo + hi);
    let q1 = g * c.glucose_volume_l();
    x[idx::Q1] = q1;
    x[idx::Q2] = x[idx::X1] * q1 / (c.k12 + x[idx::X2]);
    x[idx::G_INT] = g;
    x[idx::G_SENSOR] = g;
    Ok(PatientState(x))
}

/// Steady-state plasma glucose in mg/dL under constant insulin `u`.
pub fn steady_state_bg(c: &ModelConstants, u: f64) -> Result<f64> {
    Ok(equilibrium_state(c, u)?.bg(c))
}

/// Upper end of the basal-rate bisection bracket, mU/min.
pub const BASAL_BRACKET_MAX: f64 = 500.0;

/// Insulin rate whose fasting steady state sits at `target_bg` (mg/dL),
/// found by bisection on the steady-state glucose.
pub fn basal_rate(c: &ModelConstants, target_bg: f64) -> Result<f64> {
    if !(target_bg > 50.0 && target_bg < 300.0) {
        return Err(Error::NoEquilibrium(format!(
            "target {target_bg} mg/dL outside (50, 300)"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, BASAL_BRACKET_MAX);
    let bg_lo = steady_state_bg(c, lo)?;
    let bg_hi = steady_state_bg(c, hi)?;
    if !(bg_lo > target_bg && bg_hi < target_bg) {
        return Err(Error::NoEquilibrium(format!(
            "steady-state BG spans [{bg_hi:.1}, {bg_lo:.1}] mg/dL over u in [0, {hi}], target {target_bg}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if steady_state_bg(c, mid)? > target_bg {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equilibrium at `target_bg` with the matching basal rate.
pub fn basal_equilibrium(c: &ModelConstants, target_bg: f64) -> Result<(f64, PatientState)> {
    let u = basal_rate(c, target_bg)?;
    Ok((u, equilibrium_state(c, u)?))
}

/// Rescales both glucose compartments so plasma glucose reads `bg` mg/dL.
pub fn with_bg(c: &ModelConstants, x: &PatientState, bg: f64) -> PatientState {
    let current = x.bg(c);
    let mut out = *x;
    if current > 0.0 {
        let f = bg / current;
        out[idx::Q1] *= f;
        out[idx::Q2] *= f;
        out[idx::G_INT] *= f;
        out[idx::G_SENSOR] *= f;
    } else {
        out[idx::Q1] = bg / MGDL_PER_MMOL * c.glucose_volume_l();
    }
    out
}
