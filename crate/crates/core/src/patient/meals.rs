//! Meal-disturbance distributions and sampled carbohydrate traces.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minutes over which a sampled meal is ingested at constant rate.
pub const INGESTION_MINUTES: f64 = 15.0;

const TRAINING_TOML: &str = include_str!("../../data/meals/training.toml");
const UNSEEN_TOML: &str = include_str!("../../data/meals/unseen.toml");

/// One meal slot: occurrence probability, carbohydrate interval and start window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealSlot {
    pub name: String,
    /// Occurrence probability in percent.
    pub probability: f64,
    /// Carbohydrate amount interval, grams.
    pub cho_min: f64,
    pub cho_max: f64,
    /// Start-time window, hours of day, half-open `[start_hour, end_hour)`.
    pub start_hour: f64,
    pub end_hour: f64,
}

/// Per-day distribution of meal disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealDistributionSpec {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "slot")]
    pub slots: Vec<MealSlot>,
}

impl MealDistributionSpec {
    /// Three main meals and three snacks used at training time.
    pub fn training() -> Self {
        Self::from_toml(TRAINING_TOML).expect("bundled training spec is valid")
    }

    /// Later, larger and more frequent snacks; used only at test time.
    pub fn unseen() -> Self {
        Self::from_toml(UNSEEN_TOML).expect("bundled unseen spec is valid")
    }

    /// Bundled spec by name (`training`, `unseen`) or a TOML file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "training" => Ok(Self::training()),
            "unseen" => Ok(Self::unseen()),
            path => Self::load(path),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: MealDistributionSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read meal spec {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("meal spec {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::InvalidMealSpec("no meal slots".into()));
        }
        for s in &self.slots {
            let bad = |why: &str| Err(Error::InvalidMealSpec(format!("slot `{}`: {why}", s.name)));
            if !(0.0..=100.0).contains(&s.probability) {
                return bad("probability outside [0, 100]");
            }
            if !(s.cho_min >= 0.0 && s.cho_min <= s.cho_max && s.cho_max.is_finite()) {
                return bad("empty or negative carbohydrate interval");
            }
            if !(s.start_hour >= 0.0 && s.start_hour < s.end_hour && s.end_hour <= 24.0) {
                return bad("start window must be a nonempty interval inside [0, 24)");
            }
        }
        let mut windows: Vec<(f64, f64, &str)> =
            self.slots.iter().map(|s| (s.start_hour, s.end_hour, s.name.as_str())).collect();
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in windows.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidMealSpec(format!(
                    "windows of `{}` and `{}` overlap",
                    w[0].2, w[1].2
                )));
            }
        }
        Ok(())
    }
}

/// A realised meal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealEvent {
    pub start_min: f64,
    pub grams: f64,
}

/// Carbohydrate intake per control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceTrace {
    /// Control-step length, minutes.
    pub step_min: f64,
    /// Grams ingested during each control step.
    pub carbs: Vec<f64>,
    pub meals: Vec<MealEvent>,
}

impl DisturbanceTrace {
    pub fn zeros(steps: usize, step_min: f64) -> Self {
        DisturbanceTrace {
            step_min,
            carbs: vec![0.0; steps],
            meals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.carbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carbs.is_empty()
    }

    /// Grams at step `k`, zero past the end.
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.carbs.get(k).copied().unwrap_or(0.0)
    }

    /// `len` steps starting at `k`, zero-padded past the end.
    pub fn window(&self, k: usize, len: usize) -> Vec<f64> {
        (k..k + len).map(|j| self.at(j)).collect()
    }

    /// Spreads `grams` uniformly over `[start, start + INGESTION_MINUTES)`.
    fn deposit(&mut self, start_min: f64, grams: f64) {
        let rate = grams / INGESTION_MINUTES;
        let end = start_min + INGESTION_MINUTES;
        let first = (start_min / self.step_min).floor().max(0.0) as usize;
        for k in first..self.carbs.len() {
            let lo = k as f64 * self.step_min;
            let hi = lo + self.step_min;
            if lo >= end {
                break;
            }
            let overlap = hi.min(end) - lo.max(start_min);
            if overlap > 0.0 {
                self.carbs[k] += rate * overlap;
            }
        }
        self.meals.push(MealEvent { start_min, grams });
    }

    /// Writes `t_min,carbs_g`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t_min,carbs_g")?;
        for (k, c) in self.carbs.iter().enumerate() {
            writeln!(w, "{},{}", k as f64 * self.step_min, c)?;
        }
        Ok(())
    }
}

/// Samples a carbohydrate trace of `steps` control steps of `step_min`
/// minutes. Every simulated day draws each slot independently.
pub fn sample_meal_schedule(
    spec: &MealDistributionSpec,
    steps: usize,
    step_min: f64,
    rng: &mut impl Rng,
) -> Result<DisturbanceTrace> {
    if steps == 0 {
        return Err(Error::InvalidMealSpec("trace needs at least one step".into()));
    }
    spec.validate()?;
    let mut trace = DisturbanceTrace::zeros(steps, step_min);
    let days = ((steps as f64 * step_min) / 1440.0).ceil() as usize;
    for day in 0..days {
        for slot in &spec.slots {
            // all three draws happen regardless of occurrence, so the stream
            // stays aligned across specs with the same number of slots
            let occurs = rng.gen::<f64>() * 100.0 < slot.probability;
            let grams = uniform(rng, slot.cho_min, slot.cho_max);
            let hour = uniform(rng, slot.start_hour, slot.end_hour);
            if occurs && grams > 0.0 {
                trace.deposit(day as f64 * 1440.0 + hour * 60.0, grams);
            }
        }
    }
    Ok(trace)
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundled_specs_match_the_published_tables() {
        let t = MealDistributionSpec::training();
        let names: Vec<&str> = t.slots.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["breakfast", "snack1", "lunch", "snack2", "dinner", "snack3"]);
        let b = &t.slots[0];
        assert_eq!((b.probability, b.cho_min, b.cho_max, b.start_hour, b.end_hour), (100.0, 40.0, 60.0, 1.0, 5.0));
        let lunch = &t.slots[2];
        assert_eq!((lunch.cho_min, lunch.cho_max), (70.0, 110.0));
        let u = MealDistributionSpec::unseen();
        assert_eq!(u.slots[1].probability, 80.0);
        assert_eq!((u.slots[5].cho_min, u.slots[5].cho_max), (15.0, 30.0));
        assert_eq!((u.slots[5].start_hour, u.slots[5].end_hour), (21.0, 23.0));
    }

    #[test]
    fn zero_probabilities_give_an_empty_trace() {
        let mut spec = MealDistributionSpec::training();
        for s in &mut spec.slots {
            s.probability = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = sample_meal_schedule(&spec, 600, 5.0, &mut rng).unwrap();
        assert!(tr.carbs.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn deposited_mass_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tr = sample_meal_schedule(&MealDistributionSpec::training(), 288, 5.0, &mut rng).unwrap();
        let total: f64 = tr.carbs.iter().sum();
        let meals: f64 = tr.meals.iter().map(|m| m.grams).sum();
        assert!((total - meals).abs() < 1e-9);
        assert!(tr.carbs.iter().all(|c| *c >= 0.0 && c.is_finite()));
        // breakfast always occurs inside its window
        let b = tr.meals[0];
        assert!((60.0..300.0).contains(&b.start_min) && (40.0..60.0).contains(&b.grams));
    }

    #[test]
    fn lunch_amount_mean_is_interval_midpoint() {
        let spec = MealDistributionSpec::training();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let tr = sample_meal_schedule(&spec, 288, 5.0, &mut rng).unwrap();
            let lunch = tr
                .meals
                .iter()
                .find(|m| (480.0..720.0).contains(&m.start_min) && m.grams >= 70.0)
                .unwrap();
            sum += lunch.grams;
        }
        assert!((sum / n as f64 - 90.0).abs() < 1.0);
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let mut spec = MealDistributionSpec::training();
        spec.slots[1].start_hour = 4.0;
        assert!(matches!(spec.validate(), Err(Error::InvalidMealSpec(_))));
        let mut spec = MealDistributionSpec::training();
        spec.slots[0].cho_max = 10.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let mut tr = DisturbanceTrace::zeros(3, 5.0);
        tr.carbs[1] = 20.0;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_min,carbs_g\n0,0\n5,20\n10,0\n");
    }
}
