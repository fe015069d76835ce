use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Episode;

/// One labelled observation: what the learner saw and what the supervisor
/// would have done.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub episode: usize,
    pub step: usize,
    /// CGM reading, mg/dL.
    pub y: f64,
    /// Insulin applied to the plant at the previous step, mU/min.
    pub u_prev: f64,
    /// Carbohydrate at the end of the prediction horizon, g.
    pub d_hz: f64,
    /// Supervision action, mU/min.
    pub label: f64,
}

/// Append-only training set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    examples: Vec<TrainingExample>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn push(&mut self, e: TrainingExample) -> Result<()> {
        if !(e.y.is_finite() && e.u_prev.is_finite() && e.d_hz.is_finite() && e.label.is_finite()) {
            return Err(Error::Shape(format!("non-finite training example {e:?}")));
        }
        if let Some(last) = self.examples.last() {
            let ordered = e.episode > last.episode || (e.episode == last.episode && e.step > last.step);
            if !ordered {
                return Err(Error::Shape(format!(
                    "examples must arrive in episode/step order: ({}, {}) after ({}, {})",
                    e.episode, e.step, last.episode, last.step
                )));
            }
        }
        self.examples.push(e);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[TrainingExample] {
        &self.examples
    }

    /// Examples grouped into episodes, inputs ordered as the network expects.
    pub fn episodes(&self) -> Vec<Episode> {
        let mut out: Vec<Episode> = Vec::new();
        let mut current = None;
        for e in &self.examples {
            if current != Some(e.episode) {
                out.push(Episode::default());
                current = Some(e.episode);
            }
            let ep = out.last_mut().expect("pushed above");
            ep.inputs.push([e.u_prev, e.y, e.d_hz]);
            ep.labels.push(e.label);
        }
        out
    }

    /// CSV with header `episode,step,y,u_prev,d_hz,label`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for e in &self.examples {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut ds = Dataset::new();
        for row in rdr.deserialize() {
            ds.push(row?)?;
        }
        Ok(ds)
    }
}
