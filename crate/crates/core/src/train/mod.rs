//! Training loops that use behavioural characterizations: a trust-region
//! policy-gradient learner and novelty-seeking evolution strategies.

mod es;
mod trust_region;

pub use es::{
    centered_ranks, terminal_state_bc, train_es, train_es_traced, BcKind, Behaviour, EsConfig,
    EsRun,
};
pub use trust_region::{
    behavioural_constraint, max_tv_divergence, train_trust_region, Constraint, ConstraintKind,
    TrustRegionConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::format_number;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_return: f64,
    /// Trust region: 1 when the constraint stopped the updates. ES: novelty of the updated member.
    pub aux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn new(seed: u64) -> Self {
        LearningCurve {
            seed,
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, mean_return: f64, aux: f64) {
        self.points.push(CurvePoint {
            iteration: self.points.len(),
            mean_return,
            aux,
        });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_return).collect()
    }

    /// Mean return over all iterations.
    pub fn area(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.mean_return).sum::<f64>() / self.points.len() as f64
    }

    pub fn final_return(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean_return)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "mean_return", "aux"])?;
        for p in &self.points {
            w.write_record([
                p.iteration.to_string(),
                format_number(p.mean_return),
                format_number(p.aux),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| crate::Error::Parse(e.to_string()))
    }
}
