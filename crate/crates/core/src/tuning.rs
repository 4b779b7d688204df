//! Result of a tuning run, shared by the Bayesian optimiser and the GA.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::AfTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FastExploration,
    PureExploitation,
    Genetic,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::FastExploration => "fast_exploration",
            Stage::PureExploitation => "pure_exploitation",
            Stage::Genetic => "genetic",
        }
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub stage: Stage,
    pub af: Option<AfTag>,
    /// Physical parameter values.
    pub q: Vec<f64>,
    pub j: f64,
    pub best_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_q: Vec<f64>,
    pub best_j: f64,
    pub trace: Vec<TraceEntry>,
    pub stage_counts: BTreeMap<Stage, usize>,
    /// Surrogate refits (zero for the GA).
    pub refits: usize,
    pub selected_af: Option<AfTag>,
}

#[derive(Debug, Error)]
#[error("objective failed after {} evaluations: {source}", partial.trace.len())]
pub struct ObjectiveFailure {
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
    pub partial: TuningResult,
}

impl TuningResult {
    pub fn empty() -> Self {
        Self {
            best_q: Vec::new(),
            best_j: f64::INFINITY,
            trace: Vec::new(),
            stage_counts: BTreeMap::new(),
            refits: 0,
            selected_af: None,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    /// Append an evaluation, keeping the incumbent up to date.
    pub fn record(&mut self, stage: Stage, af: Option<AfTag>, q: Vec<f64>, j: f64) {
        if j < self.best_j {
            self.best_j = j;
            self.best_q = q.clone();
        }
        *self.stage_counts.entry(stage).or_default() += 1;
        self.trace.push(TraceEntry { iter: self.trace.len(), stage, af, q, j, best_j: self.best_j });
    }

    /// CSV with columns `iter, stage, af, q1..qd, J, best_J`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let dim = self.trace.first().map_or(self.best_q.len(), |e| e.q.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string(), "stage".into(), "af".into()];
        header.extend((1..=dim).map(|i| format!("q{i}")));
        header.extend(["J".to_string(), "best_J".into()]);
        w.write_record(&header)?;
        for e in &self.trace {
            let mut row = vec![e.iter.to_string(), e.stage.as_str().into(), e.af.map_or("", |a| a.as_str()).into()];
            row.extend(e.q.iter().map(|v| format!("{v:e}")));
            row.extend([format!("{:e}", e.j), format!("{:e}", e.best_j)]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub type BoxedError = Box<dyn std::error::Error + Send + Sync>;

/// Evaluate `objective`, turning failures and non-finite values into boxed errors.
pub(crate) fn call<F, E>(objective: &mut F, q: &[f64]) -> Result<f64, BoxedError>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: Into<BoxedError>,
{
    let j = objective(q).map_err(Into::into)?;
    if j.is_finite() {
        Ok(j)
    } else {
        Err(format!("objective returned {j} at {q:?}").into())
    }
}
