//! Acquisition functions over a Student-t (or Gaussian) posterior and the
//! EI/CBM alternation used by the tuner.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfTag {
    Ei,
    Cbm,
}

impl AfTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            AfTag::Ei => "ei",
            AfTag::Cbm => "cbm",
        }
    }
}

/// Standard-t density and distribution function at `z`; Gaussian for infinite `dof`.
fn std_t(z: f64, dof: f64) -> (f64, f64) {
    if dof.is_infinite() {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        (n.pdf(z), n.cdf(z))
    } else {
        let t = StudentsT::new(0.0, 1.0, dof).expect("dof checked by caller");
        (t.pdf(z), t.cdf(z))
    }
}

/// Expected improvement below `y_best` when the objective is `mean + std·T`,
/// `T` a standard t variable with `dof > 1` degrees of freedom.
pub fn ei(mean: f64, std: f64, dof: f64, y_best: f64) -> f64 {
    assert!(dof > 1.0, "expected improvement needs dof > 1, got {dof}");
    let gain = y_best - mean;
    if std <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / std;
    let (pdf, cdf) = std_t(z, dof);
    let spread = if dof.is_infinite() { 1.0 } else { dof / (dof - 1.0) * (1.0 + z * z / dof) };
    (std * spread * pdf + gain * cdf).max(0.0)
}

/// Confidence-bound score; larger is better.
pub fn cbm(mean: f64, std: f64, beta: f64, f_star: f64) -> f64 {
    std * beta.sqrt() + (f_star - mean)
}

/// One evaluation made while the two acquisition functions alternate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfStep {
    pub af: AfTag,
    pub best_before: f64,
    pub best_after: f64,
}

/// The acquisition function whose picks lowered the running best the most in
/// total; ties go to EI. `None` while fewer than `max_af` steps are recorded.
pub fn select_af(history: &[AfStep], max_af: usize) -> Option<AfTag> {
    if history.len() < max_af {
        return None;
    }
    let gain = |tag: AfTag| -> f64 {
        history[..max_af]
            .iter()
            .filter(|s| s.af == tag)
            .map(|s| (s.best_before - s.best_after).max(0.0))
            .sum()
    };
    Some(if gain(AfTag::Cbm) > gain(AfTag::Ei) { AfTag::Cbm } else { AfTag::Ei })
}

/// Alternates EI and CBM for `max_af` evaluations, then settles on one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfSchedule {
    max_af: usize,
    history: Vec<AfStep>,
    chosen: Option<AfTag>,
}

impl AfSchedule {
    pub fn new(max_af: usize) -> Self {
        let chosen = (max_af == 0).then_some(AfTag::Ei);
        Self { max_af, history: Vec::new(), chosen }
    }

    pub fn current(&self) -> AfTag {
        self.chosen.unwrap_or(if self.history.len() % 2 == 0 { AfTag::Ei } else { AfTag::Cbm })
    }

    pub fn record(&mut self, step: AfStep) {
        if self.chosen.is_some() {
            return;
        }
        self.history.push(step);
        self.chosen = select_af(&self.history, self.max_af);
    }

    pub fn chosen(&self) -> Option<AfTag> {
        self.chosen
    }

    pub fn history(&self) -> &[AfStep] {
        &self.history
    }
}
