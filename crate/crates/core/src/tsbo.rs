//! Two-stage Bayesian optimisation over hyper-rectangle centres.
//!
//! Fast exploration repeatedly splits the chosen rectangle into `2^d`
//! children until the incumbent stops moving; pure exploitation then shrinks
//! the box around the incumbent and refines it with `3^d` splits. All search
//! geometry lives in the unit cube of the outer [`BoxSpace`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{cbm, ei, AfSchedule, AfStep, AfTag};
use crate::surrogate::{FitConfig, ObservationSet, SurrogateError, SurrogateKind, SurrogateModel};
use crate::tuning::{call, BoxedError, ObjectiveFailure, Stage, TuningResult};

#[derive(Debug, Error)]
pub enum TsboError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("point {point:?} outside bounds in dimension {dim}")]
    OutOfBounds { point: Vec<f64>, dim: usize },
    #[error("shrunk space has zero width in dimension {0}")]
    DegenerateShrink(usize),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Objective(Box<ObjectiveFailure>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn forward(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    fn inverse(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => 10f64.powf(v),
        }
    }
}

/// Axis-aligned search box in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    scale: Vec<Scale>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    scale: Vec<Scale>,
}

impl TryFrom<RawBox> for BoxSpace {
    type Error = TsboError;
    fn try_from(r: RawBox) -> Result<Self, TsboError> {
        BoxSpace::new(r.lower, r.upper, r.scale)
    }
}

impl BoxSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, scale: Vec<Scale>) -> Result<Self, TsboError> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != scale.len() {
            return Err(TsboError::Space("bounds and scales must have the same nonzero length".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(TsboError::Space(format!("dimension {i}: need finite lower < upper")));
            }
            if scale[i] == Scale::Log10 && lower[i] <= 0.0 {
                return Err(TsboError::Space(format!("dimension {i}: log scale needs a positive lower bound")));
            }
        }
        Ok(Self { lower, upper, scale })
    }

    /// `dim` log-scaled dimensions spanning `[lower, upper]`.
    pub fn log_uniform(dim: usize, lower: f64, upper: f64) -> Result<Self, TsboError> {
        Self::new(vec![lower; dim], vec![upper; dim], vec![Scale::Log10; dim])
    }

    /// The default process-noise box: three dimensions from 1e-10 to 1, log scaled.
    pub fn process_noise() -> Self {
        Self::log_uniform(3, 1e-10, 1.0).expect("valid default bounds")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn scale(&self) -> &[Scale] {
        &self.scale
    }

    pub fn normalize(&self, q: &[f64]) -> Result<Vec<f64>, TsboError> {
        if q.len() != self.dim() {
            return Err(TsboError::Space(format!("point has {} dimensions, space has {}", q.len(), self.dim())));
        }
        (0..self.dim())
            .map(|i| {
                if !(q[i] >= self.lower[i] && q[i] <= self.upper[i]) {
                    return Err(TsboError::OutOfBounds { point: q.to_vec(), dim: i });
                }
                let s = self.scale[i];
                let (lo, hi) = (s.forward(self.lower[i]), s.forward(self.upper[i]));
                Ok(((s.forward(q[i]) - lo) / (hi - lo)).clamp(0.0, 1.0))
            })
            .collect()
    }

    /// Map a unit-cube point back to physical units; coordinates are clamped to the cube.
    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let s = self.scale[i];
                let (lo, hi) = (s.forward(self.lower[i]), s.forward(self.upper[i]));
                s.inverse(lo + u[i].clamp(0.0, 1.0) * (hi - lo)).clamp(self.lower[i], self.upper[i])
            })
            .collect()
    }

    /// Volume measured in the scaled coordinates.
    pub fn volume(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.scale[i].forward(self.upper[i]) - self.scale[i].forward(self.lower[i]))
            .product()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dim() && q.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

/// A box in normalised coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HyperRect {
    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    /// Split into `parts^d` equal children on a regular grid.
    pub fn subdivide(&self, parts: usize) -> Vec<HyperRect> {
        let d = self.lower.len();
        let total = parts.pow(d as u32);
        (0..total)
            .map(|index| {
                let mut rest = index;
                let mut lower = Vec::with_capacity(d);
                let mut upper = Vec::with_capacity(d);
                for i in 0..d {
                    let k = rest % parts;
                    rest /= parts;
                    let width = self.upper[i] - self.lower[i];
                    lower.push(self.lower[i] + width * k as f64 / parts as f64);
                    upper.push(if k + 1 == parts {
                        self.upper[i]
                    } else {
                        self.lower[i] + width * (k + 1) as f64 / parts as f64
                    });
                }
                HyperRect { lower, upper }
            })
            .collect()
    }
}

/// Counts consecutive incumbent moves shorter than a threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConvergenceCounter {
    pub n: usize,
}

impl ConvergenceCounter {
    pub fn update(&mut self, previous_best: &[f64], new_best: &[f64], threshold: f64) -> usize {
        let dist = previous_best
            .iter()
            .zip(new_best)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.n = if dist < threshold { self.n + 1 } else { 0 };
        self.n
    }
}

/// Box `[(1-α)q*, (1+α)q*]` per dimension, intersected with `outer`.
pub fn shrink_space(q_star: &[f64], alpha: f64, outer: &BoxSpace) -> Result<BoxSpace, TsboError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TsboError::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    if !outer.contains(q_star) {
        return Err(TsboError::OutOfBounds { point: q_star.to_vec(), dim: 0 });
    }
    let mut lower = Vec::with_capacity(outer.dim());
    let mut upper = Vec::with_capacity(outer.dim());
    for (i, q) in q_star.iter().enumerate() {
        let (a, b) = ((1.0 - alpha) * q, (1.0 + alpha) * q);
        let lo = a.min(b).max(outer.lower[i]);
        let hi = a.max(b).min(outer.upper[i]);
        if !(hi > lo) {
            return Err(TsboError::DegenerateShrink(i));
        }
        lower.push(lo);
        upper.push(hi);
    }
    BoxSpace::new(lower, upper, outer.scale.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsboConfig {
    pub max_fe: usize,
    pub max_pe: usize,
    pub max_sm: usize,
    pub max_af: usize,
    /// Convergence radius relative to the norm of the normalised incumbent.
    pub tr_fe: f64,
    pub beta: f64,
    pub alpha: f64,
    pub dof: f64,
    pub surrogate: SurrogateKind,
    /// Hard cap on fast-exploration evaluations.
    pub max_fast_evals: usize,
    pub seed: u64,
    pub fit_starts: usize,
}

impl Default for TsboConfig {
    fn default() -> Self {
        Self {
            max_fe: 15,
            max_pe: 40,
            max_sm: 38,
            max_af: 6,
            tr_fe: 0.01,
            beta: 0.01,
            alpha: 0.15,
            dof: 15.0,
            surrogate: SurrogateKind::StudentT,
            max_fast_evals: 200,
            seed: 0,
            fit_starts: 5,
        }
    }
}

impl TsboConfig {
    pub fn validate(&self) -> Result<(), TsboError> {
        let bad = |m: String| Err(TsboError::Config(m));
        if self.max_sm > self.max_pe {
            return bad(format!("max_sm {} exceeds max_pe {}", self.max_sm, self.max_pe));
        }
        if self.max_fe == 0 || self.max_fast_evals == 0 {
            return bad("max_fe and max_fast_evals must be positive".into());
        }
        if !(self.tr_fe > 0.0 && self.beta >= 0.0) {
            return bad("tr_fe must be positive and beta nonnegative".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.surrogate == SurrogateKind::StudentT && !(self.dof > 2.0) {
            return bad(format!("dof {} must exceed 2", self.dof));
        }
        Ok(())
    }

    fn fit_config(&self, iteration: usize) -> FitConfig {
        FitConfig { starts: self.fit_starts, seed: self.seed.wrapping_mul(1_000_003).wrapping_add(iteration as u64), ..FitConfig::default() }
    }
}

/// Search state carried from fast exploration into pure exploitation.
#[derive(Debug, Clone)]
pub struct TsboState {
    pub space: BoxSpace,
    pub cfg: TsboConfig,
    pub observations: ObservationSet,
    pub model: SurrogateModel,
    /// Live candidate rectangles in normalised coordinates.
    pub rects: Vec<HyperRect>,
    pub schedule: AfSchedule,
    pub counter: ConvergenceCounter,
    pub result: TuningResult,
    /// Normalised incumbent.
    pub best_u: Vec<f64>,
    pub subdivisions: usize,
}

impl TsboState {
    fn evaluate<F, E>(&mut self, objective: &mut F, u: Vec<f64>, stage: Stage, af: Option<AfTag>) -> Result<f64, TsboError>
    where
        F: FnMut(&[f64]) -> Result<f64, E>,
        E: Into<BoxedError>,
    {
        let q = self.space.denormalize(&u);
        let j = call(objective, &q).map_err(|source| {
            TsboError::Objective(Box::new(ObjectiveFailure { source, partial: self.result.clone() }))
        })?;
        if j < self.result.best_j {
            self.best_u = u.clone();
        }
        self.result.record(stage, af, q, j);
        self.observations.push(u, j)?;
        Ok(j)
    }

    fn refit(&mut self) -> Result<(), TsboError> {
        let cfg = self.cfg.fit_config(self.result.evaluations());
        self.model = SurrogateModel::fit(&self.observations, self.cfg.surrogate, self.cfg.dof, &cfg)?;
        self.result.refits += 1;
        Ok(())
    }

    /// Index of the unevaluated candidate with the largest acquisition value.
    fn pick(&self, af: AfTag) -> Option<usize> {
        let best = self.result.best_j;
        let dof = self.model.tail_dof();
        let mut choice: Option<(usize, f64)> = None;
        for (i, rect) in self.rects.iter().enumerate() {
            let c = rect.center();
            if self.observations.contains(&c) {
                continue;
            }
            let post = self.model.posterior(&c);
            let score = match af {
                AfTag::Ei => ei(post.mean, post.std(), dof, best),
                AfTag::Cbm => cbm(post.mean, post.std(), self.cfg.beta, best),
            };
            if choice.map_or(true, |(_, s)| score > s) {
                choice = Some((i, score));
            }
        }
        choice.map(|(i, _)| i)
    }

    fn split(&mut self, index: usize, parts: usize) {
        let rect = self.rects.remove(index);
        self.rects.extend(rect.subdivide(parts));
        self.subdivisions += 1;
    }

    /// Select, evaluate and split one candidate. Returns false when no
    /// candidate is left.
    fn step<F, E>(&mut self, objective: &mut F, stage: Stage, parts: usize, refit: bool) -> Result<bool, TsboError>
    where
        F: FnMut(&[f64]) -> Result<f64, E>,
        E: Into<BoxedError>,
    {
        let af = self.schedule.current();
        let Some(index) = self.pick(af) else { return Ok(false) };
        let before_best = self.result.best_j;
        let before_u = self.best_u.clone();
        let u = self.rects[index].center();
        self.evaluate(objective, u, stage, Some(af))?;
        self.schedule.record(AfStep { af, best_before: before_best, best_after: self.result.best_j });
        self.result.selected_af = self.schedule.chosen();
        if stage == Stage::FastExploration {
            let norm = self.best_u.iter().map(|v| v * v).sum::<f64>().sqrt();
            self.counter.update(&before_u, &self.best_u, self.cfg.tr_fe * norm);
        }
        if refit {
            self.refit()?;
        }
        self.split(index, parts);
        Ok(true)
    }

    pub fn best_q(&self) -> Vec<f64> {
        self.space.denormalize(&self.best_u)
    }
}

/// First stage: start at the cube centre and split `2^d` until the incumbent
/// has moved less than the threshold `max_fe` times in a row.
pub fn fast_exploration<F, E>(objective: &mut F, space: &BoxSpace, cfg: &TsboConfig) -> Result<TsboState, TsboError>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: Into<BoxedError>,
{
    cfg.validate()?;
    let d = space.dim();
    let root = HyperRect::unit(d);
    let center = root.center();
    let q0 = space.denormalize(&center);
    let mut result = TuningResult::empty();
    let j0 = call(objective, &q0).map_err(|source| {
        TsboError::Objective(Box::new(ObjectiveFailure { source, partial: result.clone() }))
    })?;
    result.record(Stage::FastExploration, None, q0, j0);
    let mut observations = ObservationSet::new();
    observations.push(center.clone(), j0)?;
    let model = SurrogateModel::fit(&observations, cfg.surrogate, cfg.dof, &cfg.fit_config(1))?;
    result.refits = 1;

    let mut state = TsboState {
        space: space.clone(),
        cfg: cfg.clone(),
        observations,
        model,
        rects: vec![root],
        schedule: AfSchedule::new(cfg.max_af),
        counter: ConvergenceCounter::default(),
        result,
        best_u: center,
        subdivisions: 0,
    };
    state.split(0, 2);
    while state.counter.n < cfg.max_fe && state.result.evaluations() < cfg.max_fast_evals {
        if !state.step(objective, Stage::FastExploration, 2, true)? {
            break;
        }
    }
    Ok(state)
}

/// Second stage: `3^d` refinement of `shrunk` (given in physical units of the
/// outer space) while the global evaluation count stays within `max_pe`.
pub fn pure_exploitation<F, E>(objective: &mut F, mut state: TsboState, shrunk: &BoxSpace) -> Result<TsboState, TsboError>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: Into<BoxedError>,
{
    let lower = state.space.normalize(shrunk.lower())?;
    let upper = state.space.normalize(shrunk.upper())?;
    state.rects = HyperRect { lower, upper }.subdivide(3);
    state.subdivisions += 1;
    let (max_pe, max_sm) = (state.cfg.max_pe, state.cfg.max_sm);
    while state.result.evaluations() <= max_pe {
        let refit = state.result.evaluations() < max_sm;
        if !state.step(objective, Stage::PureExploitation, 3, refit)? {
            break;
        }
    }
    Ok(state)
}

/// Both stages: fast exploration, shrink around the incumbent, pure exploitation.
pub fn tune<F, E>(mut objective: F, space: &BoxSpace, cfg: &TsboConfig) -> Result<TuningResult, TsboError>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: Into<BoxedError>,
{
    let state = fast_exploration(&mut objective, space, cfg)?;
    let shrunk = shrink_space(&state.best_q(), cfg.alpha, space)?;
    let state = pure_exploitation(&mut objective, state, &shrunk)?;
    Ok(state.result)
}
