//! Gaussian-process and Student-t-process regression over unit-cube points.
//!
//! Both processes share an ARD Matérn 5/2 kernel. The signal variance is
//! profiled out of the marginal likelihood in closed form; length scales are
//! found by multi-start Nelder-Mead in log space.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub const HYPER_MIN: f64 = 1e-3;
pub const HYPER_MAX: f64 = 1e3;
/// Diagonal jitter relative to the signal variance.
pub const NOISE_FLOOR: f64 = 1e-6;
/// Two points closer than this (max-norm) are the same point.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("no observations to fit")]
    NoObservations,
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("point {0:?} is outside the unit cube")]
    OutsideCube(Vec<f64>),
    #[error("point {0:?} was already observed")]
    Duplicate(Vec<f64>),
    #[error("observed value {0} is not finite")]
    NonFinite(f64),
    #[error("degrees of freedom {0} must exceed 2")]
    Dof(f64),
    #[error("marginal likelihood is not finite at any start")]
    FitFailed,
    #[error("gram matrix is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Student-t process.
    #[serde(rename = "tsp")]
    StudentT,
    /// Gaussian process.
    #[serde(rename = "gp")]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub signal_std: f64,
    pub length_scales: Vec<f64>,
}

impl KernelHyper {
    pub fn isotropic(signal_std: f64, length_scale: f64, dim: usize) -> Self {
        Self { signal_std, length_scales: vec![length_scale; dim] }
    }
}

/// ARD Matérn 5/2 kernel.
pub fn matern52(a: &[f64], b: &[f64], hyper: &KernelHyper) -> f64 {
    hyper.signal_std * hyper.signal_std * matern52_unit(a, b, &hyper.length_scales)
}

fn matern52_unit(a: &[f64], b: &[f64], length_scales: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(length_scales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    let s5r = (5.0 * r2).sqrt();
    (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
}

/// Evaluated points and their objective values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<(), SurrogateError> {
        if let Some(first) = self.points.first() {
            if first.len() != point.len() {
                return Err(SurrogateError::Dimension { expected: first.len(), got: point.len() });
            }
        }
        if point.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(SurrogateError::OutsideCube(point));
        }
        if !value.is_finite() {
            return Err(SurrogateError::NonFinite(value));
        }
        if self.contains(&point) {
            return Err(SurrogateError::Duplicate(point));
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.points
            .iter()
            .any(|p| p.iter().zip(point).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL))
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub starts: usize,
    pub max_iters: u64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { starts: 5, max_iters: 400, seed: 0 }
    }
}

fn factor(mut m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, SurrogateError> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-9 * scale;
    while jitter <= 1e-3 * scale {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(SurrogateError::NotPositiveDefinite)
}

/// Unit-variance gram matrix with the relative noise floor on the diagonal.
fn correlation(points: &[Vec<f64>], length_scales: &[f64]) -> DMatrix<f64> {
    let n = points.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + NOISE_FLOOR;
        for j in 0..i {
            let v = matern52_unit(&points[i], &points[j], length_scales);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Marginal-likelihood terms for fixed length scales with the signal
/// variance profiled out.
struct Profile {
    chol: Cholesky<f64, Dyn>,
    variance: f64,
    nlml: f64,
}

fn profile(
    kind: SurrogateKind,
    dof: f64,
    points: &[Vec<f64>],
    y: &DVector<f64>,
    length_scales: &[f64],
) -> Result<Profile, SurrogateError> {
    let n = y.len() as f64;
    let chol = factor(correlation(points, length_scales))?;
    let b = y.dot(&chol.solve(y));
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let (lo, hi) = (HYPER_MIN * HYPER_MIN, HYPER_MAX * HYPER_MAX);
    let (variance, nlml) = match kind {
        SurrogateKind::Gaussian => {
            let s = (b / n).clamp(lo, hi);
            (s, 0.5 * b / s + 0.5 * n * s.ln() + 0.5 * log_det + 0.5 * n * (2.0 * std::f64::consts::PI).ln())
        }
        SurrogateKind::StudentT => {
            let s = (dof * b / (n * (dof - 2.0))).clamp(lo, hi);
            let nlml = ln_gamma(dof / 2.0) - ln_gamma((dof + n) / 2.0)
                + 0.5 * n * ((dof - 2.0) * std::f64::consts::PI).ln()
                + 0.5 * n * s.ln()
                + 0.5 * log_det
                + 0.5 * (dof + n) * (b / (s * (dof - 2.0))).ln_1p();
            (s, nlml)
        }
    };
    Ok(Profile { chol: scale_factor(chol, variance), variance, nlml })
}

/// Cholesky of `s·R` from the Cholesky of `R`.
fn scale_factor(chol: Cholesky<f64, Dyn>, s: f64) -> Cholesky<f64, Dyn> {
    let l = chol.unpack() * s.sqrt();
    Cholesky::pack_dirty(l)
}

struct Nlml<'a> {
    kind: SurrogateKind,
    dof: f64,
    points: &'a [Vec<f64>],
    y: &'a DVector<f64>,
}

fn clamp_log(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| t.exp().clamp(HYPER_MIN, HYPER_MAX)).collect()
}

impl CostFunction for Nlml<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let value = profile(self.kind, self.dof, self.points, self.y, &clamp_log(theta))
            .map(|p| p.nlml)
            .unwrap_or(f64::INFINITY);
        Ok(if value.is_finite() { value } else { f64::INFINITY })
    }
}

/// A fitted regression model; immutable once built.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub hyper: KernelHyper,
    /// Degrees of freedom, Student-t only.
    pub dof: Option<f64>,
    pub noise_floor: f64,
    pub offset: f64,
    pub nlml: f64,
    observations: ObservationSet,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    quad_form: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

impl SurrogateModel {
    /// Train hyperparameters by minimising the negative log marginal likelihood.
    pub fn fit(obs: &ObservationSet, kind: SurrogateKind, dof: f64, cfg: &FitConfig) -> Result<Self, SurrogateError> {
        let dim = obs.dim().ok_or(SurrogateError::NoObservations)?;
        if kind == SurrogateKind::StudentT && !(dof > 2.0) {
            return Err(SurrogateError::Dof(dof));
        }
        let offset = obs.values.iter().sum::<f64>() / obs.len() as f64;
        let y = DVector::from_iterator(obs.len(), obs.values.iter().map(|v| v - offset));
        let problem = Nlml { kind, dof, points: &obs.points, y: &y };

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in 0..cfg.starts.max(1) {
            let x0: Vec<f64> = if start == 0 {
                vec![0.3_f64.ln(); dim]
            } else {
                (0..dim).map(|_| rng.gen_range(0.02_f64.ln()..2.0_f64.ln())).collect()
            };
            let Some((cost, theta)) = nelder_mead(&problem, x0, cfg.max_iters) else { continue };
            if cost.is_finite() && best.as_ref().map_or(true, |(c, _)| cost < *c) {
                best = Some((cost, theta));
            }
        }
        let (_, theta) = best.ok_or(SurrogateError::FitFailed)?;
        Self::with_length_scales(obs, kind, dof, clamp_log(&theta))
    }

    /// Build the model at given length scales, profiling only the signal variance.
    pub fn with_length_scales(
        obs: &ObservationSet,
        kind: SurrogateKind,
        dof: f64,
        length_scales: Vec<f64>,
    ) -> Result<Self, SurrogateError> {
        let dim = obs.dim().ok_or(SurrogateError::NoObservations)?;
        if length_scales.len() != dim {
            return Err(SurrogateError::Dimension { expected: dim, got: length_scales.len() });
        }
        if kind == SurrogateKind::StudentT && !(dof > 2.0) {
            return Err(SurrogateError::Dof(dof));
        }
        let offset = obs.values.iter().sum::<f64>() / obs.len() as f64;
        let y = DVector::from_iterator(obs.len(), obs.values.iter().map(|v| v - offset));
        let p = profile(kind, dof, &obs.points, &y, &length_scales)?;
        if !p.nlml.is_finite() {
            return Err(SurrogateError::FitFailed);
        }
        let weights = p.chol.solve(&y);
        let quad_form = y.dot(&weights);
        Ok(Self {
            kind,
            hyper: KernelHyper { signal_std: p.variance.sqrt(), length_scales },
            dof: (kind == SurrogateKind::StudentT).then_some(dof),
            noise_floor: NOISE_FLOOR * p.variance,
            offset,
            nlml: p.nlml,
            observations: obs.clone(),
            chol: p.chol,
            weights,
            quad_form,
        })
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.observations
    }

    /// Tail degrees of freedom used when scoring candidates; infinite for the GP.
    pub fn tail_dof(&self) -> f64 {
        self.dof.unwrap_or(f64::INFINITY)
    }

    /// Ratio applied to the Gaussian posterior variance.
    pub fn variance_scale(&self) -> f64 {
        match self.dof {
            Some(nu) => (nu + self.quad_form - 2.0) / (nu + self.observations.len() as f64 - 2.0),
            None => 1.0,
        }
    }

    pub fn posterior(&self, q: &[f64]) -> Posterior {
        let k = DVector::from_iterator(
            self.observations.len(),
            self.observations.points.iter().map(|p| matern52(q, p, &self.hyper)),
        );
        let mean = self.offset + k.dot(&self.weights);
        let v = self.chol.l_dirty().solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(k.len()));
        let prior = self.hyper.signal_std * self.hyper.signal_std;
        let gp_variance = (prior - v.norm_squared()).max(0.0);
        Posterior { mean, variance: (gp_variance * self.variance_scale()).max(0.0) }
    }

    pub fn dump(&self) -> SurrogateDump {
        SurrogateDump {
            kind: self.kind,
            signal_std: self.hyper.signal_std,
            length_scales: self.hyper.length_scales.clone(),
            dof: self.dof,
            noise_floor: self.noise_floor,
            offset: self.offset,
            nlml: self.nlml,
            points: self.observations.points.clone(),
            values: self.observations.values.clone(),
        }
    }
}

fn nelder_mead(problem: &Nlml<'_>, x0: Vec<f64>, max_iters: u64) -> Option<(f64, Vec<f64>)> {
    let mut simplex = vec![x0.clone()];
    for i in 0..x0.len() {
        let mut x = x0.clone();
        x[i] += 0.7;
        simplex.push(x);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-9).ok()?;
    let result = Executor::new(Nlml { ..*problem }, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .ok()?;
    let state = result.state();
    let theta = state.best_param.clone()?;
    Some((state.best_cost, theta))
}

/// Serializable snapshot of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDump {
    pub kind: SurrogateKind,
    pub signal_std: f64,
    pub length_scales: Vec<f64>,
    pub dof: Option<f64>,
    pub noise_floor: f64,
    pub offset: f64,
    pub nlml: f64,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl SurrogateDump {
    /// Rebuild the model from the stored hyperparameters without refitting.
    pub fn restore(&self) -> Result<SurrogateModel, SurrogateError> {
        let mut obs = ObservationSet::new();
        for (p, v) in self.points.iter().zip(&self.values) {
            obs.push(p.clone(), *v)?;
        }
        SurrogateModel::with_length_scales(&obs, self.kind, self.dof.unwrap_or(f64::INFINITY), self.length_scales.clone())
    }
}
