//! Unscented Kalman filter (Merwe scaled sigma points) for sideslip estimation.
//!
//! The filter core is generic over the state and measurement dimension through
//! [`StateSpaceModel`]; [`VehicleProcess`] plugs in the single-track model with
//! state `(vx, vy, yaw_rate)` and measurement `(vx, ay, yaw_rate)`.

use std::io::Write;

use nalgebra::{Cholesky, Const, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Manoeuvre;
use crate::vehicle::{ControlInput, Measurement, VehicleError, VehicleModel, VehicleParams, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UkfError {
    #[error("covariance is not positive definite after repair")]
    NotPositiveDefinite,
    #[error("filter diverged at sample {sample}")]
    Diverged { sample: usize },
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("manoeuvre dt {manoeuvre} s does not match filter dt {filter} s")]
    DtMismatch { manoeuvre: f64, filter: f64 },
    #[error("manoeuvre has no samples")]
    Empty,
}

/// Sigma-point scaling and filter step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub dt: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self { alpha: 1e-3, beta: 2.0, kappa: 0.0, dt: 0.01 }
    }
}

impl UkfConfig {
    pub fn lambda(&self, n: usize) -> f64 {
        self.alpha * self.alpha * (n as f64 + self.kappa) - n as f64
    }

    pub fn validate(&self, n: usize) -> Result<(), UkfError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(UkfError::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(UkfError::Config(format!("dt {} must be positive", self.dt)));
        }
        if !(n as f64 + self.lambda(n) > 0.0) {
            return Err(UkfError::Config("n + lambda must be positive".into()));
        }
        Ok(())
    }
}

/// Diagonal process and observation noise, in squared SI units per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub process_noise_diag: [f64; 3],
    pub observation_noise_diag: [f64; 3],
}

impl NoiseConfig {
    pub fn new(q: [f64; 3], r: [f64; 3]) -> Self {
        Self { process_noise_diag: q, observation_noise_diag: r }
    }

    pub fn validate(&self) -> Result<(), UkfError> {
        let all = self.process_noise_diag.iter().chain(&self.observation_noise_diag);
        for v in all {
            if !(v.is_finite() && *v > 0.0) {
                return Err(UkfError::Config(format!("noise entry {v} must be finite and positive")));
            }
        }
        Ok(())
    }

    /// Observation noise matching the default sensor noise of the synthetic testbed.
    pub fn default_observation() -> [f64; 3] {
        let s = crate::scenario::SensorNoise::default();
        [s.vx * s.vx, s.ay * s.ay, s.yaw_rate * s.yaw_rate]
    }
}

/// Process and measurement functions driven by the filter.
pub trait StateSpaceModel<const N: usize, const M: usize> {
    type Input;
    type Error;

    fn propagate(&self, x: &SVector<f64, N>, u: &Self::Input, dt: f64) -> Result<SVector<f64, N>, Self::Error>;
    fn observe(&self, x: &SVector<f64, N>, u: &Self::Input) -> Result<SVector<f64, M>, Self::Error>;
}

/// The single-track model as a filter process model.
#[derive(Debug, Clone, Copy)]
pub struct VehicleProcess {
    pub model: VehicleModel,
}

impl VehicleProcess {
    pub fn new(params: VehicleParams) -> Self {
        Self { model: VehicleModel::nominal(params) }
    }
}

fn to_state(x: &Vector3<f64>) -> VehicleState {
    VehicleState::new(x[0], x[1], x[2])
}

impl StateSpaceModel<3, 3> for VehicleProcess {
    type Input = ControlInput;
    type Error = VehicleError;

    fn propagate(&self, x: &Vector3<f64>, u: &ControlInput, dt: f64) -> Result<Vector3<f64>, VehicleError> {
        let s = self.model.step(&to_state(x), u, dt)?;
        Ok(Vector3::new(s.vx, s.vy, s.yaw_rate))
    }

    fn observe(&self, x: &Vector3<f64>, u: &ControlInput) -> Result<Vector3<f64>, VehicleError> {
        let m = self.model.measure(&to_state(x), u)?;
        Ok(Vector3::new(m.vx, m.ay, m.yaw_rate))
    }
}

/// A Gaussian belief over the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief<const N: usize> {
    pub mean: SVector<f64, N>,
    pub cov: SMatrix<f64, N, N>,
}

/// `2N + 1` sigma points with mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPoints<const N: usize> {
    pub points: Vec<SVector<f64, N>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

fn weights(n: usize, cfg: &UkfConfig) -> (Vec<f64>, Vec<f64>) {
    let lambda = cfg.lambda(n);
    let spread = n as f64 + lambda;
    let w = 0.5 / spread;
    let mut wm = vec![w; 2 * n + 1];
    let mut wc = vec![w; 2 * n + 1];
    wm[0] = lambda / spread;
    wc[0] = wm[0] + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    (wm, wc)
}

/// Symmetrise and factorise, adding escalating diagonal jitter on failure.
///
/// Jitter starts at `1e-9·max(diag)` and grows ×10 up to `1e-3·max(diag)`.
/// Returns the (possibly repaired) matrix and its factor.
pub fn factor_with_repair<const N: usize>(
    cov: &SMatrix<f64, N, N>,
) -> Result<(SMatrix<f64, N, N>, Cholesky<f64, Const<N>>), UkfError> {
    let sym = (cov + cov.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(UkfError::NotPositiveDefinite);
    }
    if let Some(chol) = Cholesky::new(sym) {
        return Ok((sym, chol));
    }
    let max_diag = sym.diagonal().max();
    if !(max_diag > 0.0) {
        return Err(UkfError::NotPositiveDefinite);
    }
    let mut factor = 1e-9;
    while factor <= 1e-3 * (1.0 + 1e-9) {
        let repaired = sym + SMatrix::<f64, N, N>::identity() * (factor * max_diag);
        if let Some(chol) = Cholesky::new(repaired) {
            return Ok((repaired, chol));
        }
        factor *= 10.0;
    }
    Err(UkfError::NotPositiveDefinite)
}

/// Merwe scaled sigma points of `(mean, cov)`.
pub fn sigma_points<const N: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    cfg: &UkfConfig,
) -> Result<SigmaPoints<N>, UkfError> {
    let (_, chol) = factor_with_repair(cov)?;
    let scale = (N as f64 + cfg.lambda(N)).sqrt();
    let l = chol.l();
    let mut points = Vec::with_capacity(2 * N + 1);
    points.push(*mean);
    for i in 0..N {
        points.push(mean + l.column(i) * scale);
    }
    for i in 0..N {
        points.push(mean - l.column(i) * scale);
    }
    let (mean_weights, cov_weights) = weights(N, cfg);
    Ok(SigmaPoints { points, mean_weights, cov_weights })
}

/// Weighted mean anchored at the central point.
///
/// Algebraically `Σ wᵢ yᵢ`; written as `y₀ + Σ wᵢ (yᵢ − y₀)` so the large
/// opposite-signed weights of small `alpha` do not cancel catastrophically.
pub fn weighted_mean<const D: usize>(values: &[SVector<f64, D>], mean_weights: &[f64]) -> SVector<f64, D> {
    let anchor = values[0];
    let n = (values.len() - 1) / 2;
    let mut acc = SVector::<f64, D>::zeros();
    for i in 1..=n {
        let pair = (values[i] - anchor) * mean_weights[i] + (values[i + n] - anchor) * mean_weights[i + n];
        acc += pair;
    }
    anchor + acc
}

fn cross_cov<const A: usize, const B: usize>(
    xs: &[SVector<f64, A>],
    x_mean: &SVector<f64, A>,
    ys: &[SVector<f64, B>],
    y_mean: &SVector<f64, B>,
    cov_weights: &[f64],
) -> SMatrix<f64, A, B> {
    let mut acc = SMatrix::<f64, A, B>::zeros();
    for ((x, y), w) in xs.iter().zip(ys).zip(cov_weights) {
        acc += (x - x_mean) * (y - y_mean).transpose() * *w;
    }
    acc
}

/// Weighted covariance of points about `mean`.
pub fn weighted_cov<const D: usize>(
    values: &[SVector<f64, D>],
    mean: &SVector<f64, D>,
    cov_weights: &[f64],
) -> SMatrix<f64, D, D> {
    let c = cross_cov(values, mean, values, mean, cov_weights);
    (c + c.transpose()) * 0.5
}

/// Time update: propagate sigma points and add `diag(q)`.
pub fn predict<const N: usize, const M: usize, P: StateSpaceModel<N, M>>(
    model: &P,
    prior: &Belief<N>,
    input: &P::Input,
    q: &SVector<f64, N>,
    cfg: &UkfConfig,
) -> Result<Belief<N>, UkfError> {
    let sp = sigma_points(&prior.mean, &prior.cov, cfg)?;
    let propagated = sp
        .points
        .iter()
        .map(|x| model.propagate(x, input, cfg.dt))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| UkfError::NotPositiveDefinite)?;
    let mean = weighted_mean(&propagated, &sp.mean_weights);
    let cov = weighted_cov(&propagated, &mean, &sp.cov_weights) + SMatrix::from_diagonal(q);
    check_belief(mean, cov)
}

/// Measurement update against `meas` with observation noise `diag(r)`.
///
/// Also returns the filter's measurement prediction.
pub fn update<const N: usize, const M: usize, P: StateSpaceModel<N, M>>(
    model: &P,
    predicted: &Belief<N>,
    input: &P::Input,
    meas: &SVector<f64, M>,
    r: &SVector<f64, M>,
    cfg: &UkfConfig,
) -> Result<(Belief<N>, SVector<f64, M>), UkfError> {
    if meas.iter().any(|v| !v.is_finite()) {
        return Err(UkfError::NotPositiveDefinite);
    }
    let sp = sigma_points(&predicted.mean, &predicted.cov, cfg)?;
    let observed = sp
        .points
        .iter()
        .map(|x| model.observe(x, input))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| UkfError::NotPositiveDefinite)?;
    let z_mean = weighted_mean(&observed, &sp.mean_weights);
    let x_mean = weighted_mean(&sp.points, &sp.mean_weights);
    let s = weighted_cov(&observed, &z_mean, &sp.cov_weights) + SMatrix::from_diagonal(r);
    let pxz = cross_cov(&sp.points, &x_mean, &observed, &z_mean, &sp.cov_weights);
    let (s, s_chol) = factor_with_repair(&s)?;
    // K = Pxz S⁻¹  ⇔  S Kᵀ = Pxzᵀ
    let gain = s_chol.solve(&pxz.transpose()).transpose();
    let mean = predicted.mean + gain * (meas - z_mean);
    let cov = predicted.cov - gain * s * gain.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    Ok((check_belief(mean, cov)?, z_mean))
}

fn check_belief<const N: usize>(mean: SVector<f64, N>, cov: SMatrix<f64, N, N>) -> Result<Belief<N>, UkfError> {
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(UkfError::NotPositiveDefinite);
    }
    let (cov, _) = factor_with_repair(&cov)?;
    Ok(Belief { mean, cov })
}

/// One predict–update cycle with a single input for both halves.
pub fn ukf_step<const N: usize, const M: usize, P: StateSpaceModel<N, M>>(
    model: &P,
    prior: &Belief<N>,
    input: &P::Input,
    meas: &SVector<f64, M>,
    q: &SVector<f64, N>,
    r: &SVector<f64, M>,
    cfg: &UkfConfig,
) -> Result<Belief<N>, UkfError> {
    let predicted = predict(model, prior, input, q, cfg)?;
    Ok(update(model, &predicted, input, meas, r, cfg)?.0)
}

/// Per-sample filter output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateTrace {
    pub t: Vec<f64>,
    pub states: Vec<VehicleState>,
    pub measurements: Vec<Measurement>,
    pub sideslip: Vec<f64>,
    pub cov_diag: Vec<[f64; 3]>,
}

impl EstimateTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with columns `t, vx_est, vy_est, yawrate_est, beta_est, p11, p22, p33`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "vx_est", "vy_est", "yawrate_est", "beta_est", "p11", "p22", "p33"])?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let p = &self.cov_diag[i];
            w.serialize((self.t[i], s.vx, s.vy, s.yaw_rate, self.sideslip[i], p[0], p[1], p[2]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initial covariance `diag(1, 1, 0.1)` in SI units.
pub fn default_initial_cov() -> SMatrix<f64, 3, 3> {
    SMatrix::from_diagonal(&Vector3::new(1.0, 1.0, 0.1))
}

/// Filter a whole manoeuvre with the nominal vehicle model.
pub fn run_filter(
    man: &Manoeuvre,
    noise: &NoiseConfig,
    cfg: &UkfConfig,
    params: &VehicleParams,
) -> Result<EstimateTrace, UkfError> {
    run_filter_with_initial_cov(man, noise, cfg, params, &default_initial_cov())
}

/// [`run_filter`] with an explicit initial covariance.
pub fn run_filter_with_initial_cov(
    man: &Manoeuvre,
    noise: &NoiseConfig,
    cfg: &UkfConfig,
    params: &VehicleParams,
    initial_cov: &SMatrix<f64, 3, 3>,
) -> Result<EstimateTrace, UkfError> {
    noise.validate()?;
    cfg.validate(3)?;
    if man.samples.is_empty() {
        return Err(UkfError::Empty);
    }
    if (man.dt - cfg.dt).abs() > 1e-9 {
        return Err(UkfError::DtMismatch { manoeuvre: man.dt, filter: cfg.dt });
    }
    let process = VehicleProcess::new(*params);
    let q = Vector3::from(noise.process_noise_diag);
    let r = Vector3::from(noise.observation_noise_diag);

    let n = man.samples.len();
    let mut trace = EstimateTrace {
        t: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        measurements: Vec::with_capacity(n),
        sideslip: Vec::with_capacity(n),
        cov_diag: Vec::with_capacity(n),
    };

    let first = &man.samples[0];
    let mut belief = Belief {
        mean: Vector3::new(first.meas_vx, 0.0, first.meas_yawrate),
        cov: *initial_cov,
    };
    for (k, sample) in man.samples.iter().enumerate() {
        let input = sample.input();
        let diverged = |_| UkfError::Diverged { sample: k };
        let predicted = if k == 0 {
            belief
        } else {
            let prev_input = man.samples[k - 1].input();
            predict(&process, &belief, &prev_input, &q, cfg).map_err(diverged)?
        };
        let z = Vector3::new(sample.meas_vx, sample.meas_ay, sample.meas_yawrate);
        let (posterior, _) = update(&process, &predicted, &input, &z, &r, cfg).map_err(diverged)?;
        belief = posterior;

        let state = to_state(&belief.mean);
        let est_meas = process.model.measure(&state, &input).map_err(|_| UkfError::Diverged { sample: k })?;
        let beta = crate::vehicle::sideslip(&state).map_err(|_| UkfError::Diverged { sample: k })?;
        trace.t.push(sample.t);
        trace.states.push(state);
        trace.measurements.push(est_meas);
        trace.sideslip.push(beta);
        trace.cov_diag.push([belief.cov[(0, 0)], belief.cov[(1, 1)], belief.cov[(2, 2)]]);
    }
    Ok(trace)
}
