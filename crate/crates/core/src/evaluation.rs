//! The tuning objective `J(q)` over a set of manoeuvres, and sideslip KPIs.
//!
//! Each manoeuvre is filtered with process noise `q`; the normalised RMSE of
//! sideslip (against ground truth), yaw rate and lateral acceleration (against
//! the measurements) is pooled over the set, weighting by sample count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Manoeuvre;
use crate::ukf::{run_filter, EstimateTrace, NoiseConfig, UkfConfig, UkfError};
use crate::vehicle::VehicleParams;

/// NRMSE assigned to every channel of a manoeuvre on which the filter diverged.
pub const DIVERGENCE_NRMSE: f64 = 10.0;

/// Lateral acceleration (m/s²) above which a sample counts as nonlinear handling.
pub const NONLINEAR_AY: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("series lengths differ: {estimated} estimated vs {reference} reference")]
    LengthMismatch { estimated: usize, reference: usize },
    #[error("empty series")]
    Empty,
    #[error("reference series is identically zero{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DegenerateReference { context: Option<String> },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no manoeuvres to evaluate")]
    NoManoeuvres,
    #[error("filter failed on {manoeuvre}: {source}")]
    Filter {
        manoeuvre: String,
        #[source]
        source: UkfError,
    },
}

/// Error channels entering the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Sideslip,
    YawRate,
    LateralAccel,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Sideslip, Channel::YawRate, Channel::LateralAccel];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct CostWeights {
    w: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    sideslip: f64,
    yaw_rate: f64,
    lateral_accel: f64,
}

impl TryFrom<RawWeights> for CostWeights {
    type Error = EvaluationError;
    fn try_from(r: RawWeights) -> Result<Self, Self::Error> {
        CostWeights::new(r.sideslip, r.yaw_rate, r.lateral_accel)
    }
}

impl From<CostWeights> for RawWeights {
    fn from(c: CostWeights) -> Self {
        RawWeights { sideslip: c.w[0], yaw_rate: c.w[1], lateral_accel: c.w[2] }
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w: [5.0, 1.0, 1.0] }
    }
}

impl CostWeights {
    pub fn new(sideslip: f64, yaw_rate: f64, lateral_accel: f64) -> Result<Self, EvaluationError> {
        let w = [sideslip, yaw_rate, lateral_accel];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EvaluationError::InvalidWeights(format!("{w:?} must be finite and nonnegative")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(EvaluationError::InvalidWeights("all weights are zero".into()));
        }
        Ok(Self { w })
    }

    pub fn get(&self, channel: Channel) -> f64 {
        self.w[channel.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.w
    }
}

/// Root-mean-square error normalised by the largest absolute reference value.
pub fn nrmse(estimated: &[f64], reference: &[f64]) -> Result<f64, EvaluationError> {
    if estimated.len() != reference.len() {
        return Err(EvaluationError::LengthMismatch { estimated: estimated.len(), reference: reference.len() });
    }
    if reference.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let peak = reference.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(EvaluationError::DegenerateReference { context: None });
    }
    let sq: f64 = estimated.iter().zip(reference).map(|(e, r)| (e - r) * (e - r)).sum();
    Ok((sq / reference.len() as f64).sqrt() / peak)
}

/// Per-channel NRMSE of one filtered manoeuvre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManoeuvreErrors {
    pub name: String,
    pub samples: usize,
    pub nrmse: [f64; 3],
    pub diverged: bool,
}

impl ManoeuvreErrors {
    pub fn channel(&self, channel: Channel) -> f64 {
        self.nrmse[channel.index()]
    }

    pub fn diverged(name: &str, samples: usize) -> Self {
        Self { name: name.to_string(), samples, nrmse: [DIVERGENCE_NRMSE; 3], diverged: true }
    }
}

/// Compare a filter trace with the manoeuvre it was run on.
pub fn trace_errors(trace: &EstimateTrace, man: &Manoeuvre) -> Result<ManoeuvreErrors, EvaluationError> {
    if trace.len() != man.len() {
        return Err(EvaluationError::LengthMismatch { estimated: trace.len(), reference: man.len() });
    }
    let with_context = |channel: &str| {
        let name = man.name.clone();
        let channel = channel.to_string();
        move |e| match e {
            EvaluationError::DegenerateReference { .. } => {
                EvaluationError::DegenerateReference { context: Some(format!("{name}, {channel}")) }
            }
            other => other,
        }
    };
    let beta_ref: Vec<f64> = man.samples.iter().map(|s| s.true_beta).collect();
    let r_ref: Vec<f64> = man.samples.iter().map(|s| s.meas_yawrate).collect();
    let ay_ref: Vec<f64> = man.samples.iter().map(|s| s.meas_ay).collect();
    let r_est: Vec<f64> = trace.measurements.iter().map(|m| m.yaw_rate).collect();
    let ay_est: Vec<f64> = trace.measurements.iter().map(|m| m.ay).collect();
    Ok(ManoeuvreErrors {
        name: man.name.clone(),
        samples: man.len(),
        nrmse: [
            nrmse(&trace.sideslip, &beta_ref).map_err(with_context("sideslip"))?,
            nrmse(&r_est, &r_ref).map_err(with_context("yaw_rate"))?,
            nrmse(&ay_est, &ay_ref).map_err(with_context("lateral_accel"))?,
        ],
        diverged: false,
    })
}

/// Sample-count weighted RMS of per-manoeuvre NRMSE for one channel.
pub fn channel_error(set: &[ManoeuvreErrors], channel: Channel) -> Result<f64, EvaluationError> {
    if set.is_empty() {
        return Err(EvaluationError::NoManoeuvres);
    }
    let (num, den) = set.iter().fold((0.0, 0.0), |(num, den), m| {
        let e = m.channel(channel);
        (num + e * e * m.samples as f64, den + m.samples as f64)
    });
    Ok((num / den).sqrt())
}

/// Everything the filter needs besides the tuned process noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterContext {
    pub ukf: UkfConfig,
    pub params: VehicleParams,
    pub observation_noise: [f64; 3],
}

impl Default for FilterContext {
    fn default() -> Self {
        Self {
            ukf: UkfConfig::default(),
            params: VehicleParams::default(),
            observation_noise: NoiseConfig::default_observation(),
        }
    }
}

impl FilterContext {
    pub fn noise(&self, q: &[f64; 3]) -> NoiseConfig {
        NoiseConfig::new(*q, self.observation_noise)
    }

    pub fn filter(&self, q: &[f64; 3], man: &Manoeuvre) -> Result<EstimateTrace, UkfError> {
        run_filter(man, &self.noise(q), &self.ukf, &self.params)
    }
}

/// Filter one manoeuvre and score it; divergence maps to the penalty NRMSE.
pub fn manoeuvre_errors(q: &[f64; 3], man: &Manoeuvre, ctx: &FilterContext) -> Result<ManoeuvreErrors, EvaluationError> {
    match ctx.filter(q, man) {
        Ok(trace) => trace_errors(&trace, man),
        Err(UkfError::Diverged { .. }) | Err(UkfError::NotPositiveDefinite) => {
            Ok(ManoeuvreErrors::diverged(&man.name, man.len()))
        }
        Err(source) => Err(EvaluationError::Filter { manoeuvre: man.name.clone(), source }),
    }
}

/// Channel errors and the weighted total for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub e_sideslip: f64,
    pub e_yaw_rate: f64,
    pub e_lateral_accel: f64,
    pub total: f64,
    pub diverged: usize,
}

impl CostBreakdown {
    pub fn from_errors(errors: &[ManoeuvreErrors], weights: &CostWeights) -> Result<Self, EvaluationError> {
        let e = [
            channel_error(errors, Channel::Sideslip)?,
            channel_error(errors, Channel::YawRate)?,
            channel_error(errors, Channel::LateralAccel)?,
        ];
        let total = Channel::ALL.iter().zip(e).map(|(c, v)| weights.get(*c) * v).sum();
        Ok(Self {
            e_sideslip: e[0],
            e_yaw_rate: e[1],
            e_lateral_accel: e[2],
            total,
            diverged: errors.iter().filter(|m| m.diverged).count(),
        })
    }
}

/// Per-manoeuvre errors, computed in parallel and returned in input order.
pub fn set_errors(q: &[f64; 3], set: &[Manoeuvre], ctx: &FilterContext) -> Result<Vec<ManoeuvreErrors>, EvaluationError> {
    if set.is_empty() {
        return Err(EvaluationError::NoManoeuvres);
    }
    set.par_iter().map(|m| manoeuvre_errors(q, m, ctx)).collect()
}

pub fn cost_breakdown(
    q: &[f64; 3],
    set: &[Manoeuvre],
    weights: &CostWeights,
    ctx: &FilterContext,
) -> Result<CostBreakdown, EvaluationError> {
    CostBreakdown::from_errors(&set_errors(q, set, ctx)?, weights)
}

/// The tuning objective `J(q)`.
pub fn cost(q: &[f64; 3], set: &[Manoeuvre], weights: &CostWeights, ctx: &FilterContext) -> Result<f64, EvaluationError> {
    Ok(cost_breakdown(q, set, weights, ctx)?.total)
}

/// Sideslip accuracy of one manoeuvre, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManoeuvreKpi {
    pub name: String,
    pub samples: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Absent when no sample reaches [`NONLINEAR_AY`].
    pub rmse_non: Option<f64>,
    pub mae_non: Option<f64>,
    pub nonlinear_samples: usize,
}

/// Sideslip RMSE and maximum absolute error over the whole manoeuvre and over
/// the samples with `|ay| >= 4 m/s²` (stored lateral acceleration).
pub fn kpi(trace: &EstimateTrace, man: &Manoeuvre) -> Result<ManoeuvreKpi, EvaluationError> {
    if trace.len() != man.len() {
        return Err(EvaluationError::LengthMismatch { estimated: trace.len(), reference: man.len() });
    }
    if man.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let errors: Vec<(f64, bool)> = trace
        .sideslip
        .iter()
        .zip(&man.samples)
        .map(|(b, s)| ((b - s.true_beta).to_degrees(), s.meas_ay.abs() >= NONLINEAR_AY))
        .collect();
    let stats = |mask_only: bool| {
        let (mut sq, mut max, mut n) = (0.0_f64, 0.0_f64, 0usize);
        for (e, nonlinear) in &errors {
            if mask_only && !nonlinear {
                continue;
            }
            sq += e * e;
            max = max.max(e.abs());
            n += 1;
        }
        (n > 0).then(|| ((sq / n as f64).sqrt(), max, n))
    };
    let (rmse, mae, _) = stats(false).ok_or(EvaluationError::Empty)?;
    let non = stats(true);
    Ok(ManoeuvreKpi {
        name: man.name.clone(),
        samples: man.len(),
        rmse,
        mae,
        rmse_non: non.map(|v| v.0),
        mae_non: non.map(|v| v.1),
        nonlinear_samples: non.map_or(0, |v| v.2),
    })
}

/// KPIs averaged over manoeuvres, with the per-manoeuvre breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub rmse: f64,
    pub mae: f64,
    pub rmse_non: Option<f64>,
    pub mae_non: Option<f64>,
    pub manoeuvres: Vec<ManoeuvreKpi>,
}

impl KpiReport {
    pub fn aggregate(manoeuvres: Vec<ManoeuvreKpi>) -> Result<Self, EvaluationError> {
        if manoeuvres.is_empty() {
            return Err(EvaluationError::NoManoeuvres);
        }
        let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        Ok(Self {
            rmse: mean(manoeuvres.iter().map(|m| m.rmse).collect()).unwrap_or_default(),
            mae: mean(manoeuvres.iter().map(|m| m.mae).collect()).unwrap_or_default(),
            rmse_non: mean(manoeuvres.iter().filter_map(|m| m.rmse_non).collect()),
            mae_non: mean(manoeuvres.iter().filter_map(|m| m.mae_non).collect()),
            manoeuvres,
        })
    }
}

/// Filter every manoeuvre with `q` and report KPIs. Divergence is an error here.
pub fn evaluate_set(q: &[f64; 3], set: &[Manoeuvre], ctx: &FilterContext) -> Result<(KpiReport, Vec<EstimateTrace>), EvaluationError> {
    let results: Vec<(ManoeuvreKpi, EstimateTrace)> = set
        .par_iter()
        .map(|m| {
            let trace = ctx
                .filter(q, m)
                .map_err(|source| EvaluationError::Filter { manoeuvre: m.name.clone(), source })?;
            Ok((kpi(&trace, m)?, trace))
        })
        .collect::<Result<_, EvaluationError>>()?;
    let (kpis, traces) = results.into_iter().unzip();
    Ok((KpiReport::aggregate(kpis)?, traces))
}
