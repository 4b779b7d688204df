//! Single-track (bicycle) vehicle model with Dugoff lateral tyre forces.
//!
//! The same equations serve as the UKF process model and, with perturbed
//! parameters and optional lateral load transfer, as the ground-truth
//! simulator for synthetic manoeuvres.
//!
//! State is `(vx, vy, yaw_rate)` at the centre of gravity. Inputs are the
//! road-wheel steering angle and the measured longitudinal acceleration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum longitudinal speed for which slip angles and sideslip are defined.
pub const MIN_SPEED: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("longitudinal speed {vx} m/s is below the {MIN_SPEED} m/s threshold")]
    LowSpeed { vx: f64 },
    #[error("integration produced a non-finite {quantity}")]
    NonFinite { quantity: &'static str },
    #[error("invalid vehicle parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("invalid time step {0} s, expected 0 < dt <= 0.1")]
    InvalidStep(f64),
}

/// Vehicle parameters. Field names are the JSON config keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    /// CoG to front axle, m
    pub dist_front_axle: f64,
    /// CoG to rear axle, m
    pub dist_rear_axle: f64,
    /// N/rad, whole axle
    pub cornering_stiffness_front: f64,
    /// N/rad, whole axle
    pub cornering_stiffness_rear: f64,
    pub friction_coeff: f64,
    pub gravity: f64,
}

impl Default for VehicleParams {
    /// Representative mid-size sedan.
    fn default() -> Self {
        Self {
            mass: 1800.0,
            yaw_inertia: 3200.0,
            dist_front_axle: 1.35,
            dist_rear_axle: 1.55,
            cornering_stiffness_front: 70_000.0,
            cornering_stiffness_rear: 80_000.0,
            friction_coeff: 1.0,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("dist_front_axle", self.dist_front_axle),
            ("dist_rear_axle", self.dist_rear_axle),
            ("cornering_stiffness_front", self.cornering_stiffness_front),
            ("cornering_stiffness_rear", self.cornering_stiffness_rear),
            ("friction_coeff", self.friction_coeff),
            ("gravity", self.gravity),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(VehicleError::InvalidParams {
                    field,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        if self.friction_coeff > 2.0 {
            return Err(VehicleError::InvalidParams {
                field: "friction_coeff",
                reason: format!("must lie in (0, 2], got {}", self.friction_coeff),
            });
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.dist_front_axle + self.dist_rear_axle
    }

    /// Static axle loads `(front, rear)` in N.
    pub fn static_axle_loads(&self) -> (f64, f64) {
        let weight = self.mass * self.gravity;
        let l = self.wheelbase();
        (weight * self.dist_rear_axle / l, weight * self.dist_front_axle / l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self { vx, vy, yaw_rate }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.yaw_rate.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Road-wheel steering angle, rad.
    pub steer: f64,
    /// Measured longitudinal acceleration, m/s².
    pub long_accel: f64,
}

impl ControlInput {
    pub fn new(steer: f64, long_accel: f64) -> Self {
        Self { steer, long_accel }
    }
}

/// Sensor outputs of the model: `(vx, ay, yaw_rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub vx: f64,
    pub ay: f64,
    pub yaw_rate: f64,
}

/// Front and rear slip angles in rad.
pub fn slip_angles(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<(f64, f64), VehicleError> {
    if !(state.vx > MIN_SPEED) {
        return Err(VehicleError::LowSpeed { vx: state.vx });
    }
    let front = input.steer
        - ((state.vy + params.dist_front_axle * state.yaw_rate) / state.vx).atan();
    let rear = -((state.vy - params.dist_rear_axle * state.yaw_rate) / state.vx).atan();
    Ok((front, rear))
}

/// Static Dugoff lateral force for one tyre (or one axle lumped as a tyre).
pub fn dugoff_lateral_force(alpha: f64, fz: f64, c_alpha: f64, mu: f64) -> f64 {
    let tan_alpha = alpha.tan();
    if tan_alpha == 0.0 || fz <= 0.0 {
        return 0.0;
    }
    let lambda = mu * fz / (2.0 * c_alpha * tan_alpha.abs());
    let saturation = if lambda < 1.0 { lambda * (2.0 - lambda) } else { 1.0 };
    c_alpha * tan_alpha * saturation
}

/// Lateral load transfer between left and right tyres of each axle.
///
/// Only the ground-truth simulator uses this; the filter's process model
/// keeps static axle loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadTransfer {
    /// m
    pub cog_height: f64,
    /// m
    pub track_width: f64,
}

impl Default for LoadTransfer {
    fn default() -> Self {
        Self { cog_height: 0.55, track_width: 1.6 }
    }
}

/// The single-track model, optionally with lateral load transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleModel {
    pub params: VehicleParams,
    pub load_transfer: Option<LoadTransfer>,
}

impl VehicleModel {
    pub fn nominal(params: VehicleParams) -> Self {
        Self { params, load_transfer: None }
    }

    /// Axle lateral forces `(front, rear)` in N.
    pub fn axle_forces(
        &self,
        state: &VehicleState,
        input: &ControlInput,
    ) -> Result<(f64, f64), VehicleError> {
        let p = &self.params;
        let (alpha_f, alpha_r) = slip_angles(state, input, p)?;
        let (fzf, fzr) = p.static_axle_loads();
        let mu = p.friction_coeff;
        match self.load_transfer {
            None => Ok((
                dugoff_lateral_force(alpha_f, fzf, p.cornering_stiffness_front, mu),
                dugoff_lateral_force(alpha_r, fzr, p.cornering_stiffness_rear, mu),
            )),
            Some(lt) => {
                // quasi-steady lateral acceleration
                let ay = state.vx * state.yaw_rate;
                let total = p.mass * ay * lt.cog_height / lt.track_width;
                let l = p.wheelbase();
                let split = |alpha: f64, fz: f64, c: f64, share: f64| {
                    let dfz = total * share;
                    let outer = (0.5 * fz + dfz).max(0.0);
                    let inner = (0.5 * fz - dfz).max(0.0);
                    dugoff_lateral_force(alpha, outer, 0.5 * c, mu)
                        + dugoff_lateral_force(alpha, inner, 0.5 * c, mu)
                };
                Ok((
                    split(alpha_f, fzf, p.cornering_stiffness_front, p.dist_rear_axle / l),
                    split(alpha_r, fzr, p.cornering_stiffness_rear, p.dist_front_axle / l),
                ))
            }
        }
    }

    /// Continuous-time state derivative.
    pub fn derivative(
        &self,
        state: &VehicleState,
        input: &ControlInput,
    ) -> Result<VehicleState, VehicleError> {
        let p = &self.params;
        let (fyf, fyr) = self.axle_forces(state, input)?;
        let cos_delta = input.steer.cos();
        Ok(VehicleState {
            vx: input.long_accel + state.yaw_rate * state.vy,
            vy: (fyf * cos_delta + fyr) / p.mass - state.yaw_rate * state.vx,
            yaw_rate: (p.dist_front_axle * fyf * cos_delta - p.dist_rear_axle * fyr)
                / p.yaw_inertia,
        })
    }

    /// One explicit Euler step.
    pub fn step(
        &self,
        state: &VehicleState,
        input: &ControlInput,
        dt: f64,
    ) -> Result<VehicleState, VehicleError> {
        if !(dt > 0.0 && dt <= 0.1) {
            return Err(VehicleError::InvalidStep(dt));
        }
        let d = self.derivative(state, input)?;
        let next = VehicleState {
            vx: state.vx + dt * d.vx,
            vy: state.vy + dt * d.vy,
            yaw_rate: state.yaw_rate + dt * d.yaw_rate,
        };
        check_finite(&next)?;
        Ok(next)
    }

    pub fn measure(
        &self,
        state: &VehicleState,
        input: &ControlInput,
    ) -> Result<Measurement, VehicleError> {
        let (fyf, fyr) = self.axle_forces(state, input)?;
        Ok(Measurement {
            vx: state.vx,
            ay: (fyf * input.steer.cos() + fyr) / self.params.mass,
            yaw_rate: state.yaw_rate,
        })
    }
}

fn check_finite(state: &VehicleState) -> Result<(), VehicleError> {
    if !state.vx.is_finite() {
        return Err(VehicleError::NonFinite { quantity: "vx" });
    }
    if !state.vy.is_finite() {
        return Err(VehicleError::NonFinite { quantity: "vy" });
    }
    if !state.yaw_rate.is_finite() {
        return Err(VehicleError::NonFinite { quantity: "yaw_rate" });
    }
    Ok(())
}

/// Explicit Euler step of the nominal model (static axle loads).
pub fn dynamics_step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    VehicleModel::nominal(*params).step(state, input, dt)
}

/// Model sensor outputs `(vx, ay, yaw_rate)` of the nominal model.
pub fn measurement_model(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<Measurement, VehicleError> {
    VehicleModel::nominal(*params).measure(state, input)
}

/// Sideslip angle `arctan(vy / vx)` in rad.
pub fn sideslip(state: &VehicleState) -> Result<f64, VehicleError> {
    if !(state.vx > MIN_SPEED) {
        return Err(VehicleError::LowSpeed { vx: state.vx });
    }
    Ok((state.vy / state.vx).atan())
}
