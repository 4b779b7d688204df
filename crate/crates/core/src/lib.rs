//! Auto-tuning of UKF process noise for vehicle sideslip estimation.
//!
//! The optimiser is a two-stage Bayesian optimisation over a Student-t (or
//! Gaussian) process surrogate; a real-coded genetic algorithm serves as the
//! baseline. Synthetic manoeuvres stand in for recorded vehicle data.

pub mod acquisition;
pub mod evaluation;
pub mod ga;
pub mod scenario;
pub mod surrogate;
pub mod tsbo;
pub mod tuning;
pub mod ukf;
pub mod vehicle;
