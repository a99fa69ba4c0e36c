//! Physical types and constitutive sub-models.

mod energy;
mod friction;
mod mode;
mod params;
mod spring;
mod state;

pub use energy::{energy, gravity_vector, Energy};
pub use friction::{friction_torque, sgn, smoothed_friction_derivs};
pub use mode::{constraint_matrix, Mode, ModeMaps};
pub use params::{aggregate_params, ActuatorParams, HysteresisForm, ModuleInertias, NonInertialParams};
pub use spring::{hysteresis_rate, spring_torque, SpringLaw};
pub use state::HybridState;
