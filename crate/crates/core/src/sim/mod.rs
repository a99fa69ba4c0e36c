//! Switched-impulsive simulation of the actuator.

mod control;
mod dynamics;
mod schedule;

pub use control::ControlSignal;
pub use dynamics::{
    constraint_torque, constraint_torque_for, continuous_dynamics, impact_impulse, reset, Model, STICTION_VELOCITY,
};
pub use schedule::{
    event_constraint_residuals, execute_schedule, integrate_phase, HybridTrajectory, PhaseSpec, Sample, Schedule,
    SimOptions, SwitchEvent, DEFAULT_DT,
};
