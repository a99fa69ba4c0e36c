//! Modelling, simulation and trajectory optimization for a bi-stiffness
//! actuator: a motor driving a series spring whose output can be braked to
//! the frame and/or clutched to a pendulum link.

pub mod error;
pub mod experiments;
pub mod identify;
pub mod io;
pub mod model;
pub mod nlp;
pub mod sim;
pub mod trajopt;

pub use error::{Error, Result};
pub use model::{ActuatorParams, HybridState, Mode, SpringLaw};
pub use sim::{ControlSignal, HybridTrajectory, Schedule, SimOptions};
