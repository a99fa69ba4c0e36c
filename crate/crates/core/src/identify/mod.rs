//! Spring and clutch identification from loading cycles and switching logs.

mod cycles;
mod delay;
mod fit;

pub use cycles::{generate_cycles, integrate_hysteresis, LoadingCycleData};
pub use delay::{estimate_delay, synthetic_delay_log, DelayLog, DEFAULT_THRESHOLD};
pub use fit::{fit_bouc_wen, fit_stiffness, BoucWenFit, FitOptions, StiffnessFit};

/// Motor reversal limits of the loading protocol, rad.
pub const DEFAULT_THETA_LIMITS: (f64, f64) = (-0.29, 0.29);
