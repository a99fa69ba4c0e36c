use serde::{Deserialize, Serialize};

use crate::model::{energy, ActuatorParams, Mode};
use crate::sim::HybridTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub mode: Mode,
    pub kinetic: f64,
    pub potential: f64,
}

pub fn energy_trace(trajectory: &HybridTrajectory, params: &ActuatorParams) -> Vec<EnergySample> {
    trajectory
        .samples
        .iter()
        .map(|s| {
            let e = energy(&s.state, params);
            EnergySample {
                t: s.t,
                mode: s.mode,
                kinetic: e.kinetic,
                potential: e.potential,
            }
        })
        .collect()
}

/// Indices of strict local maxima of `values`, ignoring wiggles smaller than
/// `prominence` on either side.
pub fn local_maxima(values: &[f64], prominence: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut candidate: Option<usize> = None;
    let mut low = values.first().copied().unwrap_or(0.0);
    for (i, &v) in values.iter().enumerate() {
        match candidate {
            None => {
                low = low.min(v);
                if v - low > prominence {
                    candidate = Some(i);
                }
            }
            Some(c) => {
                if v > values[c] {
                    candidate = Some(i);
                } else if values[c] - v > prominence {
                    peaks.push(c);
                    candidate = None;
                    low = v;
                }
            }
        }
    }
    peaks
}
