use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear motor velocity command over absolute time.
///
/// Knots are sorted by time. Two knots may share a time to encode a jump;
/// `left` and `right` limits then differ. Outside the knot range the signal
/// is held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn constant(u: f64) -> ControlSignal {
        ControlSignal {
            times: vec![0.0],
            values: vec![u],
        }
    }

    pub fn zero() -> ControlSignal {
        ControlSignal::constant(0.0)
    }

    pub fn piecewise_linear(times: Vec<f64>, values: Vec<f64>) -> Result<ControlSignal> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "control needs matching non-empty knot arrays, got {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("control knots must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("control knot times must be non-decreasing".into()));
        }
        Ok(ControlSignal { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Left limit `u(t-)`.
    pub fn left(&self, t: f64) -> f64 {
        // first knot with time >= t
        let i = self.times.partition_point(|&k| k < t);
        self.interp(i, t)
    }

    /// Right limit `u(t+)`.
    pub fn right(&self, t: f64) -> f64 {
        // first knot with time > t, step back so that knots at t act from the right
        let i = self.times.partition_point(|&k| k <= t);
        if i > 0 && self.times[i - 1] == t {
            return self.values[i - 1];
        }
        self.interp(i, t)
    }

    /// Value inside the open-closed phase interval `[start, end]`: right
    /// limit at `start`, left limit at `end`.
    pub fn within(&self, t: f64, start: f64, end: f64) -> f64 {
        if t >= end {
            self.left(end)
        } else if t <= start {
            self.right(start)
        } else {
            self.right(t)
        }
    }

    /// Interpolates on the segment ending at knot `i`.
    fn interp(&self, i: usize, t: f64) -> f64 {
        let n = self.times.len();
        if i == 0 {
            return self.values[0];
        }
        if i >= n {
            return self.values[n - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (u0, u1) = (self.values[i - 1], self.values[i]);
        if t1 == t0 {
            return u1;
        }
        u0 + (u1 - u0) * (t - t0) / (t1 - t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_holds() {
        let c = ControlSignal::piecewise_linear(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, -2.0]).unwrap();
        assert_eq!(c.right(0.5), 1.0);
        assert_eq!(c.left(1.5), 0.0);
        assert_eq!(c.right(-1.0), 0.0);
        assert_eq!(c.right(3.0), -2.0);
    }

    #[test]
    fn jump_has_distinct_limits() {
        let c = ControlSignal::piecewise_linear(vec![0.0, 1.0, 1.0, 2.0], vec![0.0, 4.0, -4.0, 0.0]).unwrap();
        assert_eq!(c.left(1.0), 4.0);
        assert_eq!(c.right(1.0), -4.0);
        assert_eq!(c.within(1.0, 0.0, 1.0), 4.0);
        assert_eq!(c.within(1.0, 1.0, 2.0), -4.0);
        assert_eq!(c.right(1.5), -2.0);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(ControlSignal::piecewise_linear(vec![], vec![]).is_err());
        assert!(ControlSignal::piecewise_linear(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(ControlSignal::piecewise_linear(vec![0.0], vec![f64::NAN]).is_err());
    }
}
