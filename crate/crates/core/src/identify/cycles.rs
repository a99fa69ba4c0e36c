use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hysteresis_rate, ActuatorParams};

/// Spring deflection and torque recorded while the motor winds a braked
/// spring back and forth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingCycleData {
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub tau: Vec<f64>,
    /// Motor set-point speed, rad/s, when known.
    pub theta_dot_set: Option<f64>,
    pub cycles: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CycleRow {
    t: f64,
    phi: f64,
    tau: f64,
}

impl LoadingCycleData {
    pub fn new(t: Vec<f64>, phi: Vec<f64>, tau: Vec<f64>) -> Result<LoadingCycleData> {
        let data = LoadingCycleData {
            t,
            phi,
            tau,
            theta_dot_set: None,
            cycles: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.len() != self.t.len() || self.tau.len() != self.t.len() {
            return Err(Error::InvalidInput("t, phi and tau must have equal length".into()));
        }
        if self.t.iter().chain(&self.phi).chain(&self.tau).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("loading data must be finite".into()));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("time stamps must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Reads a CSV with columns `t, phi, tau`.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<LoadingCycleData> {
        let mut rdr = csv::Reader::from_reader(reader);
        let (mut t, mut phi, mut tau) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize::<CycleRow>() {
            let row = row?;
            t.push(row.t);
            phi.push(row.phi);
            tau.push(row.tau);
        }
        LoadingCycleData::new(t, phi, tau)
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.serialize(CycleRow {
                t: self.t[i],
                phi: self.phi[i],
                tau: self.tau[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Number of direction changes of the deflection.
    pub fn reversals(&self) -> usize {
        let mut count = 0;
        let mut last = 0.0f64;
        for w in self.phi.windows(2) {
            let d = w[1] - w[0];
            if d != 0.0 {
                if last != 0.0 && d.signum() != last.signum() {
                    count += 1;
                }
                last = d;
            }
        }
        count
    }

    /// `sum tau dphi` over the record (trapezoidal): the work done on the
    /// spring. Over closed loops its magnitude is the enclosed loop area.
    pub fn loop_work(&self) -> f64 {
        (1..self.len())
            .map(|k| 0.5 * (self.tau[k] + self.tau[k - 1]) * (self.phi[k] - self.phi[k - 1]))
            .sum()
    }
}

/// Integrates the hysteresis state along a sampled deflection with RK4,
/// treating the deflection as linear between samples. Starts from `h = 0`.
pub fn integrate_hysteresis(t: &[f64], phi: &[f64], params: &ActuatorParams) -> Vec<f64> {
    let mut h = Vec::with_capacity(t.len());
    let mut x = 0.0;
    h.push(x);
    for k in 1..t.len() {
        let dt = t[k] - t[k - 1];
        let rate = (phi[k] - phi[k - 1]) / dt;
        let f = |s: f64, x: f64| hysteresis_rate(phi[k - 1] + rate * s, rate, x, params);
        let k1 = f(0.0, x);
        let k2 = f(0.5 * dt, x + 0.5 * dt * k1);
        let k3 = f(0.5 * dt, x + 0.5 * dt * k2);
        let k4 = f(dt, x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        h.push(x);
    }
    h
}

/// Triangle wave starting at 0 towards `hi`, then down to `lo` and back to 0;
/// one cycle lasts `2 (hi - lo) / rate`.
fn triangle(t: f64, rate: f64, lo: f64, hi: f64) -> f64 {
    let period = 2.0 * (hi - lo) / rate;
    // shift so the wave starts at the bottom of its rise through 0
    let s = (t + (-lo) / rate).rem_euclid(period);
    let rise = (hi - lo) / rate;
    if s <= rise {
        lo + rate * s
    } else {
        hi - rate * (s - rise)
    }
}

/// Simulates the storage mode with the brake engaged: the motor runs at
/// `+-theta_dot_set`, reversing at the limits, so the deflection follows
/// the motor angle and the spring torque follows the hysteretic law.
pub fn generate_cycles(
    params: &ActuatorParams,
    theta_dot_set: f64,
    theta_lim: (f64, f64),
    cycles: usize,
    dt: f64,
) -> Result<LoadingCycleData> {
    let (lo, hi) = theta_lim;
    if !(theta_dot_set.is_finite() && theta_dot_set > 0.0) {
        return Err(Error::InvalidInput(format!("set-point speed must be positive, got {theta_dot_set}")));
    }
    if !(lo < 0.0 && hi > 0.0) {
        return Err(Error::InvalidInput(format!("limits ({lo}, {hi}) must bracket 0")));
    }
    if lo.abs().max(hi) > params.phi_max {
        return Err(Error::InvalidInput(format!(
            "limits ({lo}, {hi}) exceed the deflection bound {}",
            params.phi_max
        )));
    }
    if cycles == 0 {
        return Err(Error::InvalidInput("need at least one cycle".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    let end = cycles as f64 * 2.0 * (hi - lo) / theta_dot_set;
    let steps = ((end / dt) - 1e-9).ceil() as usize;
    let t: Vec<f64> = (0..=steps).map(|k| if k == steps { end } else { k as f64 * dt }).collect();
    let phi: Vec<f64> = t.iter().map(|&s| triangle(s, theta_dot_set, lo, hi)).collect();
    let h = integrate_hysteresis(&t, &phi, params);
    let tau = phi.iter().zip(&h).map(|(p, h)| params.stiffness * (p - h)).collect();
    Ok(LoadingCycleData {
        t,
        phi,
        tau,
        theta_dot_set: Some(theta_dot_set),
        cycles: Some(cycles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HybridState, Mode, SpringLaw};
    use crate::sim::{execute_schedule, ControlSignal, Schedule, SimOptions};

    #[test]
    fn protocol_has_two_reversals_per_cycle() {
        let p = ActuatorParams::default();
        let d = generate_cycles(&p, 2.0, (-0.29, 0.29), 10, 1e-4).unwrap();
        assert_eq!(d.reversals(), 20);
        assert!(d.phi.iter().all(|v| v.abs() <= 0.29 + 1e-12));
        assert!((d.t.last().unwrap() - 10.0 * 4.0 * 0.29 / 2.0).abs() < 1e-12);
        assert!(d.phi.last().unwrap().abs() < 1e-9);
        d.validate().unwrap();
    }

    #[test]
    fn no_hysteresis_gives_the_linear_law() {
        let p = ActuatorParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..ActuatorParams::default()
        };
        let d = generate_cycles(&p, 1.0, (-0.29, 0.29), 2, 1e-3).unwrap();
        for (phi, tau) in d.phi.iter().zip(&d.tau) {
            assert_eq!(*tau, p.stiffness * phi);
        }
        assert!(d.loop_work().abs() < 1e-12);
    }

    #[test]
    fn hysteresis_loops_enclose_area() {
        let p = ActuatorParams::default();
        let d = generate_cycles(&p, 2.0, (-0.29, 0.29), 3, 1e-4).unwrap();
        // tau = K (phi - h) with h following phi_dot puts the loading branch
        // below the unloading one, so the loops run counter-clockwise
        let work = d.loop_work();
        assert!(work < -1e-3, "{work}");
    }

    #[test]
    fn matches_the_braked_simulator() {
        // limits on the step grid so both integrators see the same path
        let p = ActuatorParams::default();
        let (rate, lim, dt) = (2.0, 0.29, 1e-4);
        let d = generate_cycles(&p, rate, (-lim, lim), 1, dt).unwrap();
        let leg = lim / rate;
        let control = ControlSignal::piecewise_linear(
            vec![0.0, leg, leg, 3.0 * leg, 3.0 * leg],
            vec![rate, rate, -rate, -rate, rate],
        )
        .unwrap();
        let sched = Schedule::single(Mode::Stg, 4.0 * leg, control);
        let opts = SimOptions {
            dt,
            law: SpringLaw::BoucWen,
            ..SimOptions::default()
        };
        let traj = execute_schedule(&sched, &HybridState::default(), &p, &opts).unwrap();
        assert_eq!(traj.samples.len(), d.len());
        let mut worst = 0.0f64;
        for (s, tau) in traj.samples.iter().zip(&d.tau) {
            let sim_tau = p.stiffness * (s.state.phi() - s.state.h);
            worst = worst.max((sim_tau - tau).abs());
        }
        assert!(worst < 1e-3 * p.stiffness * lim, "{worst}");
    }

    #[test]
    fn csv_round_trip() {
        let d = LoadingCycleData::new(vec![0.0, 0.1, 0.2], vec![0.0, 0.05, 0.1], vec![0.0, 0.7, 1.4]).unwrap();
        let mut buf = Vec::new();
        d.to_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,phi,tau\n"));
        assert_eq!(LoadingCycleData::from_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn rejects_unordered_time() {
        assert!(LoadingCycleData::new(vec![0.0, 0.0], vec![0.0, 0.1], vec![0.0, 1.0]).is_err());
        assert!(generate_cycles(&ActuatorParams::default(), 1.0, (-0.5, 0.5), 1, 1e-3).is_err());
        assert!(generate_cycles(&ActuatorParams::default(), 0.0, (-0.2, 0.2), 1, 1e-3).is_err());
    }
}
