use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActuatorParams, HybridState, Mode};
use crate::sim::{execute_schedule, ControlSignal, PhaseSpec, Schedule, SimOptions};

/// Default crossing threshold as a fraction of the settled response change.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Commanded clutch state and a response channel on a shared clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayLog {
    pub t: Vec<f64>,
    pub command: Vec<f64>,
    pub response: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DelayRow {
    t: f64,
    command: f64,
    response: f64,
}

impl DelayLog {
    pub fn new(t: Vec<f64>, command: Vec<f64>, response: Vec<f64>) -> Result<DelayLog> {
        let log = DelayLog { t, command, response };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.len() != self.t.len() || self.response.len() != self.t.len() {
            return Err(Error::InvalidInput("t, command and response must have equal length".into()));
        }
        if self.t.iter().chain(&self.command).chain(&self.response).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("delay log must be finite".into()));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("time stamps must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Reads a CSV with columns `t, command, response`.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<DelayLog> {
        let mut rdr = csv::Reader::from_reader(reader);
        let (mut t, mut command, mut response) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize::<DelayRow>() {
            let row = row?;
            t.push(row.t);
            command.push(row.command);
            response.push(row.response);
        }
        DelayLog::new(t, command, response)
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.t.len() {
            w.serialize(DelayRow {
                t: self.t[i],
                command: self.command[i],
                response: self.response[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sample indices at which the command takes a new value.
    pub fn edges(&self) -> Vec<usize> {
        (1..self.t.len()).filter(|&k| self.command[k] != self.command[k - 1]).collect()
    }
}

/// Mean lag between command edges and the response crossing `threshold`
/// times its settled change.
///
/// The change of an edge runs from the last sample before it to the last
/// sample before the next edge. Crossings are interpolated linearly between
/// samples and never precede the edge.
pub fn estimate_delay(log: &DelayLog, threshold: f64) -> Result<f64> {
    log.validate()?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let edges = log.edges();
    if edges.is_empty() {
        return Err(Error::InvalidInput("command has no edge".into()));
    }
    let mut total = 0.0;
    for (n, &k) in edges.iter().enumerate() {
        let end = edges.get(n + 1).copied().unwrap_or(log.t.len());
        let r0 = log.response[k - 1];
        let change = log.response[end - 1] - r0;
        let level = threshold * change.abs();
        let crossing = (k..end).find(|&j| (log.response[j] - r0).abs() >= level && change != 0.0);
        let Some(j) = crossing else {
            return Err(Error::NoCrossing(log.t[k]));
        };
        let (a, b) = ((log.response[j - 1] - r0).abs(), (log.response[j] - r0).abs());
        let frac = if b > a { ((level - a) / (b - a)).clamp(0.0, 1.0) } else { 1.0 };
        let t_cross = (log.t[j - 1] + frac * (log.t[j] - log.t[j - 1])).max(log.t[k]);
        total += t_cross - log.t[k];
    }
    Ok(total / edges.len() as f64)
}

/// Brakes a swinging link: the command switches from DEC to BRK at
/// `t_command` and the response is the link velocity, which drops to zero
/// once both clutches have engaged.
pub fn synthetic_delay_log(params: &ActuatorParams, opts: &SimOptions, t_command: f64, t_end: f64) -> Result<DelayLog> {
    if !(t_command > 0.0 && t_end > t_command) {
        return Err(Error::InvalidInput(format!("need 0 < t_command < t_end, got {t_command}, {t_end}")));
    }
    let sched = Schedule::new(
        vec![
            PhaseSpec {
                mode: Mode::Dec,
                duration: t_command,
            },
            PhaseSpec {
                mode: Mode::Brk,
                duration: t_end - t_command,
            },
        ],
        ControlSignal::zero(),
    );
    let start = HybridState {
        q_dot: 3.0,
        ..HybridState::default()
    };
    let traj = execute_schedule(&sched, &start, params, opts)?;
    let commanded = |t: f64| if t < t_command { Mode::Dec } else { Mode::Brk };
    let mut t = Vec::with_capacity(traj.samples.len());
    let mut command = Vec::with_capacity(traj.samples.len());
    let mut response = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        if t.last().is_some_and(|&last| s.t <= last) {
            continue;
        }
        t.push(s.t);
        command.push(f64::from(commanded(s.t).id()));
        response.push(s.state.q_dot);
    }
    DelayLog::new(t, command, response)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_log(delay: f64, dt: f64) -> DelayLog {
        let n = 1000;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let command = t.iter().map(|&s| if s >= 0.2 { 1.0 } else { 0.0 }).collect();
        let response = t.iter().map(|&s| if s >= 0.2 + delay { 2.0 } else { 0.5 }).collect();
        DelayLog::new(t, command, response).unwrap()
    }

    #[test]
    fn recovers_step_delays() {
        let dt = 1e-3;
        for delay in [0.0, 0.022, 0.1] {
            let d = estimate_delay(&step_log(delay, dt), DEFAULT_THRESHOLD).unwrap();
            assert!((d - delay).abs() <= dt, "{d} vs {delay}");
        }
    }

    #[test]
    fn averages_over_edges() {
        let dt = 1e-3;
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * dt).collect();
        let command: Vec<f64> = t.iter().map(|&s| if (0.2..0.6).contains(&s) { 1.0 } else { 0.0 }).collect();
        // rises 20 ms after the first edge, falls 40 ms after the second
        let response = t
            .iter()
            .map(|&s| if (0.22..0.64).contains(&s) { 1.0 } else { 0.0 })
            .collect();
        let log = DelayLog::new(t, command, response).unwrap();
        assert_eq!(log.edges().len(), 2);
        let d = estimate_delay(&log, DEFAULT_THRESHOLD).unwrap();
        assert!((d - 0.03).abs() <= dt, "{d}");
    }

    #[test]
    fn flat_response_has_no_crossing() {
        let mut log = step_log(0.0, 1e-3);
        log.response.iter_mut().for_each(|r| *r = 1.0);
        assert!(matches!(estimate_delay(&log, DEFAULT_THRESHOLD), Err(Error::NoCrossing(_))));
        log.command.iter_mut().for_each(|c| *c = 0.0);
        assert!(estimate_delay(&log, DEFAULT_THRESHOLD).is_err());
    }

    #[test]
    fn simulated_brake_delay_is_recovered() {
        let opts = SimOptions::default();
        for (delays, injected) in [(false, 0.0), (true, 0.022)] {
            let params = ActuatorParams {
                delay_brake: injected,
                delay_clutch: injected,
                ..ActuatorParams::default()
            };
            let opts = SimOptions { delays, ..opts };
            let log = synthetic_delay_log(&params, &opts, 0.1, 0.3).unwrap();
            let d = estimate_delay(&log, DEFAULT_THRESHOLD).unwrap();
            assert!((d - injected).abs() <= opts.dt, "{d} vs {injected}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let log = step_log(0.01, 0.01);
        let mut buf = Vec::new();
        log.to_csv(&mut buf).unwrap();
        assert_eq!(DelayLog::from_csv(&buf[..]).unwrap(), log);
    }
}
