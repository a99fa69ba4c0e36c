use bsa_core::experiments::energy_trace;
use bsa_core::model::spring_torque;
use bsa_core::sim::SimOptions;
use bsa_core::trajopt::{build_ocp, reconstruct, solve, Boundary, CollocationConfig, PhasePlan};
use bsa_core::{ActuatorParams, Mode, SpringLaw};

/// Between events, friction can only remove energy: the stored and kinetic
/// energy grow no faster than the motor feeds the spring.
#[test]
fn energy_grows_no_faster_than_motor_power() {
    let params = ActuatorParams::default();
    let config = CollocationConfig {
        starts: 2,
        ..CollocationConfig::default()
    };
    for (modes, boundary) in [
        (vec![Mode::Brk, Mode::Sea], Boundary::from_rest(0.0)),
        (vec![Mode::Stg, Mode::Sea], Boundary::falling_from(0.5)),
    ] {
        let plan = PhasePlan::fixed(modes, 0.6);
        let ocp = build_ocp(&plan, &params, &config, &boundary).unwrap();
        let sol = solve(&ocp);
        assert!(sol.status.is_success());
        let replay = reconstruct(&sol, &params, &SimOptions::default()).unwrap();
        let traj = &replay.trajectory;
        let trace = energy_trace(traj, &params);
        let power: Vec<f64> = traj
            .samples
            .iter()
            .map(|s| s.u * spring_torque(s.state.theta, s.state.psi, 0.0, SpringLaw::Linear, &params))
            .collect();
        let event_times: Vec<f64> = traj.events.iter().map(|e| e.t).collect();
        let mut checked = 0;
        for k in 1..trace.len() {
            let (a, b) = (&trace[k - 1], &trace[k]);
            if event_times.iter().any(|&t| t > a.t - 1e-12 && t <= b.t + 1e-12) {
                continue;
            }
            let gain = (b.kinetic + b.potential) - (a.kinetic + a.potential);
            let supplied = 0.5 * (power[k - 1] + power[k]) * (b.t - a.t);
            assert!(gain <= supplied + 1e-6, "t = {}: gain {gain} > supplied {supplied}", b.t);
            checked += 1;
        }
        assert!(checked > trace.len() / 2);
    }
}
