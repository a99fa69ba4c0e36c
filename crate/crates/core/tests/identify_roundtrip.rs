use bsa_core::identify::{
    fit_bouc_wen, fit_stiffness, generate_cycles, FitOptions, StiffnessFit, DEFAULT_THETA_LIMITS,
};
use bsa_core::ActuatorParams;

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn every_set_point_recovers_the_spring() {
    let p = ActuatorParams::default();
    for rate in [1.0, 2.0, 3.0, 4.0] {
        let data = generate_cycles(&p, rate, DEFAULT_THETA_LIMITS, 10, 1e-4).unwrap();
        let fit = fit_bouc_wen(&data, StiffnessFit::Free, &FitOptions::default()).unwrap();
        assert!(fit.converged, "{rate}: {fit:?}");
        for (est, truth) in [(fit.stiffness, p.stiffness), (fit.alpha, p.alpha), (fit.beta, p.beta), (fit.gamma, p.gamma)] {
            assert!(relative(est, truth) < 0.05, "{rate}: {fit:?}");
        }
    }
}

#[test]
fn slope_does_not_depend_on_cycle_count() {
    let p = ActuatorParams::default();
    let k = |cycles| fit_stiffness(&generate_cycles(&p, 2.0, DEFAULT_THETA_LIMITS, cycles, 1e-4).unwrap()).unwrap();
    let reference = k(10);
    for cycles in [2, 3, 5] {
        assert!(relative(k(cycles), reference) < 0.01);
    }
}
