use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cycles::{integrate_hysteresis, LoadingCycleData};
use crate::error::{Error, Result};
use crate::model::{ActuatorParams, HysteresisForm};

/// Least-squares slope of torque against deflection through the origin.
pub fn fit_stiffness(data: &LoadingCycleData) -> Result<f64> {
    data.validate()?;
    if data.len() < 10 {
        return Err(Error::Degenerate(format!("need at least 10 samples, got {}", data.len())));
    }
    let sxx: f64 = data.phi.iter().map(|p| p * p).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("deflection is identically zero".into()));
    }
    let sxy: f64 = data.phi.iter().zip(&data.tau).map(|(p, t)| p * t).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StiffnessFit {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoucWenFit {
    pub stiffness: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Residual sum of squares of the hysteretic model, (N m)^2.
    pub rss: f64,
    /// Residual sum of squares of the best linear spring.
    pub rss_linear: f64,
    pub iterations: usize,
    /// False when no start met the step or decrease tolerance; the best
    /// iterate is reported anyway.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub form: HysteresisForm,
    /// Starting values of `beta` and `gamma`, each taken from this grid.
    pub start_grid: [f64; 3],
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            form: HysteresisForm::RateMagnitude,
            start_grid: [0.1, 1.0, 10.0],
            max_iter: 200,
        }
    }
}

/// Fits `tau = K (phi - h)` with `h` the hysteresis ODE driven by the
/// measured deflection.
///
/// `h` is proportional to `alpha`, so for given `(beta, gamma)` the torque is
/// linear in `K` and `K alpha`; those are eliminated by linear least squares
/// and Levenberg-Marquardt runs on `(ln beta, ln gamma)` from every pair of
/// the start grid.
pub fn fit_bouc_wen(data: &LoadingCycleData, stiffness: StiffnessFit, opts: &FitOptions) -> Result<BoucWenFit> {
    data.validate()?;
    if data.reversals() < 4 {
        return Err(Error::Degenerate("need at least two full loading cycles".into()));
    }
    let k_lin = fit_stiffness(data)?;
    let rss_linear = match stiffness {
        StiffnessFit::Free => sum_sq(data.phi.iter().zip(&data.tau).map(|(p, t)| t - k_lin * p)),
        StiffnessFit::Fixed(k) => sum_sq(data.phi.iter().zip(&data.tau).map(|(p, t)| t - k * p)),
    };
    let problem = Projected { data, stiffness, form: opts.form };
    let starts: Vec<Vector2<f64>> = opts
        .start_grid
        .iter()
        .flat_map(|&b| opts.start_grid.iter().map(move |&g| Vector2::new(b.ln(), g.ln())))
        .collect();
    let best = starts
        .par_iter()
        .map(|x0| levenberg_marquardt(&problem, *x0, opts.max_iter))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("non-empty start grid");
    let (beta, gamma) = (best.x[0].exp(), best.x[1].exp());
    let (k, k_alpha) = problem.linear_part(beta, gamma).1;
    Ok(BoucWenFit {
        stiffness: k,
        alpha: if k != 0.0 { k_alpha / k } else { 0.0 },
        beta,
        gamma,
        rss: 2.0 * best.cost,
        rss_linear,
        iterations: best.iterations,
        converged: best.converged,
    })
}

fn sum_sq(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum()
}

/// Residuals with the linear parameters eliminated.
struct Projected<'a> {
    data: &'a LoadingCycleData,
    stiffness: StiffnessFit,
    form: HysteresisForm,
}

impl Projected<'_> {
    /// Unit-`alpha` hysteresis response and the optimal `(K, K alpha)`.
    fn linear_part(&self, beta: f64, gamma: f64) -> (Vec<f64>, (f64, f64)) {
        let unit = ActuatorParams {
            alpha: 1.0,
            beta,
            gamma,
            hysteresis_form: self.form,
            ..ActuatorParams::default()
        };
        let g = integrate_hysteresis(&self.data.t, &self.data.phi, &unit);
        let (phi, tau) = (&self.data.phi, &self.data.tau);
        let coeffs = match self.stiffness {
            StiffnessFit::Fixed(k) => {
                // tau - K phi = -(K alpha) g
                let sgg: f64 = g.iter().map(|v| v * v).sum();
                let sgr: f64 = g.iter().zip(phi.iter().zip(tau)).map(|(g, (p, t))| g * (t - k * p)).sum();
                (k, if sgg > 0.0 { -sgr / sgg } else { 0.0 })
            }
            StiffnessFit::Free => {
                // columns [phi, -g]
                let mut a = Matrix2::zeros();
                let mut b = Vector2::zeros();
                for i in 0..phi.len() {
                    let row = Vector2::new(phi[i], -g[i]);
                    a += row * row.transpose();
                    b += row * tau[i];
                }
                match a.try_inverse() {
                    Some(inv) => {
                        let c = inv * b;
                        (c[0], c[1])
                    }
                    None => (b[0] / a[(0, 0)], 0.0),
                }
            }
        };
        (g, coeffs)
    }

    fn residuals(&self, x: &Vector2<f64>) -> Vec<f64> {
        let (g, (k, ka)) = self.linear_part(x[0].exp(), x[1].exp());
        (0..g.len())
            .map(|i| self.data.tau[i] - (k * self.data.phi[i] - ka * g[i]))
            .collect()
    }
}

struct LmResult {
    x: Vector2<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(problem: &Projected, x0: Vector2<f64>, max_iter: usize) -> LmResult {
    const FD_STEP: f64 = 1e-6;
    let cost_of = |r: &[f64]| 0.5 * sum_sq(r.iter().copied());
    let mut x = x0;
    let mut r = problem.residuals(&x);
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // forward-difference Jacobian, one column per parameter
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|j| {
                let mut xp = x;
                xp[j] += FD_STEP;
                problem.residuals(&xp).iter().zip(&r).map(|(a, b)| (a - b) / FD_STEP).collect()
            })
            .collect();
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for i in 0..r.len() {
            let row = Vector2::new(cols[0][i], cols[1][i]);
            jtj += row * row.transpose();
            jtr += row * r[i];
        }
        if jtr.amax() <= 1e-12 * cost.max(1e-300).sqrt() * jtj.diagonal().amax().sqrt() {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for d in 0..2 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.try_inverse().map(|inv| -(inv * jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = x + step;
            let r_trial = problem.residuals(&trial);
            let c_trial = cost_of(&r_trial);
            if c_trial.is_finite() && c_trial < cost {
                let decrease = (cost - c_trial) / cost.max(1e-300);
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if decrease < 1e-12 || step.amax() < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no decrease at any damping: stationary to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    LmResult {
        x,
        cost,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::generate_cycles;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn relative(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn linear_data_gives_exact_slope() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let phi: Vec<f64> = t.iter().map(|s| 0.2 * (7.0 * s).sin()).collect();
        let tau = phi.iter().map(|p| 15.0 * p).collect();
        let d = LoadingCycleData::new(t, phi, tau).unwrap();
        assert!((fit_stiffness(&d).unwrap() - 15.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_data_is_rejected() {
        let empty = LoadingCycleData::new(vec![], vec![], vec![]).unwrap();
        assert!(matches!(fit_stiffness(&empty), Err(Error::Degenerate(_))));
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let flat = LoadingCycleData::new(t, vec![0.0; 20], vec![1.0; 20]).unwrap();
        assert!(matches!(fit_stiffness(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn slope_of_hysteretic_data_is_near_stiffness() {
        let p = ActuatorParams::default();
        let d = generate_cycles(&p, 2.0, (-0.29, 0.29), 10, 1e-4).unwrap();
        // the hysteresis state grows with the deflection on each leg, which
        // biases the straight-line slope low by several percent
        let k = fit_stiffness(&d).unwrap();
        assert!(k < p.stiffness && relative(k, p.stiffness) < 0.1, "{k}");
        let few = generate_cycles(&p, 2.0, (-0.29, 0.29), 2, 1e-4).unwrap();
        assert!(relative(fit_stiffness(&few).unwrap(), k) < 0.01);
    }

    #[test]
    fn recovers_hysteresis_parameters() {
        let p = ActuatorParams::default();
        let d = generate_cycles(&p, 2.0, (-0.29, 0.29), 3, 1e-3).unwrap();
        let fit = fit_bouc_wen(&d, StiffnessFit::Free, &FitOptions::default()).unwrap();
        assert!(relative(fit.stiffness, p.stiffness) < 1e-3, "{fit:?}");
        assert!(relative(fit.alpha, p.alpha) < 0.01, "{fit:?}");
        assert!(relative(fit.beta, p.beta) < 0.01, "{fit:?}");
        assert!(relative(fit.gamma, p.gamma) < 0.01, "{fit:?}");
        assert!(fit.rss < 1e-6 * fit.rss_linear);
        let fixed = fit_bouc_wen(&d, StiffnessFit::Fixed(p.stiffness), &FitOptions::default()).unwrap();
        assert_eq!(fixed.stiffness, p.stiffness);
        assert!(relative(fixed.alpha, p.alpha) < 0.01, "{fixed:?}");
    }

    #[test]
    fn no_hysteresis_gains_nothing_over_linear() {
        let p = ActuatorParams {
            alpha: 0.0,
            ..ActuatorParams::default()
        };
        let d = generate_cycles(&p, 2.0, (-0.29, 0.29), 3, 1e-3).unwrap();
        let fit = fit_bouc_wen(&d, StiffnessFit::Free, &FitOptions::default()).unwrap();
        assert!(fit.rss_linear < 1e-20);
        assert!(fit.rss <= fit.rss_linear + 1e-20);
        assert!(fit.alpha.abs() < 1e-9, "{fit:?}");
    }

    #[test]
    fn tolerates_torque_noise() {
        let p = ActuatorParams::default();
        let mut d = generate_cycles(&p, 2.0, (-0.29, 0.29), 10, 1e-4).unwrap();
        let scale = d.tau.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let noise = Normal::new(0.0, 0.01 * scale).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for v in &mut d.tau {
            *v += noise.sample(&mut rng);
        }
        let fit = fit_bouc_wen(&d, StiffnessFit::Free, &FitOptions::default()).unwrap();
        assert!(relative(fit.alpha, p.alpha) < 0.15, "{fit:?}");
        assert!(relative(fit.beta, p.beta) < 0.15, "{fit:?}");
        assert!(relative(fit.gamma, p.gamma) < 0.15, "{fit:?}");
    }

    #[test]
    fn single_cycle_is_not_enough() {
        let d = generate_cycles(&ActuatorParams::default(), 2.0, (-0.29, 0.29), 1, 1e-3).unwrap();
        assert!(fit_bouc_wen(&d, StiffnessFit::Free, &FitOptions::default()).is_err());
    }
}
