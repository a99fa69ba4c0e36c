use nalgebra::Matrix2;

use super::{Boundary, CollocationConfig, FinalTime, PhasePlan, Scheme};
use crate::error::{Error, Result};
use crate::model::{smoothed_friction_derivs, ActuatorParams, Mode, ModeMaps};
use crate::nlp::{check_derivatives, DerivativeReport, NlpProblem};

/// `[theta, psi, q, psi_dot, q_dot]`; the hysteresis state is not modelled.
pub const OCP_STATE_DIM: usize = 5;
/// State plus control at each collocation point.
const POINT_DIM: usize = OCP_STATE_DIM + 1;
const U: usize = OCP_STATE_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Duration {
    Var(usize),
    Fixed(f64),
}

#[derive(Debug, Clone)]
struct PhaseLayout {
    mode: Mode,
    var_offset: usize,
    points: usize,
    duration: Duration,
    accel: Matrix2<f64>,
}

impl PhaseLayout {
    fn var(&self, point: usize, comp: usize) -> usize {
        self.var_offset + point * POINT_DIM + comp
    }
}

/// Residual `sum coef * x[point] + (T / N) sum weight * f(z[point])` over
/// the five state rows starting at `row`.
#[derive(Debug, Clone)]
struct DefectBlock {
    phase: usize,
    row: usize,
    linear: Vec<(usize, f64)>,
    dynamics: Vec<(usize, f64)>,
}

/// Transcribed optimal control problem.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub plan: PhasePlan,
    pub params: ActuatorParams,
    pub config: CollocationConfig,
    pub boundary: Boundary,
    phases: Vec<PhaseLayout>,
    blocks: Vec<DefectBlock>,
    /// first path row of each phase and the first point it covers
    path_rows: Vec<(usize, usize)>,
    link_row: usize,
    resets: Vec<Matrix2<f64>>,
    sum_row: Option<usize>,
    n_vars: usize,
    n_cons: usize,
    initial: [f64; OCP_STATE_DIM],
    jac_structure: Vec<(usize, usize)>,
    hess_structure: Vec<(usize, usize)>,
}

/// Builds the collocation NLP for `plan` from `boundary.initial`.
///
/// The initial state is projected onto the constraints of the first mode.
pub fn build_ocp(
    plan: &PhasePlan,
    params: &ActuatorParams,
    config: &CollocationConfig,
    boundary: &Boundary,
) -> Result<OcpProblem> {
    plan.validate()?;
    config.validate()?;
    params.validate()?;
    if !boundary.initial.is_finite() {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    for b in &boundary.terminal {
        if b.component >= OCP_STATE_DIM || b.lo.is_nan() || b.hi.is_nan() || b.lo > b.hi {
            return Err(Error::InvalidInput(format!(
                "terminal bound on component {} is inconsistent",
                b.component
            )));
        }
    }
    let first = plan.modes[0];
    let x0 = ModeMaps::new(first, params.j_psi, params.j_q)?.reset * boundary.initial.xi_dot();
    let initial = [
        boundary.initial.theta,
        boundary.initial.psi,
        boundary.initial.q,
        x0[0],
        x0[1],
    ];
    if initial[0].abs() > params.theta_range {
        return Err(Error::InvalidInput(format!(
            "initial motor angle {} outside +-{}",
            initial[0], params.theta_range
        )));
    }

    let n = config.segments_per_phase;
    let points = match config.scheme {
        Scheme::Trapezoidal => n + 1,
        Scheme::HermiteSimpson => 2 * n + 1,
    };
    let n_phases = plan.modes.len();
    let durations_are_vars = !(n_phases == 1 && matches!(plan.final_time, FinalTime::Fixed(_)));
    let phase_vars = points * POINT_DIM;
    let n_state_vars = n_phases * phase_vars;

    let mut phases = Vec::with_capacity(n_phases);
    for (p, &mode) in plan.modes.iter().enumerate() {
        let duration = if durations_are_vars {
            Duration::Var(n_state_vars + p)
        } else {
            Duration::Fixed(plan.final_time.upper())
        };
        phases.push(PhaseLayout {
            mode,
            var_offset: p * phase_vars,
            points,
            duration,
            accel: ModeMaps::new(mode, params.j_psi, params.j_q)?.accel,
        });
    }
    let n_vars = n_state_vars + if durations_are_vars { n_phases } else { 0 };

    let mut row = 0;
    let mut blocks = Vec::new();
    let mut path_rows = Vec::new();
    for p in 0..n_phases {
        for k in 0..n {
            match config.scheme {
                Scheme::Trapezoidal => {
                    blocks.push(DefectBlock {
                        phase: p,
                        row,
                        linear: vec![(k + 1, 1.0), (k, -1.0)],
                        dynamics: vec![(k, -0.5), (k + 1, -0.5)],
                    });
                    row += OCP_STATE_DIM;
                }
                Scheme::HermiteSimpson => {
                    let (a, m, b) = (2 * k, 2 * k + 1, 2 * k + 2);
                    blocks.push(DefectBlock {
                        phase: p,
                        row,
                        linear: vec![(m, 1.0), (a, -0.5), (b, -0.5)],
                        dynamics: vec![(a, -0.125), (b, 0.125)],
                    });
                    row += OCP_STATE_DIM;
                    blocks.push(DefectBlock {
                        phase: p,
                        row,
                        linear: vec![(b, 1.0), (a, -1.0)],
                        dynamics: vec![(a, -1.0 / 6.0), (m, -4.0 / 6.0), (b, -1.0 / 6.0)],
                    });
                    row += OCP_STATE_DIM;
                }
            }
        }
        // the initial point is fixed, so its deflection row would be constant
        let first_point = usize::from(p == 0);
        path_rows.push((row, first_point));
        row += points - first_point;
    }
    let link_row = row;
    let mut resets = Vec::new();
    for p in 1..n_phases {
        resets.push(ModeMaps::new(plan.modes[p], params.j_psi, params.j_q)?.reset);
        row += OCP_STATE_DIM;
    }
    let sum_row = if durations_are_vars {
        row += 1;
        Some(row - 1)
    } else {
        None
    };

    let mut ocp = OcpProblem {
        plan: plan.clone(),
        params: *params,
        config: config.clone(),
        boundary: boundary.clone(),
        phases,
        blocks,
        path_rows,
        link_row,
        resets,
        sum_row,
        n_vars,
        n_cons: row,
        initial,
        jac_structure: Vec::new(),
        hess_structure: Vec::new(),
    };
    let probe = vec![0.0; n_vars];
    let mut js = Vec::new();
    ocp.walk_jacobian(&probe, |r, c, _| js.push((r, c)));
    let mut hs = Vec::new();
    ocp.walk_hessian(&probe, 0.0, &vec![0.0; ocp.n_cons], |r, c, _| hs.push((r, c)));
    ocp.jac_structure = js;
    ocp.hess_structure = hs;
    Ok(ocp)
}

/// Dynamics at one collocation point with first derivatives and the
/// nonzero second derivatives of the two applied torques.
struct PointEval {
    f: [f64; OCP_STATE_DIM],
    /// derivatives of the applied torques `F1`, `F2` w.r.t. the point
    d_f1: [f64; POINT_DIM],
    d_f2: [f64; POINT_DIM],
    /// `d2 F1 / d psi_dot^2`, `d2 F2 / d q^2`, `d2 F2 / d q_dot^2`
    dd_f1_psidot: f64,
    dd_f2_q: f64,
    dd_f2_qdot: f64,
}

impl OcpProblem {
    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn points_per_phase(&self) -> usize {
        self.phases[0].points
    }

    /// Index of component `comp` (0..5 state, 5 control) at `point` of `phase`.
    pub fn var_index(&self, phase: usize, point: usize, comp: usize) -> usize {
        self.phases[phase].var(point, comp)
    }

    /// Index of the duration variable of `phase`, if durations are free.
    pub fn duration_index(&self, phase: usize) -> Option<usize> {
        match self.phases[phase].duration {
            Duration::Var(i) => Some(i),
            Duration::Fixed(_) => None,
        }
    }

    pub fn phase_duration(&self, x: &[f64], phase: usize) -> f64 {
        match self.phases[phase].duration {
            Duration::Var(i) => x[i],
            Duration::Fixed(t) => t,
        }
    }

    pub fn mode(&self, phase: usize) -> Mode {
        self.phases[phase].mode
    }

    /// Projected initial OCP state.
    pub fn initial_state(&self) -> [f64; OCP_STATE_DIM] {
        self.initial
    }

    pub fn final_q_dot_index(&self) -> usize {
        let last = self.phases.len() - 1;
        self.var_index(last, self.phases[last].points - 1, super::component::Q_DOT)
    }

    pub fn point(&self, x: &[f64], phase: usize, point: usize) -> [f64; POINT_DIM] {
        let base = self.phases[phase].var(point, 0);
        std::array::from_fn(|c| x[base + c])
    }

    /// OCP vector field in `phase` at `z = [x, u]`.
    pub fn vector_field(&self, phase: usize, z: &[f64; POINT_DIM]) -> [f64; OCP_STATE_DIM] {
        self.eval_point(phase, z).f
    }

    /// Velocity reset applied when entering `phase` (> 0).
    pub fn reset_map(&self, phase: usize) -> Matrix2<f64> {
        self.resets[phase - 1]
    }

    fn eval_point(&self, phase: usize, z: &[f64; POINT_DIM]) -> PointEval {
        let p = &self.params;
        let a = &self.phases[phase].accel;
        let (fp, dfp, ddfp) = smoothed_friction_derivs(z[3], p.tau_c_psi, p.d_psi, p.eps_sign);
        let (fq, dfq, ddfq) = smoothed_friction_derivs(z[4], p.tau_c_q, p.d_q, p.eps_sign);
        let mgl = p.gravity_torque();
        let (sq, cq) = z[2].sin_cos();
        let f1 = p.stiffness * (z[0] - z[1]) - fp;
        let f2 = -mgl * sq - fq;
        PointEval {
            f: [
                z[U],
                z[3],
                z[4],
                a[(0, 0)] * f1 + a[(0, 1)] * f2,
                a[(1, 0)] * f1 + a[(1, 1)] * f2,
            ],
            d_f1: [p.stiffness, -p.stiffness, 0.0, -dfp, 0.0, 0.0],
            d_f2: [0.0, 0.0, -mgl * cq, 0.0, -dfq, 0.0],
            dd_f1_psidot: -ddfp,
            dd_f2_q: mgl * sq,
            dd_f2_qdot: -ddfq,
        }
    }

    /// Derivative of row `r` of the vector field w.r.t. point component `c`.
    fn df(&self, phase: usize, e: &PointEval, r: usize, c: usize) -> f64 {
        let a = &self.phases[phase].accel;
        match r {
            0 => f64::from(c == U),
            1 => f64::from(c == 3),
            2 => f64::from(c == 4),
            _ => a[(r - 3, 0)] * e.d_f1[c] + a[(r - 3, 1)] * e.d_f2[c],
        }
    }

    /// Columns of the point that row `r` of the vector field depends on.
    fn df_columns(r: usize) -> &'static [usize] {
        match r {
            0 => &[U],
            1 => &[3],
            2 => &[4],
            _ => &[0, 1, 2, 3, 4],
        }
    }

    fn segments(&self) -> f64 {
        self.config.segments_per_phase as f64
    }

    fn eval_constraints(&self, x: &[f64], c: &mut [f64]) {
        let n = self.segments();
        let mut cache: Vec<Vec<Option<[f64; OCP_STATE_DIM]>>> =
            self.phases.iter().map(|ph| vec![None; ph.points]).collect();
        for b in &self.blocks {
            let ph = &self.phases[b.phase];
            let t = self.phase_duration(x, b.phase);
            for r in 0..OCP_STATE_DIM {
                c[b.row + r] = 0.0;
            }
            for &(pt, coef) in &b.linear {
                for r in 0..OCP_STATE_DIM {
                    c[b.row + r] += coef * x[ph.var(pt, r)];
                }
            }
            for &(pt, w) in &b.dynamics {
                let f = *cache[b.phase][pt].get_or_insert_with(|| self.vector_field(b.phase, &self.point(x, b.phase, pt)));
                for r in 0..OCP_STATE_DIM {
                    c[b.row + r] += t / n * w * f[r];
                }
            }
        }
        for (p, &(row, first)) in self.path_rows.iter().enumerate() {
            let ph = &self.phases[p];
            for (k, pt) in (first..ph.points).enumerate() {
                c[row + k] = x[ph.var(pt, 0)] - x[ph.var(pt, 1)];
            }
        }
        for p in 1..self.phases.len() {
            let (prev, next) = (&self.phases[p - 1], &self.phases[p]);
            let last = prev.points - 1;
            let row = self.link_row + (p - 1) * OCP_STATE_DIM;
            let r = &self.resets[p - 1];
            for comp in 0..3 {
                c[row + comp] = x[next.var(0, comp)] - x[prev.var(last, comp)];
            }
            for i in 0..2 {
                c[row + 3 + i] = x[next.var(0, 3 + i)]
                    - r[(i, 0)] * x[prev.var(last, 3)]
                    - r[(i, 1)] * x[prev.var(last, 4)];
            }
        }
        if let Some(row) = self.sum_row {
            c[row] = (0..self.phases.len()).map(|p| self.phase_duration(x, p)).sum();
        }
    }

    /// Emits Jacobian entries; the sequence of positions never depends on `x`.
    fn walk_jacobian(&self, x: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let n = self.segments();
        for b in &self.blocks {
            let ph = &self.phases[b.phase];
            let t = self.phase_duration(x, b.phase);
            for &(pt, coef) in &b.linear {
                for r in 0..OCP_STATE_DIM {
                    emit(b.row + r, ph.var(pt, r), coef);
                }
            }
            let mut d_t = [0.0; OCP_STATE_DIM];
            for &(pt, w) in &b.dynamics {
                let e = self.eval_point(b.phase, &self.point(x, b.phase, pt));
                for r in 0..OCP_STATE_DIM {
                    d_t[r] += w * e.f[r] / n;
                    for &col in Self::df_columns(r) {
                        emit(b.row + r, ph.var(pt, col), t / n * w * self.df(b.phase, &e, r, col));
                    }
                }
            }
            if let Duration::Var(ti) = ph.duration {
                for r in 0..OCP_STATE_DIM {
                    emit(b.row + r, ti, d_t[r]);
                }
            }
        }
        for (p, &(row, first)) in self.path_rows.iter().enumerate() {
            let ph = &self.phases[p];
            for (k, pt) in (first..ph.points).enumerate() {
                emit(row + k, ph.var(pt, 0), 1.0);
                emit(row + k, ph.var(pt, 1), -1.0);
            }
        }
        for p in 1..self.phases.len() {
            let (prev, next) = (&self.phases[p - 1], &self.phases[p]);
            let last = prev.points - 1;
            let row = self.link_row + (p - 1) * OCP_STATE_DIM;
            let r = &self.resets[p - 1];
            for comp in 0..OCP_STATE_DIM {
                emit(row + comp, next.var(0, comp), 1.0);
            }
            for comp in 0..3 {
                emit(row + comp, prev.var(last, comp), -1.0);
            }
            for i in 0..2 {
                for j in 0..2 {
                    emit(row + 3 + i, prev.var(last, 3 + j), -r[(i, j)]);
                }
            }
        }
        if let Some(row) = self.sum_row {
            for ph in &self.phases {
                if let Duration::Var(ti) = ph.duration {
                    emit(row, ti, 1.0);
                }
            }
        }
    }

    /// Emits lower-triangular Hessian entries of `sigma J + lambda^T c`.
    /// The objective is linear, so only the defects contribute.
    fn walk_hessian(&self, x: &[f64], _sigma: f64, lambda: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let n = self.segments();
        // multiplier-weighted sums per collocation point
        let mut mu: Vec<Vec<[f64; OCP_STATE_DIM]>> =
            self.phases.iter().map(|ph| vec![[0.0; OCP_STATE_DIM]; ph.points]).collect();
        let mut used: Vec<Vec<bool>> = self.phases.iter().map(|ph| vec![false; ph.points]).collect();
        for b in &self.blocks {
            for &(pt, w) in &b.dynamics {
                used[b.phase][pt] = true;
                for r in 0..OCP_STATE_DIM {
                    mu[b.phase][pt][r] += w / n * lambda[b.row + r];
                }
            }
        }
        for (p, ph) in self.phases.iter().enumerate() {
            let t = self.phase_duration(x, p);
            let a = &ph.accel;
            for pt in 0..ph.points {
                if !used[p][pt] {
                    continue;
                }
                let m = mu[p][pt];
                let e = self.eval_point(p, &self.point(x, p, pt));
                let w1 = m[3] * a[(0, 0)] + m[4] * a[(1, 0)];
                let w2 = m[3] * a[(0, 1)] + m[4] * a[(1, 1)];
                emit(ph.var(pt, 2), ph.var(pt, 2), t * w2 * e.dd_f2_q);
                emit(ph.var(pt, 3), ph.var(pt, 3), t * w1 * e.dd_f1_psidot);
                emit(ph.var(pt, 4), ph.var(pt, 4), t * w2 * e.dd_f2_qdot);
                if let Duration::Var(ti) = ph.duration {
                    for c in 0..POINT_DIM {
                        let mut v = w1 * e.d_f1[c] + w2 * e.d_f2[c];
                        match c {
                            U => v += m[0],
                            3 => v += m[1],
                            4 => v += m[2],
                            _ => {}
                        }
                        emit(ti, ph.var(pt, c), v);
                    }
                }
            }
        }
    }

    /// Defect residuals only, for auditing a returned solution.
    pub fn defect_residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_cons];
        self.eval_constraints(x, &mut c);
        self.blocks
            .iter()
            .flat_map(|b| (0..OCP_STATE_DIM).map(move |r| b.row + r))
            .map(|i| c[i])
            .collect()
    }

    /// Compares analytic derivatives with central differences at `x`.
    pub fn check_derivatives(&self, x: &[f64], lambda: &[f64], eps: f64) -> DerivativeReport {
        check_derivatives(self, x, lambda, eps)
    }

    /// Initial guess: states interpolated linearly from the initial state to
    /// a slightly perturbed copy, zero control, equal durations at mid-bounds.
    pub fn default_guess(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars];
        let mut target = self.initial;
        target[super::component::Q_DOT] += 1e-2;
        let total_points: usize = self.phases.iter().map(|p| p.points).sum::<usize>() - 1;
        let mut k = 0usize;
        for ph in &self.phases {
            for pt in 0..ph.points {
                let s = k as f64 / total_points.max(1) as f64;
                for c in 0..OCP_STATE_DIM {
                    x[ph.var(pt, c)] = self.initial[c] + s * (target[c] - self.initial[c]);
                }
                if pt + 1 < ph.points {
                    k += 1;
                }
            }
        }
        for (p, d) in self.mid_durations().into_iter().enumerate() {
            if let Duration::Var(i) = self.phases[p].duration {
                x[i] = d;
            }
        }
        x
    }

    /// Equal durations summing to the middle of the admissible final time,
    /// clamped to the per-phase bounds.
    pub fn mid_durations(&self) -> Vec<f64> {
        let total = match self.plan.final_time {
            FinalTime::Fixed(t) => t,
            FinalTime::Free { lo, hi } => 0.5 * (lo + hi),
        };
        let n = self.phases.len() as f64;
        self.plan
            .duration_bounds
            .iter()
            .map(|&(lo, hi)| (total / n).clamp(lo, hi))
            .collect()
    }
}

impl NlpProblem for OcpProblem {
    fn num_vars(&self) -> usize {
        self.n_vars
    }

    fn num_cons(&self) -> usize {
        self.n_cons
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let mut lo = vec![f64::NEG_INFINITY; self.n_vars];
        let mut hi = vec![f64::INFINITY; self.n_vars];
        for ph in &self.phases {
            for pt in 0..ph.points {
                lo[ph.var(pt, 0)] = -p.theta_range;
                hi[ph.var(pt, 0)] = p.theta_range;
                lo[ph.var(pt, U)] = -p.u_max;
                hi[ph.var(pt, U)] = p.u_max;
            }
        }
        for c in 0..OCP_STATE_DIM {
            let i = self.phases[0].var(0, c);
            lo[i] = self.initial[c];
            hi[i] = self.initial[c];
        }
        let last = self.phases.last().expect("plan is non-empty");
        for b in &self.boundary.terminal {
            let i = last.var(last.points - 1, b.component);
            lo[i] = lo[i].max(b.lo);
            hi[i] = hi[i].min(b.hi);
            if lo[i] > hi[i] {
                // keep the bounds ordered; the problem is infeasible anyway
                hi[i] = lo[i];
            }
        }
        for (ph, &(dlo, dhi)) in self.phases.iter().zip(&self.plan.duration_bounds) {
            if let Duration::Var(i) = ph.duration {
                lo[i] = dlo;
                hi[i] = dhi;
            }
        }
        (lo, hi)
    }

    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![0.0; self.n_cons];
        let mut hi = vec![0.0; self.n_cons];
        let phi = self.params.phi_max;
        for (p, &(row, first)) in self.path_rows.iter().enumerate() {
            for k in 0..self.phases[p].points - first {
                lo[row + k] = -phi;
                hi[row + k] = phi;
            }
        }
        if let Some(row) = self.sum_row {
            let (a, b) = match self.plan.final_time {
                FinalTime::Fixed(t) => (t, t),
                FinalTime::Free { lo, hi } => (lo, hi),
            };
            lo[row] = a;
            hi[row] = b;
        }
        (lo, hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.default_guess()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        -self.config.objective_scale * self.boundary.direction.sign() * x[self.final_q_dot_index()]
    }

    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        grad[self.final_q_dot_index()] = -self.config.objective_scale * self.boundary.direction.sign();
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        self.eval_constraints(x, c);
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_structure.clone()
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.walk_jacobian(x, |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_structure.clone()
    }

    fn hessian_values(&self, x: &[f64], sigma: f64, lambda: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.walk_hessian(x, sigma, lambda, |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }
}
