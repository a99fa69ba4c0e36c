//! Primal-dual interior-point method with an l1 merit line search.
//!
//! Inequality rows get slack variables and fixed variables are removed, so
//! internally the problem is `min f(w) s.t. c(w) = 0, w_lo <= w <= w_hi`.
//! Newton steps come from the regularized KKT system; regularization is
//! raised until the step has positive curvature along itself.

use log::debug;
use serde::{Deserialize, Serialize};

use super::kkt::KktStructure;
use super::NlpProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOptions {
    /// Tolerance on the scaled optimality error and on the constraint violation.
    pub tol: f64,
    pub acceptable_tol: f64,
    pub acceptable_iter: usize,
    pub max_iter: usize,
    pub mu_init: f64,
    pub bound_push: f64,
    /// Gradients larger than this are scaled down at the starting point.
    pub max_gradient: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-6,
            acceptable_tol: 1e-4,
            acceptable_iter: 15,
            max_iter: 3000,
            mu_init: 0.1,
            bound_push: 1e-2,
            max_gradient: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    /// Stalled at the looser acceptable tolerance while feasible.
    Acceptable,
    MaxIterations,
    LocallyInfeasible,
    LineSearchFailed,
    NumericalError,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::Acceptable)
    }
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Constraint multipliers in the sign convention `grad f + J^T lambda - z_lo + z_hi = 0`.
    pub lambda: Vec<f64>,
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
    /// Largest violation of the constraint rows and bounds.
    pub constraint_violation: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

const KAPPA_SIGMA: f64 = 1e10;
const ARMIJO: f64 = 1e-4;
const MAX_SOC: usize = 4;

/// The slack-reformulated, scaled problem.
struct Internal<'a, P: ?Sized> {
    p: &'a P,
    n_user: usize,
    m: usize,
    /// user index of each free variable
    free: Vec<usize>,
    x_template: Vec<f64>,
    /// rows with `lo < hi` own a slack `w[nf + k]`
    slack_of_row: Vec<Option<usize>>,
    eq_rhs: Vec<f64>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
    jac_user: Vec<(usize, usize)>,
    /// internal position of user Jacobian entries, `None` for fixed columns
    jac_map: Vec<Option<usize>>,
    /// internal Jacobian structure (user part first, then slack entries)
    jac: Vec<(usize, usize)>,
    hess_user: Vec<(usize, usize)>,
    /// lower-triangular internal position of user Hessian entries
    hess_map: Vec<Option<(usize, usize)>>,
    obj_scale: f64,
    row_scale: Vec<f64>,
}

impl<'a, P: NlpProblem + ?Sized> Internal<'a, P> {
    fn new(p: &'a P) -> Internal<'a, P> {
        let n_user = p.num_vars();
        let m = p.num_cons();
        let (xl, xu) = p.var_bounds();
        let (cl, cu) = p.con_bounds();
        let mut col_of = vec![None; n_user];
        let mut free = Vec::new();
        let mut x_template = vec![0.0; n_user];
        let mut w_lo = Vec::new();
        let mut w_hi = Vec::new();
        for j in 0..n_user {
            if xl[j] == xu[j] {
                x_template[j] = xl[j];
            } else {
                col_of[j] = Some(free.len());
                free.push(j);
                w_lo.push(xl[j]);
                w_hi.push(xu[j]);
            }
        }
        let nf = free.len();
        let mut slack_of_row = vec![None; m];
        let mut eq_rhs = vec![0.0; m];
        let mut n_slack = 0;
        for i in 0..m {
            if cl[i] == cu[i] {
                eq_rhs[i] = cl[i];
            } else {
                slack_of_row[i] = Some(nf + n_slack);
                n_slack += 1;
                w_lo.push(cl[i]);
                w_hi.push(cu[i]);
            }
        }
        let jac_user = p.jacobian_structure();
        let mut jac = Vec::new();
        let mut jac_map = Vec::with_capacity(jac_user.len());
        for &(i, j) in &jac_user {
            match col_of[j] {
                Some(c) => {
                    jac_map.push(Some(jac.len()));
                    jac.push((i, c));
                }
                None => jac_map.push(None),
            }
        }
        for (i, s) in slack_of_row.iter().enumerate() {
            if let Some(k) = s {
                jac.push((i, *k));
            }
        }
        let hess_user = p.hessian_structure();
        let hess_map = hess_user
            .iter()
            .map(|&(i, j)| match (col_of[i], col_of[j]) {
                (Some(a), Some(b)) => Some((a.max(b), a.min(b))),
                _ => None,
            })
            .collect();
        Internal {
            p,
            n_user,
            m,
            free,
            x_template,
            slack_of_row,
            eq_rhs,
            w_lo,
            w_hi,
            jac_user,
            jac_map,
            jac,
            hess_user,
            hess_map,
            obj_scale: 1.0,
            row_scale: vec![1.0; m],
        }
    }

    fn n(&self) -> usize {
        self.w_lo.len()
    }

    fn x_of(&self, w: &[f64]) -> Vec<f64> {
        let mut x = self.x_template.clone();
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = w[k];
        }
        x
    }

    fn set_scaling(&mut self, w: &[f64], max_gradient: f64) {
        let x = self.x_of(w);
        let mut g = vec![0.0; self.n_user];
        self.p.gradient(&x, &mut g);
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax.is_finite() && gmax > max_gradient {
            self.obj_scale = max_gradient / gmax;
        }
        let mut vals = vec![0.0; self.jac_user.len()];
        self.p.jacobian_values(&x, &mut vals);
        let mut rmax = vec![0.0f64; self.m];
        for (&(i, _), v) in self.jac_user.iter().zip(&vals) {
            rmax[i] = rmax[i].max(v.abs());
        }
        for i in 0..self.m {
            if rmax[i].is_finite() && rmax[i] > max_gradient {
                self.row_scale[i] = max_gradient / rmax[i];
            }
        }
    }

    fn objective(&self, w: &[f64]) -> f64 {
        self.obj_scale * self.p.objective(&self.x_of(w))
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut gu = vec![0.0; self.n_user];
        self.p.gradient(&self.x_of(w), &mut gu);
        let mut g = vec![0.0; self.n()];
        for (k, &j) in self.free.iter().enumerate() {
            g[k] = self.obj_scale * gu[j];
        }
        g
    }

    /// Scaled residuals and the raw user constraint values.
    fn constraints(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = vec![0.0; self.m];
        self.p.constraints(&self.x_of(w), &mut g);
        let c = (0..self.m)
            .map(|i| {
                let target = match self.slack_of_row[i] {
                    Some(k) => w[k],
                    None => self.eq_rhs[i],
                };
                self.row_scale[i] * (g[i] - target)
            })
            .collect();
        (c, g)
    }

    fn jacobian(&self, w: &[f64]) -> Vec<f64> {
        let mut vu = vec![0.0; self.jac_user.len()];
        self.p.jacobian_values(&self.x_of(w), &mut vu);
        let mut v = vec![0.0; self.jac.len()];
        for (e, &(i, _)) in self.jac_user.iter().enumerate() {
            if let Some(pos) = self.jac_map[e] {
                v[pos] += self.row_scale[i] * vu[e];
            }
        }
        let mut pos = self.jac_map.iter().flatten().count();
        for i in 0..self.m {
            if self.slack_of_row[i].is_some() {
                v[pos] = -self.row_scale[i];
                pos += 1;
            }
        }
        v
    }

    /// Lower-triangular Hessian entries of the scaled Lagrangian.
    fn hessian(&self, w: &[f64], y: &[f64]) -> Vec<(usize, usize, f64)> {
        let lambda: Vec<f64> = y.iter().zip(&self.row_scale).map(|(a, b)| a * b).collect();
        let mut vals = vec![0.0; self.hess_user.len()];
        self.p.hessian_values(&self.x_of(w), self.obj_scale, &lambda, &mut vals);
        self.hess_map
            .iter()
            .zip(vals)
            .filter_map(|(pos, v)| pos.map(|(r, c)| (r, c, v)))
            .collect()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Moves `v` strictly inside `[lo, hi]`.
fn push_inside(v: f64, lo: f64, hi: f64, push: f64) -> f64 {
    let mut v = v;
    let width = hi - lo;
    if lo.is_finite() {
        let pl = (push * lo.abs().max(1.0)).min(if hi.is_finite() { push * width } else { f64::INFINITY });
        v = v.max(lo + pl);
    }
    if hi.is_finite() {
        let pu = (push * hi.abs().max(1.0)).min(if lo.is_finite() { push * width } else { f64::INFINITY });
        v = v.min(hi - pu);
    }
    v
}

struct Iterate {
    w: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
    g_user: Vec<f64>,
    jac: Vec<f64>,
}

/// Solves `problem` from its initial point.
pub fn solve<P: NlpProblem + ?Sized>(problem: &P, opts: &IpmOptions) -> NlpSolution {
    solve_from(problem, &problem.initial_point(), opts)
}

/// Solves `problem` from `x0`.
pub fn solve_from<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], opts: &IpmOptions) -> NlpSolution {
    let mut nlp = Internal::new(problem);
    let n = nlp.n();
    let m = nlp.m;
    let nf = nlp.free.len();
    let has_lo: Vec<bool> = nlp.w_lo.iter().map(|v| v.is_finite()).collect();
    let has_hi: Vec<bool> = nlp.w_hi.iter().map(|v| v.is_finite()).collect();

    // starting point
    let mut w = vec![0.0; n];
    for (k, &j) in nlp.free.iter().enumerate() {
        w[k] = push_inside(x0[j], nlp.w_lo[k], nlp.w_hi[k], opts.bound_push);
    }
    {
        let mut g0 = vec![0.0; m];
        problem.constraints(&nlp.x_of(&w), &mut g0);
        for i in 0..m {
            if let Some(k) = nlp.slack_of_row[i] {
                let v = if g0[i].is_finite() { g0[i] } else { 0.0 };
                w[k] = push_inside(v, nlp.w_lo[k], nlp.w_hi[k], opts.bound_push);
            }
        }
    }
    nlp.set_scaling(&w, opts.max_gradient);

    // KKT pattern over [w; y]
    let hess_pattern: Vec<(usize, usize)> = nlp.hess_map.iter().flatten().copied().collect();
    let mut pattern: Vec<(usize, usize)> = hess_pattern.iter().filter(|(r, c)| r != c).copied().collect();
    pattern.extend(nlp.jac.iter().map(|&(i, j)| (n + i, j)));
    let structure = KktStructure::analyze(n + m, &pattern);
    debug!(
        "ipm: {} vars ({} free), {} rows, bandwidth {}, border {}",
        nlp.n_user,
        nf,
        m,
        structure.bandwidth(),
        structure.border_size()
    );

    let mask = |v: &mut Vec<f64>, has: &[bool]| {
        for (x, &h) in v.iter_mut().zip(has) {
            if !h {
                *x = 0.0;
            }
        }
    };
    let mut zl = vec![1.0; n];
    let mut zu = vec![1.0; n];
    mask(&mut zl, &has_lo);
    mask(&mut zu, &has_hi);

    let f0 = nlp.objective(&w);
    let grad0 = nlp.gradient(&w);
    let (c0, g0) = nlp.constraints(&w);
    let jac0 = nlp.jacobian(&w);
    if !f0.is_finite() || grad0.iter().chain(&c0).chain(&jac0).any(|v| !v.is_finite()) {
        return finish(&nlp, &w, &vec![0.0; m], &zl, &zu, SolveStatus::NumericalError, 0, f64::NAN);
    }

    // least-squares multiplier estimate
    let mut y = vec![0.0; m];
    if m > 0 {
        let mut entries: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        entries.extend(nlp.jac.iter().zip(&jac0).map(|(&(i, j), &v)| (n + i, j, v)));
        entries.extend((0..m).map(|i| (n + i, n + i, 0.0)));
        if let Ok(f) = structure.factor(&entries, true) {
            let mut rhs = vec![0.0; n + m];
            for j in 0..n {
                rhs[j] = -(grad0[j] - zl[j] + zu[j]);
            }
            let sol = f.solve(&rhs);
            let cand = &sol[n..];
            if cand.iter().all(|v| v.is_finite()) && inf_norm(cand) <= 1e3 {
                y.copy_from_slice(cand);
            }
        }
    }

    let mut it = Iterate {
        w,
        y,
        zl,
        zu,
        f: f0,
        grad: grad0,
        c: c0,
        g_user: g0,
        jac: jac0,
    };

    let mut mu = opts.mu_init;
    let mu_min = opts.tol / 10.0;
    let mut nu = 1.0f64;
    let mut delta_w_last = 0.0f64;
    let mut acceptable_count = 0;
    let mut ls_failures = 0;
    let mut force_reg = 0.0f64;
    let mut force_mu_decrease = false;

    let s_max = 100.0;
    for iter in 0..=opts.max_iter {
        let w = &it.w;
        let sl: Vec<f64> = (0..n).map(|j| if has_lo[j] { w[j] - nlp.w_lo[j] } else { 1.0 }).collect();
        let su: Vec<f64> = (0..n).map(|j| if has_hi[j] { nlp.w_hi[j] - w[j] } else { 1.0 }).collect();

        // Jt y
        let mut jty = vec![0.0; n];
        for (&(i, j), v) in nlp.jac.iter().zip(&it.jac) {
            jty[j] += v * it.y[i];
        }
        let grad_lag: Vec<f64> = (0..n).map(|j| it.grad[j] + jty[j] - it.zl[j] + it.zu[j]).collect();
        let z_sum = one_norm(&it.zl) + one_norm(&it.zu);
        let n_bounds = has_lo.iter().chain(&has_hi).filter(|&&h| h).count();
        let s_d = ((one_norm(&it.y) + z_sum) / ((m + n_bounds).max(1) as f64)).max(s_max) / s_max;
        let s_c = (z_sum / (n_bounds.max(1) as f64)).max(s_max) / s_max;
        let dual_inf = inf_norm(&grad_lag);
        let primal_inf = inf_norm(&it.c);
        let compl = |target: f64| {
            (0..n).fold(0.0f64, |a, j| {
                let mut v = a;
                if has_lo[j] {
                    v = v.max((sl[j] * it.zl[j] - target).abs());
                }
                if has_hi[j] {
                    v = v.max((su[j] * it.zu[j] - target).abs());
                }
                v
            })
        };
        let err0 = (dual_inf / s_d).max(primal_inf).max(compl(0.0) / s_c);
        let raw_viol = (0..m)
            .map(|i| (it.c[i] / nlp.row_scale[i]).abs())
            .fold(0.0f64, f64::max);

        debug!(
            "ipm {iter:4} f={:.6e} inf_pr={primal_inf:.2e} inf_du={dual_inf:.2e} mu={mu:.1e} nu={nu:.1e} dw_reg={delta_w_last:.1e}",
            it.f / nlp.obj_scale
        );

        if err0 <= opts.tol && raw_viol <= opts.tol {
            return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, SolveStatus::Converged, iter, dual_inf);
        }
        if err0 <= opts.acceptable_tol && raw_viol <= opts.tol {
            acceptable_count += 1;
            if acceptable_count >= opts.acceptable_iter {
                return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, SolveStatus::Acceptable, iter, dual_inf);
            }
        } else {
            acceptable_count = 0;
        }
        if iter == opts.max_iter {
            return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, SolveStatus::MaxIterations, iter, dual_inf);
        }

        // barrier parameter
        loop {
            let err_mu = (dual_inf / s_d).max(primal_inf).max(compl(mu) / s_c);
            if (err_mu <= 10.0 * mu || force_mu_decrease) && mu > mu_min {
                mu = mu_min.max((0.2 * mu).min(mu.powf(1.5)));
                force_mu_decrease = false;
            } else {
                break;
            }
        }
        let tau = (1.0 - mu).max(0.99);

        // barrier gradient and KKT assembly
        let sigma: Vec<f64> = (0..n)
            .map(|j| {
                let mut s = 0.0;
                if has_lo[j] {
                    s += it.zl[j] / sl[j];
                }
                if has_hi[j] {
                    s += it.zu[j] / su[j];
                }
                s
            })
            .collect();
        let grad_phi: Vec<f64> = (0..n)
            .map(|j| {
                let mut g = it.grad[j];
                if has_lo[j] {
                    g -= mu / sl[j];
                }
                if has_hi[j] {
                    g += mu / su[j];
                }
                g
            })
            .collect();
        let hess = nlp.hessian(&it.w, &it.y);
        if hess.iter().any(|e| !e.2.is_finite()) {
            return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, SolveStatus::NumericalError, iter, dual_inf);
        }
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            rhs[j] = -(grad_phi[j] + jty[j]);
        }
        for i in 0..m {
            rhs[n + i] = -it.c[i];
        }

        let mut delta_w = force_reg;
        let mut delta_c = 0.0;
        let mut first_try = true;
        let (dw, dy, quad, factor_entries) = loop {
            let mut entries: Vec<(usize, usize, f64)> = hess.clone();
            entries.extend((0..n).map(|j| (j, j, sigma[j] + delta_w)));
            let n_w_entries = entries.len();
            entries.extend(nlp.jac.iter().zip(&it.jac).map(|(&(i, j), &v)| (n + i, j, v)));
            entries.extend((0..m).map(|i| (n + i, n + i, -delta_c)));
            let solved = structure.factor(&entries, true).ok().map(|f| f.solve(&rhs));
            let ok = solved.as_ref().is_some_and(|s| s.iter().all(|v| v.is_finite()));
            if ok {
                let sol = solved.unwrap_or_default();
                let dw = sol[..n].to_vec();
                let dy = sol[n..].to_vec();
                let mut quad = 0.0;
                for &(r, c, v) in &entries[..n_w_entries] {
                    quad += if r == c { v * dw[r] * dw[r] } else { 2.0 * v * dw[r] * dw[c] };
                }
                let curvature = quad + delta_c * dot(&dy, &dy);
                if curvature >= 1e-10 * dot(&dw, &dw) {
                    break (dw, dy, quad, entries);
                }
            } else if delta_c == 0.0 {
                delta_c = 1e-8 * mu.powf(0.25);
                if first_try {
                    first_try = false;
                    continue;
                }
            }
            first_try = false;
            delta_w = if delta_w == 0.0 {
                if delta_w_last == 0.0 {
                    1e-4
                } else {
                    (delta_w_last / 3.0).max(1e-20)
                }
            } else if delta_w_last == 0.0 {
                100.0 * delta_w
            } else {
                8.0 * delta_w
            };
            if delta_w > 1e40 {
                return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, SolveStatus::NumericalError, iter, dual_inf);
            }
        };
        if delta_w > 0.0 {
            delta_w_last = delta_w;
        }

        let dzl: Vec<f64> = (0..n)
            .map(|j| if has_lo[j] { mu / sl[j] - it.zl[j] - it.zl[j] * dw[j] / sl[j] } else { 0.0 })
            .collect();
        let dzu: Vec<f64> = (0..n)
            .map(|j| if has_hi[j] { mu / su[j] - it.zu[j] + it.zu[j] * dw[j] / su[j] } else { 0.0 })
            .collect();

        let max_primal_step = |d: &[f64]| {
            let mut a = 1.0f64;
            for j in 0..n {
                if has_lo[j] && d[j] < 0.0 {
                    a = a.min(-tau * sl[j] / d[j]);
                }
                if has_hi[j] && d[j] > 0.0 {
                    a = a.min(tau * su[j] / d[j]);
                }
            }
            a
        };
        let alpha_max = max_primal_step(&dw);
        let mut alpha_z = 1.0f64;
        for j in 0..n {
            if dzl[j] < 0.0 {
                alpha_z = alpha_z.min(-tau * it.zl[j] / dzl[j]);
            }
            if dzu[j] < 0.0 {
                alpha_z = alpha_z.min(-tau * it.zu[j] / dzu[j]);
            }
        }

        // merit function
        let barrier = |w: &[f64], f: f64| -> f64 {
            let mut b = f;
            for j in 0..n {
                if has_lo[j] {
                    let s = w[j] - nlp.w_lo[j];
                    if s <= 0.0 {
                        return f64::INFINITY;
                    }
                    b -= mu * s.ln();
                }
                if has_hi[j] {
                    let s = nlp.w_hi[j] - w[j];
                    if s <= 0.0 {
                        return f64::INFINITY;
                    }
                    b -= mu * s.ln();
                }
            }
            b
        };
        let c_norm = one_norm(&it.c);
        let gd = dot(&grad_phi, &dw);
        if c_norm > 0.0 {
            let nu_trial = (gd + 0.5 * quad.max(0.0)) / (0.9 * c_norm);
            if nu < nu_trial {
                nu = nu_trial + 1.0;
            }
        }
        let merit0 = barrier(&it.w, it.f) + nu * c_norm;
        let slope = gd - nu * c_norm;

        let tiny = (0..n).all(|j| dw[j].abs() / (1.0 + it.w[j].abs()) < 10.0 * f64::EPSILON);

        let trial_at = |d: &[f64], alpha: f64| -> Vec<f64> { it.w.iter().zip(d).map(|(a, b)| a + alpha * b).collect() };
        let evaluate = |wt: &[f64]| -> Option<(f64, Vec<f64>, Vec<f64>, f64)> {
            let f = nlp.objective(wt);
            let (c, g) = nlp.constraints(wt);
            if !f.is_finite() || c.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let merit = barrier(wt, f) + nu * one_norm(&c);
            Some((f, c, g, merit))
        };

        let mut accepted: Option<(Vec<f64>, Vec<f64>, f64, f64, Vec<f64>, Vec<f64>)> = None;
        if tiny {
            let wt = trial_at(&dw, alpha_max);
            if let Some((f, c, g, _)) = evaluate(&wt) {
                accepted = Some((wt, dy.clone(), alpha_max, f, c, g));
                force_mu_decrease = true;
            }
        }
        let mut alpha = alpha_max;
        let mut first = true;
        while accepted.is_none() && alpha > 1e-14 {
            let wt = trial_at(&dw, alpha);
            let trial = evaluate(&wt);
            if let Some((f, c, g, merit)) = trial.clone() {
                if merit <= merit0 + ARMIJO * alpha * slope {
                    accepted = Some((wt, dy.clone(), alpha, f, c, g));
                    break;
                }
            }
            if first {
                first = false;
                // second-order correction on the full step
                if let Some((_, c_trial, _, _)) = trial {
                    if one_norm(&c_trial) >= c_norm {
                        let factor = structure.factor(&factor_entries, true).ok();
                        if let Some(factor) = factor {
                            let mut c_soc: Vec<f64> = (0..m).map(|i| alpha * it.c[i] + c_trial[i]).collect();
                            let mut c_prev = one_norm(&c_trial);
                            for _ in 0..MAX_SOC {
                                let mut rhs_soc = rhs.clone();
                                for i in 0..m {
                                    rhs_soc[n + i] = -c_soc[i];
                                }
                                let sol = factor.solve(&rhs_soc);
                                let d_soc = &sol[..n];
                                let a_soc = max_primal_step(d_soc);
                                let ws = trial_at(d_soc, a_soc);
                                let Some((f, c, g, merit)) = evaluate(&ws) else { break };
                                if merit <= merit0 + ARMIJO * alpha * slope {
                                    accepted = Some((ws, sol[n..].to_vec(), a_soc, f, c, g));
                                    break;
                                }
                                let cn = one_norm(&c);
                                if cn > 0.99 * c_prev {
                                    break;
                                }
                                c_prev = cn;
                                for i in 0..m {
                                    c_soc[i] = a_soc * c_soc[i] + c[i];
                                }
                            }
                        }
                    }
                }
                if accepted.is_some() {
                    break;
                }
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((wt, dy_used, a, f, c, g)) => {
                ls_failures = 0;
                force_reg = 0.0;
                for i in 0..m {
                    it.y[i] += a * dy_used[i];
                }
                for j in 0..n {
                    it.zl[j] += alpha_z * dzl[j];
                    it.zu[j] += alpha_z * dzu[j];
                }
                // keep bound multipliers near the central path
                for j in 0..n {
                    if has_lo[j] {
                        let s = wt[j] - nlp.w_lo[j];
                        it.zl[j] = it.zl[j].clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
                    }
                    if has_hi[j] {
                        let s = nlp.w_hi[j] - wt[j];
                        it.zu[j] = it.zu[j].clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
                    }
                }
                it.grad = nlp.gradient(&wt);
                it.jac = nlp.jacobian(&wt);
                it.w = wt;
                it.f = f;
                it.c = c;
                it.g_user = g;
                if it.grad.iter().chain(&it.jac).any(|v| !v.is_finite()) {
                    return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, SolveStatus::NumericalError, iter, dual_inf);
                }
            }
            None => {
                ls_failures += 1;
                force_reg = (delta_w.max(1e-4)) * 100.0;
                if ls_failures >= 8 || force_reg > 1e20 {
                    // stationary point of the infeasibility?
                    let mut jtc = vec![0.0; n];
                    for (&(i, j), v) in nlp.jac.iter().zip(&it.jac) {
                        jtc[j] += v * it.c[i];
                    }
                    let status = if primal_inf > opts.tol && inf_norm(&jtc) <= 1e-4 * primal_inf.max(1.0) {
                        SolveStatus::LocallyInfeasible
                    } else {
                        SolveStatus::LineSearchFailed
                    };
                    return finish(&nlp, &it.w, &it.y, &it.zl, &it.zu, status, iter, dual_inf);
                }
            }
        }
    }
    unreachable!("loop returns at max_iter")
}

#[allow(clippy::too_many_arguments)]
fn finish<P: NlpProblem + ?Sized>(
    nlp: &Internal<'_, P>,
    w: &[f64],
    y: &[f64],
    zl: &[f64],
    zu: &[f64],
    status: SolveStatus,
    iterations: usize,
    dual_inf: f64,
) -> NlpSolution {
    let p = nlp.p;
    let x = nlp.x_of(w);
    let objective = p.objective(&x);
    let mut g = vec![0.0; nlp.m];
    p.constraints(&x, &mut g);
    let (cl, cu) = p.con_bounds();
    let (xl, xu) = p.var_bounds();
    let mut viol = 0.0f64;
    for i in 0..nlp.m {
        viol = viol.max(cl[i] - g[i]).max(g[i] - cu[i]);
    }
    for j in 0..nlp.n_user {
        viol = viol.max(xl[j] - x[j]).max(x[j] - xu[j]);
    }
    if !viol.is_finite() {
        viol = f64::INFINITY;
    }
    let lambda: Vec<f64> = y.iter().zip(&nlp.row_scale).map(|(a, r)| a * r / nlp.obj_scale).collect();
    let mut z_lo = vec![0.0; nlp.n_user];
    let mut z_hi = vec![0.0; nlp.n_user];
    for (k, &j) in nlp.free.iter().enumerate() {
        z_lo[j] = zl[k] / nlp.obj_scale;
        z_hi[j] = zu[k] / nlp.obj_scale;
    }
    let status = if status.is_success() && viol > 10.0 * f64::EPSILON.sqrt() {
        SolveStatus::NumericalError
    } else {
        status
    };
    NlpSolution {
        status,
        x,
        objective,
        lambda,
        z_lo,
        z_hi,
        constraint_violation: viol.max(0.0),
        dual_infeasibility: dual_inf,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::check_derivatives;

    /// Hock-Schittkowski 71.
    struct Hs71;

    impl NlpProblem for Hs71 {
        fn num_vars(&self) -> usize {
            4
        }
        fn num_cons(&self) -> usize {
            2
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![1.0; 4], vec![5.0; 4])
        }
        fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![25.0, 40.0], vec![f64::INFINITY, 40.0])
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![1.0, 5.0, 5.0, 1.0]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
            g[1] = x[0] * x[3];
            g[2] = x[0] * x[3] + 1.0;
            g[3] = x[0] * (x[0] + x[1] + x[2]);
        }
        fn constraints(&self, x: &[f64], c: &mut [f64]) {
            c[0] = x[0] * x[1] * x[2] * x[3];
            c[1] = x.iter().map(|v| v * v).sum();
        }
        fn jacobian_structure(&self) -> Vec<(usize, usize)> {
            (0..2).flat_map(|i| (0..4).map(move |j| (i, j))).collect()
        }
        fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
            v[0] = x[1] * x[2] * x[3];
            v[1] = x[0] * x[2] * x[3];
            v[2] = x[0] * x[1] * x[3];
            v[3] = x[0] * x[1] * x[2];
            for j in 0..4 {
                v[4 + j] = 2.0 * x[j];
            }
        }
        fn hessian_structure(&self) -> Vec<(usize, usize)> {
            (0..4).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
        }
        fn hessian_values(&self, x: &[f64], s: f64, l: &[f64], v: &mut [f64]) {
            // order: (0,0) (1,0) (1,1) (2,0) (2,1) (2,2) (3,0) (3,1) (3,2) (3,3)
            v[0] = s * 2.0 * x[3] + l[1] * 2.0;
            v[1] = s * x[3] + l[0] * x[2] * x[3];
            v[2] = l[1] * 2.0;
            v[3] = s * x[3] + l[0] * x[1] * x[3];
            v[4] = l[0] * x[0] * x[3];
            v[5] = l[1] * 2.0;
            v[6] = s * (2.0 * x[0] + x[1] + x[2]) + l[0] * x[1] * x[2];
            v[7] = s * x[0] + l[0] * x[0] * x[2];
            v[8] = s * x[0] + l[0] * x[0] * x[1];
            v[9] = l[1] * 2.0;
        }
    }

    #[test]
    fn hs71_reaches_known_optimum() {
        let report = check_derivatives(&Hs71, &[1.3, 4.1, 3.7, 1.9], &[0.4, -0.7], 1e-6);
        assert!(report.max() < 1e-6, "{report:?}");
        let sol = solve(&Hs71, &IpmOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        let expected = [1.0, 4.742_999_64, 3.821_149_98, 1.379_408_29];
        for (a, b) in sol.x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{:?}", sol.x);
        }
        assert!((sol.objective - 17.014_017_1).abs() < 1e-5);
        assert!(sol.constraint_violation < 1e-6);
    }

    /// `min (x0 - 1)^2 + (x1 - 2)^2` with `x0 + x1 = 1` and `x1` pinned by bounds
    /// in a second variant.
    struct Quadratic {
        pin: Option<f64>,
    }

    impl NlpProblem for Quadratic {
        fn num_vars(&self) -> usize {
            2
        }
        fn num_cons(&self) -> usize {
            1
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            match self.pin {
                Some(v) => (vec![f64::NEG_INFINITY, v], vec![f64::INFINITY, v]),
                None => (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2]),
            }
        }
        fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![1.0], vec![1.0])
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            g[0] = 2.0 * (x[0] - 1.0);
            g[1] = 2.0 * (x[1] - 2.0);
        }
        fn constraints(&self, x: &[f64], c: &mut [f64]) {
            c[0] = x[0] + x[1];
        }
        fn jacobian_structure(&self) -> Vec<(usize, usize)> {
            vec![(0, 0), (0, 1)]
        }
        fn jacobian_values(&self, _x: &[f64], v: &mut [f64]) {
            v.copy_from_slice(&[1.0, 1.0]);
        }
        fn hessian_structure(&self) -> Vec<(usize, usize)> {
            vec![(0, 0), (1, 1)]
        }
        fn hessian_values(&self, _x: &[f64], s: f64, _l: &[f64], v: &mut [f64]) {
            v.copy_from_slice(&[2.0 * s, 2.0 * s]);
        }
    }

    #[test]
    fn equality_qp_matches_closed_form() {
        // projection of (1, 2) onto x0 + x1 = 1 is (0, 1), multiplier 2
        let sol = solve(&Quadratic { pin: None }, &IpmOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!((sol.x[0] - 0.0).abs() < 1e-8 && (sol.x[1] - 1.0).abs() < 1e-8);
        assert!((sol.lambda[0] - 2.0).abs() < 1e-6, "{:?}", sol.lambda);
    }

    #[test]
    fn fixed_variables_are_honoured() {
        let sol = solve(&Quadratic { pin: Some(3.0) }, &IpmOptions::default());
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.x[1], 3.0);
        assert!((sol.x[0] + 2.0).abs() < 1e-8);
    }

    /// `x^2 = -1` has no solution.
    struct Infeasible;

    impl NlpProblem for Infeasible {
        fn num_vars(&self) -> usize {
            1
        }
        fn num_cons(&self) -> usize {
            1
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![f64::NEG_INFINITY], vec![f64::INFINITY])
        }
        fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-1.0], vec![-1.0])
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.7]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn gradient(&self, _x: &[f64], g: &mut [f64]) {
            g[0] = 1.0;
        }
        fn constraints(&self, x: &[f64], c: &mut [f64]) {
            c[0] = x[0] * x[0];
        }
        fn jacobian_structure(&self) -> Vec<(usize, usize)> {
            vec![(0, 0)]
        }
        fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
            v[0] = 2.0 * x[0];
        }
        fn hessian_structure(&self) -> Vec<(usize, usize)> {
            vec![(0, 0)]
        }
        fn hessian_values(&self, _x: &[f64], _s: f64, l: &[f64], v: &mut [f64]) {
            v[0] = 2.0 * l[0];
        }
    }

    #[test]
    fn infeasible_problem_is_not_reported_as_solved() {
        let sol = solve(&Infeasible, &IpmOptions { max_iter: 200, ..IpmOptions::default() });
        assert!(!sol.status.is_success(), "{:?}", sol.status);
        assert!(sol.constraint_violation > 0.5);
    }
}
