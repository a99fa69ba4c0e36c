use super::NlpProblem;

/// Largest mismatch between analytic and central-difference derivatives,
/// measured as `|a - fd| / max(1, |fd|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    pub gradient: f64,
    pub jacobian: f64,
    pub hessian: f64,
}

impl DerivativeReport {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.jacobian).max(self.hessian)
    }
}

fn rel(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / fd.abs().max(1.0)
}

fn dense_jacobian<P: NlpProblem + ?Sized>(p: &P, x: &[f64]) -> Vec<Vec<f64>> {
    let (n, m) = (p.num_vars(), p.num_cons());
    let structure = p.jacobian_structure();
    let mut vals = vec![0.0; structure.len()];
    p.jacobian_values(x, &mut vals);
    let mut jac = vec![vec![0.0; n]; m];
    for (&(i, j), v) in structure.iter().zip(&vals) {
        jac[i][j] += v;
    }
    jac
}

/// Gradient of `sigma f + lambda^T c`.
fn lagrangian_gradient<P: NlpProblem + ?Sized>(p: &P, x: &[f64], sigma: f64, lambda: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.num_vars()];
    p.gradient(x, &mut g);
    for v in g.iter_mut() {
        *v *= sigma;
    }
    for (i, row) in dense_jacobian(p, x).iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            g[j] += lambda[i] * v;
        }
    }
    g
}

/// Compares analytic derivatives at `x` against central differences with
/// step `eps`. The Hessian is checked for the Lagrangian with multipliers
/// `lambda` and objective factor 1.
pub fn check_derivatives<P: NlpProblem + ?Sized>(p: &P, x: &[f64], lambda: &[f64], eps: f64) -> DerivativeReport {
    let (n, m) = (p.num_vars(), p.num_cons());
    let mut xp = x.to_vec();

    let mut grad = vec![0.0; n];
    p.gradient(x, &mut grad);
    let jac = dense_jacobian(p, x);

    let hs = p.hessian_structure();
    let mut hv = vec![0.0; hs.len()];
    p.hessian_values(x, 1.0, lambda, &mut hv);
    let mut hess = vec![vec![0.0; n]; n];
    for (&(i, j), v) in hs.iter().zip(&hv) {
        hess[i][j] += v;
        if i != j {
            hess[j][i] += v;
        }
    }

    let mut report = DerivativeReport {
        gradient: 0.0,
        jacobian: 0.0,
        hessian: 0.0,
    };
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    for j in 0..n {
        let h = eps * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = p.objective(&xp);
        p.constraints(&xp, &mut cp);
        let gp = lagrangian_gradient(p, &xp, 1.0, lambda);
        xp[j] = x[j] - h;
        let fm = p.objective(&xp);
        p.constraints(&xp, &mut cm);
        let gm = lagrangian_gradient(p, &xp, 1.0, lambda);
        xp[j] = x[j];

        report.gradient = report.gradient.max(rel(grad[j], (fp - fm) / (2.0 * h)));
        for i in 0..m {
            report.jacobian = report.jacobian.max(rel(jac[i][j], (cp[i] - cm[i]) / (2.0 * h)));
        }
        for i in 0..n {
            report.hessian = report.hessian.max(rel(hess[i][j], (gp[i] - gm[i]) / (2.0 * h)));
        }
    }
    report
}
