use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Least-squares polynomial fit; coefficients in ascending powers.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} abscissae for {} values", x.len(), y.len())));
    }
    if degree >= x.len() {
        return Err(Error::Degenerate(format!(
            "degree {degree} fit needs more than {} points",
            x.len()
        )));
    }
    // centre and scale the abscissae so the Vandermonde matrix stays well conditioned
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let centre = 0.5 * (lo + hi);
    let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| ((x[i] - centre) / half).powi(j as i32));
    let svd = a.svd(true, true);
    let smallest = svd.singular_values.min();
    if smallest <= 1e-12 * svd.singular_values.max() {
        return Err(Error::Degenerate("abscissae do not determine the polynomial".into()));
    }
    let c = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(expand_shift(c.as_slice(), centre, half))
}

/// Coefficients of `p((x - c) / s)` expressed in powers of `x`.
fn expand_shift(coeffs: &[f64], c: f64, s: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    // (x - c)^j / s^j via the binomial theorem
    for (j, &a) in coeffs.iter().enumerate() {
        let scale = a / s.powi(j as i32);
        let mut binom = 1.0;
        for k in 0..=j {
            out[k] += scale * binom * (-c).powi((j - k) as i32);
            binom = binom * (j - k) as f64 / (k + 1) as f64;
        }
    }
    out
}

pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}
