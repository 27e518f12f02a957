//! Scalar root finding and small least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite signs.
/// Stops when the bracket is below `x_tol` or `|f| <= f_tol`.
pub fn brent<F>(f: F, mut a: f64, mut b: f64, x_tol: f64, f_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::numerical(
            "brent",
            format!("no sign change on [{a}, {b}]: f = {fa}, {fb}"),
        ));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * x_tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb.abs() <= f_tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::numerical("brent", "no convergence in 300 iterations"))
}

/// Least-squares solution of `sum_k coef_k * columns[k] ~ y` via SVD.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let m = y.len();
    let n = columns.len();
    if n == 0 || m < n || columns.iter().any(|c| c.len() != m) {
        return Err(Error::invalid("least_squares: inconsistent dimensions"));
    }
    let a = DMatrix::from_fn(m, n, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(&b, 1e-14 * smax)
        .map_err(|e| Error::numerical("least_squares", e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Ordinary least-squares line `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("linear_fit needs at least two paired samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    if sxx <= 1e-300 {
        return Err(Error::invalid("linear_fit: degenerate abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
