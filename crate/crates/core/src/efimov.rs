//! Efimov asymptotic coefficient.
//!
//! The spherical kernel `S(lambda)` on the unit sphere depends only on
//! `t = <xi, eta>`, so it is diagonal in spherical harmonics with eigenvalue
//! `s_l(lambda) = 2 pi int_{-1}^{1} K(t; lambda) P_l(t) dt` of multiplicity
//! `2l + 1`, where
//!
//! `K(t; lambda) = l sinh(lambda arccos(s t)) / (2 pi sqrt(1 - s^2 t^2) sinh(pi lambda))`.
//!
//! Substituting `s t = sin(phi)` removes the square root:
//! `s_l(lambda) = (l/s) int_{-asin s}^{asin s} R(lambda, pi/2 - phi) P_l(sin(phi)/s) dphi`
//! with `R(lambda, theta) = sinh(lambda theta) / sinh(pi lambda)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{count_above_toeplitz, Count, SymmetricToeplitz};
use crate::model::AssumptionParams;
use crate::solve::{brent, linear_fit};
use crate::special::{gauss_legendre, legendre_p};

pub const DEFAULT_ELL_MAX: usize = 8;
pub const DEFAULT_Y_MAX: f64 = 20.0;
pub const DEFAULT_LEGENDRE_POINTS: usize = 64;
pub const DEFAULT_POINTS_PER_UNIT: usize = 16;
/// Degree cutoff used when `s > 0.8`, where the higher degrees decay slowly.
pub const HIGH_S_ELL_MAX: usize = 16;
/// Scan step for threshold crossings in `y`.
const SCAN_STEP: f64 = 0.02;
/// Toeplitz entries below this fraction of the diagonal are dropped.
const BAND_DROP: f64 = 1e-17;

#[derive(Debug, Clone, PartialEq)]
pub struct EfimovParams {
    pub s: f64,
    pub l: f64,
    pub ell_max: usize,
    pub y_max: f64,
    pub legendre_points: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl EfimovParams {
    pub fn new(s: f64, l: f64, ell_max: usize, y_max: f64, legendre_points: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::invalid(format!("s = {s} must lie in (0, 1)")));
        }
        if (l - 1.0 / (1.0 - s * s).sqrt()).abs() > 1e-12 * l {
            return Err(Error::invalid(format!(
                "l = {l} is inconsistent with s = {s}"
            )));
        }
        if ell_max < 2 {
            return Err(Error::invalid(format!("ell_max = {ell_max} must be >= 2")));
        }
        if !(y_max > 0.0 && y_max.is_finite()) {
            return Err(Error::invalid(format!("y_max = {y_max} must be positive")));
        }
        if legendre_points < 8 {
            return Err(Error::invalid(format!(
                "legendre_points = {legendre_points} must be >= 8"
            )));
        }
        let ell_max = if s > 0.8 {
            ell_max.max(HIGH_S_ELL_MAX)
        } else {
            ell_max
        };
        let (nodes, weights) = gauss_legendre(legendre_points);
        let ep = EfimovParams {
            s,
            l,
            ell_max,
            y_max,
            legendre_points,
            nodes,
            weights,
        };
        let tail = s0_closed_form(&ep, y_max);
        if tail >= 0.5 {
            return Err(Error::invalid(format!(
                "y_max = {y_max} too small: s_0(y_max) = {tail}"
            )));
        }
        Ok(ep)
    }

    pub fn from_ratio(s: f64) -> Result<Self> {
        Self::new(
            s,
            1.0 / (1.0 - s * s).sqrt(),
            DEFAULT_ELL_MAX,
            DEFAULT_Y_MAX,
            DEFAULT_LEGENDRE_POINTS,
        )
    }

    pub fn from_assumption(
        a: &AssumptionParams,
        ell_max: usize,
        y_max: f64,
        legendre_points: usize,
    ) -> Result<Self> {
        let s = a.s.abs();
        Self::new(s, 1.0 / (1.0 - s * s).sqrt(), ell_max, y_max, legendre_points)
    }

    /// Gauss-Legendre rule mapped to `[lo, hi]`.
    fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (hi + lo);
        let h = 0.5 * (hi - lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + h * x, h * w))
    }
}

/// `sinh(lambda theta) / sinh(pi lambda)` for `0 <= theta <= pi`, even in `lambda`.
fn sinh_ratio(lambda: f64, theta: f64) -> f64 {
    let lam = lambda.abs();
    if lam == 0.0 {
        theta / PI
    } else if lam * PI < 20.0 {
        (lam * theta).sinh() / (lam * PI).sinh()
    } else {
        (lam * (theta - PI)).exp() * (-(-2.0 * lam * theta).exp_m1()) / (-(-2.0 * lam * PI).exp_m1())
    }
}

/// Eigenvalue of `S(lambda)` on spherical harmonics of degree `ell`.
pub fn s_hat_eigenvalue(ep: &EfimovParams, ell: usize, lambda: f64) -> f64 {
    let a = ep.s.asin();
    let sum: f64 = ep
        .mapped(-a, a)
        .map(|(phi, w)| w * sinh_ratio(lambda, 0.5 * PI - phi) * legendre_p(ell, phi.sin() / ep.s))
        .sum();
    ep.l / ep.s * sum
}

/// Degree-zero symbol `l sinh(y asin s) / (s y cosh(pi y / 2))`.
pub fn s0_closed_form(ep: &EfimovParams, y: f64) -> f64 {
    let a = ep.s.asin();
    let y = y.abs();
    if y == 0.0 {
        return ep.l * a / ep.s;
    }
    // sinh(y a) / cosh(pi y / 2) with a < pi/2, written to avoid overflow
    let ratio = (y * (a - 0.5 * PI)).exp() * (-(-2.0 * y * a).exp_m1()) / (1.0 + (-PI * y).exp());
    ep.l * ratio / (ep.s * y)
}

/// `n(mu, S(lambda))`: eigenvalues above `mu` with multiplicity.
pub fn count_sphere(ep: &EfimovParams, mu: f64, lambda: f64) -> Result<usize> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu = {mu} must be positive")));
    }
    let tail = s_hat_eigenvalue(ep, ep.ell_max, 0.0).abs();
    if tail >= 0.5 * mu {
        return Err(Error::EllMaxTooSmall {
            ell_max: ep.ell_max,
            tail,
            half_mu: 0.5 * mu,
        });
    }
    Ok((0..=ep.ell_max)
        .filter(|&ell| s_hat_eigenvalue(ep, ell, lambda) > mu)
        .map(|ell| 2 * ell + 1)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeThreshold {
    pub ell: usize,
    /// Intervals of `y >= 0` on which `s_ell(y) > mu`; the set is symmetric in `y`.
    pub intervals: Vec<(f64, f64)>,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfimovResult {
    pub s: f64,
    pub l: f64,
    pub mu: f64,
    pub u_of_mu: f64,
    /// `U(1)`.
    #[serde(rename = "u0")]
    pub u0_coefficient: f64,
    pub per_degree_thresholds: Vec<DegreeThreshold>,
}

fn crossings(f: &(dyn Fn(f64) -> f64 + Sync), y_max: f64, step: f64) -> Vec<(f64, f64)> {
    let n = (y_max / step).ceil() as usize;
    let h = y_max / n as f64;
    let vals: Vec<f64> = (0..=n).map(|k| f(k as f64 * h)).collect();
    (0..n)
        .filter(|&k| (vals[k] > 0.0) != (vals[k + 1] > 0.0))
        .map(|k| (k as f64 * h, (k + 1) as f64 * h))
        .collect()
}

fn threshold_set(ep: &EfimovParams, ell: usize, mu: f64) -> Result<DegreeThreshold> {
    let f = |y: f64| s_hat_eigenvalue(ep, ell, y) - mu;
    if f(ep.y_max) > 0.0 {
        return Err(Error::numerical(
            "efimov",
            format!("s_{ell}(y_max) exceeds mu = {mu}; increase y_max"),
        ));
    }
    let coarse = crossings(&f, ep.y_max, SCAN_STEP);
    let fine = crossings(&f, ep.y_max, 0.5 * SCAN_STEP);
    if coarse.len() != fine.len() {
        return Err(Error::numerical(
            "efimov",
            format!("unresolved threshold crossings for degree {ell} at mu = {mu}"),
        ));
    }
    let mut roots = Vec::with_capacity(fine.len());
    for (a, b) in fine {
        roots.push(brent(|y| Ok(f(y)), a, b, 1e-14, 0.0)?);
    }
    // the sign at y = 0 decides whether the first root opens or closes an interval
    let mut edges = Vec::with_capacity(roots.len() + 2);
    if f(0.0) > 0.0 {
        edges.push(0.0);
    }
    edges.extend(roots);
    let intervals: Vec<(f64, f64)> = edges.chunks(2).map(|c| (c[0], c[1])).collect();
    let measure = intervals.iter().fold(0.0, |acc, (a, b)| acc + (b - a));
    Ok(DegreeThreshold {
        ell,
        intervals,
        measure,
    })
}

fn u_value(ep: &EfimovParams, mu: f64) -> Result<(f64, Vec<DegreeThreshold>)> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu = {mu} must be positive")));
    }
    count_sphere(ep, mu, 0.0)?;
    let sets: Vec<DegreeThreshold> = (0..=ep.ell_max)
        .into_par_iter()
        .map(|ell| threshold_set(ep, ell, mu))
        .collect::<Result<_>>()?;
    let total: f64 = sets
        .iter()
        .map(|d| (2 * d.ell + 1) as f64 * 2.0 * d.measure)
        .sum();
    Ok((total / (4.0 * PI), sets))
}

/// `U(mu) = (4 pi)^{-1} int n(mu, S(y)) dy`, together with `U(1)`.
pub fn u_of_mu(ep: &EfimovParams, mu: f64) -> Result<EfimovResult> {
    let (u, sets) = u_value(ep, mu)?;
    let u0 = if mu == 1.0 { u } else { u_value(ep, 1.0)?.0 };
    Ok(EfimovResult {
        s: ep.s,
        l: ep.l,
        mu,
        u_of_mu: u,
        u0_coefficient: u0,
        per_degree_thresholds: sets,
    })
}

/// Degree-`ell` kernel of the truncated operator as a function of `y = x - x'`.
pub fn sr_kernel(ep: &EfimovParams, ell: usize, y: f64) -> f64 {
    let ch = y.cosh();
    if ell == 0 {
        let s = ep.s;
        return ep.l / (2.0 * PI * s) * (2.0 * s / (ch - s)).ln_1p();
    }
    let sum: f64 = ep
        .mapped(-1.0, 1.0)
        .map(|(t, w)| w * legendre_p(ell, t) / (ch + ep.s * t))
        .sum();
    ep.l / (2.0 * PI) * sum
}

/// Midpoint Nystrom block of degree `ell` on `(0, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrBlock {
    pub ell: usize,
    pub r: f64,
    pub step: f64,
    pub matrix: SymmetricToeplitz,
}

pub fn assemble_s_r(ep: &EfimovParams, r: f64, points_per_unit: usize, ell: usize) -> Result<SrBlock> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("r = {r} must be positive")));
    }
    if points_per_unit < 8 {
        return Err(Error::invalid(format!(
            "points_per_unit = {points_per_unit} must be >= 8"
        )));
    }
    let m = ((r * points_per_unit as f64).round() as usize).max(1);
    let h = r / m as f64;
    let diag = h * sr_kernel(ep, ell, 0.0);
    let mut column = Vec::with_capacity(m);
    for k in 0..m {
        let v = h * sr_kernel(ep, ell, k as f64 * h);
        column.push(v);
        // the kernel decays like exp(-|y|); stop once far below the drop level
        if k > 0 && v.abs() < 1e-3 * BAND_DROP * diag.abs() && (k as f64 * h) > 1.0 {
            break;
        }
    }
    column.resize(m, 0.0);
    Ok(SrBlock {
        ell,
        r,
        step: h,
        matrix: SymmetricToeplitz::new(column, BAND_DROP),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrCount {
    pub r: f64,
    pub count: usize,
    pub ambiguous: bool,
}

impl SrCount {
    pub fn half_count_over_r(&self) -> f64 {
        0.5 * self.count as f64 / self.r
    }
}

/// `n(mu, S_r) = sum_l (2l + 1) #{eig(block_l) > mu}`.
pub fn sr_count(
    ep: &EfimovParams,
    mu: f64,
    r: f64,
    points_per_unit: usize,
    ell_max: usize,
) -> Result<SrCount> {
    let mut total = 0;
    let mut ambiguous = false;
    for ell in 0..=ell_max {
        let block = assemble_s_r(ep, r, points_per_unit, ell)?;
        let Count {
            count,
            ambiguous: amb,
        } = count_above_toeplitz(&block.matrix, mu)?;
        total += (2 * ell + 1) * count;
        ambiguous |= amb;
    }
    Ok(SrCount {
        r,
        count: total,
        ambiguous,
    })
}

/// Least-squares slope of `N` against `|log|z||`.
pub fn log_slope_fit(samples: &[(f64, usize)]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::invalid(format!(
            "log-slope fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(z, _)| !(*z != 0.0 && z.is_finite())) {
        return Err(Error::invalid("log-slope fit needs finite nonzero z"));
    }
    let x: Vec<f64> = samples.iter().map(|(z, _)| z.abs().ln().abs()).collect();
    let y: Vec<f64> = samples.iter().map(|(_, n)| *n as f64).collect();
    Ok(linear_fit(&x, &y)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn third() -> EfimovParams {
        EfimovParams::from_ratio(1.0 / 3.0).unwrap()
    }

    #[test]
    fn degree_zero_at_origin() {
        let ep = third();
        let expected = 3.0 / 8f64.sqrt() * 3.0 * (1.0f64 / 3.0).asin();
        assert!((s_hat_eigenvalue(&ep, 0, 0.0) - expected).abs() < 1e-13);
        assert!((s0_closed_form(&ep, 0.0) - expected).abs() < 1e-15);
        assert!((expected - 1.0813544242761977).abs() < 1e-13);
    }

    #[test]
    fn closed_form_limits() {
        let ep = third();
        assert!(s0_closed_form(&ep, 400.0) < 1e-100);
        assert_eq!(s0_closed_form(&ep, 2.0), s0_closed_form(&ep, -2.0));
        // small y agrees with the y = 0 limit
        assert!((s0_closed_form(&ep, 1e-9) - s0_closed_form(&ep, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn sphere_counts() {
        let ep = third();
        assert_eq!(count_sphere(&ep, 1.0, 0.0).unwrap(), 1);
        assert_eq!(count_sphere(&ep, 2.0, 0.0).unwrap(), 0);
        assert_eq!(count_sphere(&ep, 1e6, 0.0).unwrap(), 0);
        assert!(count_sphere(&ep, 0.0, 0.0).is_err());
    }

    #[test]
    fn tiny_mu_trips_tail_check() {
        let ep = third();
        assert!(matches!(
            count_sphere(&ep, 1e-12, 0.0),
            Err(Error::EllMaxTooSmall { .. })
        ));
    }

    #[test]
    fn u0_for_one_third() {
        let ep = third();
        let res = u_of_mu(&ep, 1.0).unwrap();
        // independent root of the closed form
        let y_star = brent(|y| Ok(s0_closed_form(&ep, y) - 1.0), 0.0, 2.0, 1e-15, 0.0).unwrap();
        assert!((y_star - 0.2572064695192764).abs() < 1e-12);
        assert!((res.u0_coefficient - y_star / (2.0 * PI)).abs() < 1e-10);
        assert!((res.u0_coefficient - 0.04093568101920775).abs() < 1e-10);
        let big = u_of_mu(&ep, 1.5).unwrap();
        assert_eq!(big.u_of_mu, 0.0);
        assert!(u_of_mu(&ep, 0.5).unwrap().u_of_mu > res.u_of_mu);
    }

    #[test]
    fn parameter_validation() {
        assert!(EfimovParams::new(1.0 / 3.0, 1.0, 8, 20.0, 64).is_err());
        assert!(EfimovParams::new(1.2, 1.0, 8, 20.0, 64).is_err());
        assert!(EfimovParams::new(1.0 / 3.0, 3.0 / 8f64.sqrt(), 1, 20.0, 64).is_err());
        assert!(EfimovParams::new(1.0 / 3.0, 3.0 / 8f64.sqrt(), 8, 0.1, 64).is_err());
        assert_eq!(EfimovParams::from_ratio(0.9).unwrap().ell_max, HIGH_S_ELL_MAX);
    }

    #[test]
    fn sr_kernel_general_degree_matches_log_form() {
        let ep = third();
        for y in [0.0, 0.3, 2.0, 10.0] {
            let log_form = sr_kernel(&ep, 0, y);
            let quad: f64 = ep
                .mapped(-1.0, 1.0)
                .map(|(t, w)| w / (y.cosh() + ep.s * t))
                .sum::<f64>()
                * ep.l
                / (2.0 * PI);
            assert!((log_form - quad).abs() < 1e-13 * log_form);
        }
    }

    #[test]
    fn sr_block_structure() {
        let ep = third();
        let b = assemble_s_r(&ep, 20.0, 16, 0).unwrap();
        let c = &b.matrix.column;
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
        let k = (10.0 / b.step).round() as usize;
        let ratio = c[k] / c[0];
        assert!(ratio < (-9.0f64).exp() && ratio > (-11.0f64).exp());
        let dense = b.matrix.to_dense();
        assert_eq!(dense.max_asymmetry(), 0.0);
        assert!(assemble_s_r(&ep, 20.0, 4, 0).is_err());
    }

    #[test]
    fn synthetic_slope() {
        let samples: Vec<(f64, usize)> = (2..=8)
            .map(|k| {
                let z = -(10f64).powi(-k);
                (z, (0.8 * z.abs().ln().abs()).round() as usize)
            })
            .collect();
        let slope = log_slope_fit(&samples).unwrap();
        assert!((0.75..=0.85).contains(&slope), "{slope}");
        assert!(log_slope_fit(&samples[..2]).is_err());
        assert!(log_slope_fit(&[(-0.1, 1), (-0.1, 2), (-0.1, 3)]).is_err());
    }
}
