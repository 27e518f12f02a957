//! The Friedrichs-model determinant
//! `Delta(p, z) = u(p) - z - 1/2 int v(t)^2 / (w_p(t) - z) dt`,
//! its zeros (two-particle bound states), the classification at `p = 0`
//! and the band structure of the essential spectrum.
//!
//! The default [`DeltaRule::Subtracted`] rule writes
//! `v(t)^2 = (v(t)^2 - v(q0)^2) + v(q0)^2` and integrates the second part
//! exactly with [`cosine_green`]; only a bounded remainder is left to the
//! grid. With `v = 1` the result does not depend on the grid at all.
//! [`DeltaRule::Nystrom`] is the plain grid sum, which is what the discrete
//! Fock matrix reproduces exactly.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    assumption_params, eps_raw, global_max_m, threshold_geometry, u_eval, v_eval, v_raw, w_raw,
    Channel, ModelParams, ThresholdGeometry,
};
use crate::solve::{brent, least_squares, linear_fit};
use crate::special::{cosine_green, cosine_green_difference};
use crate::torus::{Grid, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    #[default]
    Subtracted,
    Nystrom,
}

#[inline]
fn hav(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// `sum_j w_j (v(t_j)^2 - v_ref^2) / (gap + sum_i r_i hav(t_ji - phase_i))`.
fn remainder_sum(
    m: &ModelParams,
    grid: &Grid,
    radii: [f64; 3],
    phase: [f64; 3],
    gap: f64,
    v_ref: f64,
) -> Result<f64> {
    if m.v != Channel::Epsilon {
        return Ok(0.0);
    }
    let axis = grid.axis_nodes();
    let aw = grid.axis_weights();
    let n = axis.len();
    let ex: Vec<[f64; 3]> = axis
        .iter()
        .map(|&t| {
            [
                radii[0] * hav(t - phase[0]),
                radii[1] * hav(t - phase[1]),
                radii[2] * hav(t - phase[2]),
            ]
        })
        .collect();
    let ha: Vec<f64> = axis.iter().map(|&t| hav(t)).collect();
    let vr2 = v_ref * v_ref;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let wij = aw[i] * aw[j];
            let sij = ex[i][0] + ex[j][1];
            let vij = ha[i] + ha[j];
            for k in 0..n {
                let v = vij + ha[k];
                let num = v * v - vr2;
                if num == 0.0 {
                    continue;
                }
                let den = gap + sij + ex[k][2];
                acc += wij * aw[k] * num / den;
            }
        }
    }
    if !acc.is_finite() {
        return Err(Error::numerical(
            "delta",
            format!("non-finite remainder sum at gap {gap}"),
        ));
    }
    Ok(acc)
}

/// `int v(t)^2 / (w_p(t) - z) dt` by the subtracted rule, for `z` outside
/// the open band `(m_w(p), max_t w_p(t))`.
fn resolvent_integral(
    m: &ModelParams,
    geo: &ThresholdGeometry,
    z: f64,
    grid: &Grid,
) -> Result<f64> {
    if z <= geo.m_w {
        let gap = geo.m_w - z;
        let v0 = v_raw(m, geo.phase);
        let rem = remainder_sum(m, grid, geo.radii, geo.phase, gap, v0)?;
        let sing = if v0 == 0.0 {
            0.0
        } else {
            v0 * v0 * cosine_green(geo.radii, gap)?
        };
        Ok(rem + sing)
    } else if z >= geo.top() {
        // w_p(t) - z = -(gap + sum r_i hav(t_i - phase_i - pi))
        let gap = z - geo.top();
        let phase = geo.phase.map(|x| x + PI);
        let v1 = v_raw(m, phase);
        let rem = remainder_sum(m, grid, geo.radii, phase, gap, v1)?;
        let sing = if v1 == 0.0 {
            0.0
        } else {
            v1 * v1 * cosine_green(geo.radii, gap)?
        };
        Ok(-(rem + sing))
    } else {
        Err(Error::invalid(format!(
            "z = {z} lies inside the band ({}, {}) of w_p",
            geo.m_w,
            geo.top()
        )))
    }
}

/// `Lambda(p) = int v(t)^2 / w(p, t) dt`.
pub fn lambda_fn(m: &ModelParams, p: &TorusPoint, grid: &Grid) -> Result<f64> {
    let geo = threshold_geometry(m, p);
    resolvent_integral(m, &geo, 0.0, grid)
}

/// `Delta(p, z)` by the subtracted rule. Valid for `z <= m_w(p)` and for
/// `z >= max_t w(p, t)`.
pub fn delta(m: &ModelParams, p: &TorusPoint, z: f64, grid: &Grid) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::invalid(format!("non-finite z = {z}")));
    }
    let geo = threshold_geometry(m, p);
    let integral = resolvent_integral(m, &geo, z, grid)?;
    Ok(u_eval(m, p) - z - 0.5 * integral)
}

/// `Delta(p, z)` as the plain grid sum `u - z - 1/2 sum_j w_j v_j^2 / (w(p, t_j) - z)`.
pub fn delta_nystrom(m: &ModelParams, p: &TorusPoint, z: f64, grid: &Grid) -> Result<f64> {
    let pc = p.coords();
    let mut acc = 0.0;
    for (t, wt) in grid.nodes().iter().zip(grid.weights()) {
        let tc = t.coords();
        let v = v_raw(m, tc);
        if v == 0.0 {
            continue;
        }
        let den = w_raw(m, pc, tc) - z;
        if den <= 0.0 {
            return Err(Error::invalid(format!(
                "z = {z} is not below w(p, t) = {} at node {tc:?}",
                den + z
            )));
        }
        acc += wt * v * v / den;
    }
    Ok(u_eval(m, p) - z - 0.5 * acc)
}

pub fn delta_with(
    rule: DeltaRule,
    m: &ModelParams,
    p: &TorusPoint,
    z: f64,
    grid: &Grid,
) -> Result<f64> {
    match rule {
        DeltaRule::Subtracted => delta(m, p, z, grid),
        DeltaRule::Nystrom => delta_nystrom(m, p, z, grid),
    }
}

/// `Delta(p, z1) - Delta(p, z2)` for `z1, z2 <= m_w(p)`, free of cancellation.
pub fn delta_difference(
    m: &ModelParams,
    p: &TorusPoint,
    z1: f64,
    z2: f64,
    grid: &Grid,
) -> Result<f64> {
    let geo = threshold_geometry(m, p);
    if z1 > geo.m_w || z2 > geo.m_w {
        return Err(Error::invalid("delta_difference needs z1, z2 <= m_w(p)"));
    }
    let (g1, g2) = (geo.m_w - z1, geo.m_w - z2);
    let v0 = v_raw(m, geo.phase);
    let mut weighted = 0.0;
    if m.v == Channel::Epsilon {
        for (t, wt) in grid.nodes().iter().zip(grid.weights()) {
            let tc = t.coords();
            let v = eps_raw(tc);
            let num = v * v - v0 * v0;
            if num == 0.0 {
                continue;
            }
            let s = geo.excess(tc);
            weighted += wt * num / ((g1 + s) * (g2 + s));
        }
    }
    let sing = if v0 == 0.0 {
        0.0
    } else {
        v0 * v0 * cosine_green_difference(geo.radii, g1, g2)?
    };
    Ok((z2 - z1) * (1.0 + 0.5 * weighted) - 0.5 * sing)
}

fn bracket_floor(m: &ModelParams) -> f64 {
    -10.0 * (6.0 + m.c.abs() + 12.0 * m.l1 + 6.0 * m.l2)
}

/// The eigenvalue `z(p) < m_w(p)` of the fiber operator, if any.
pub fn bound_state(m: &ModelParams, p: &TorusPoint, grid: &Grid) -> Result<Option<f64>> {
    bound_state_with_tol(m, p, grid, 1e-15)
}

/// [`bound_state`] with relative root tolerance `root_tol`.
pub fn bound_state_with_tol(
    m: &ModelParams,
    p: &TorusPoint,
    grid: &Grid,
    root_tol: f64,
) -> Result<Option<f64>> {
    let geo = threshold_geometry(m, p);
    let mut top = geo.m_w;
    // A flat fiber (all radii zero) has Delta -> -inf at its single band point,
    // so bracket just below it instead.
    let scale = 1.0 + top.abs();
    if geo.radii.iter().all(|r| *r <= 1e-12 * scale) {
        top -= 1e-9 * scale;
    }
    let d_top = delta(m, p, top, grid)?;
    if d_top >= 0.0 {
        return Ok(None);
    }
    let floor = bracket_floor(m);
    let mut lo = top.min(0.0) - 1.0;
    loop {
        if delta(m, p, lo, grid)? > 0.0 {
            break;
        }
        if lo <= floor {
            return Err(Error::numerical(
                "bound_state",
                format!("no sign change of Delta above z = {floor} at p = {:?}", p.coords()),
            ));
        }
        lo = (2.0 * lo).max(floor);
    }
    let root = brent(
        |z| delta(m, p, z, grid),
        lo,
        top,
        root_tol * (1.0 + lo.abs()),
        1e-12,
    )?;
    Ok(Some(root))
}

/// Coupling `c*` with `Delta(0, 0) = 0`, solved exactly in `c`.
pub fn tune_coupling(m: &ModelParams, grid: &Grid) -> Result<f64> {
    let lam = lambda_fn(m, &TorusPoint::ORIGIN, grid)?;
    if !lam.is_finite() {
        return Err(Error::numerical("tune_coupling", "non-finite Lambda(0)"));
    }
    Ok(0.5 * lam)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Resonance,
    ZeroEigenvalue,
    Subcritical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub delta00: f64,
    pub v_at_zero: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
}

pub fn default_classify_tol(m: &ModelParams) -> f64 {
    1e-8 * (1.0 + m.c.abs())
}

pub fn classify(m: &ModelParams, grid: &Grid, tol: f64) -> Result<ClassificationReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("classification tolerance {tol} must be positive")));
    }
    let delta00 = delta(m, &TorusPoint::ORIGIN, 0.0, grid)?;
    let v_at_zero = v_eval(m, &TorusPoint::ORIGIN);
    let verdict = if delta00.abs() <= tol {
        if v_at_zero != 0.0 {
            Verdict::Resonance
        } else {
            Verdict::ZeroEigenvalue
        }
    } else if delta00 > 0.0 {
        Verdict::Subcritical
    } else {
        Verdict::Supercritical
    };
    Ok(ClassificationReport {
        delta00,
        v_at_zero,
        verdict,
        tolerance: tol,
    })
}

/// Compass search for a local minimum of `f`, starting at `start` with step `h`.
fn compass_minimize<F>(f: F, start: [f64; 3], f_start: f64, h: f64) -> Result<([f64; 3], f64)>
where
    F: Fn([f64; 3]) -> Result<f64>,
{
    let mut x = start;
    let mut fx = f_start;
    let mut step = h;
    while step > 1e-7 {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[axis] += sign * step;
                let fy = f(y)?;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((x, fx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaExtrema {
    pub min: f64,
    pub argmin: TorusPoint,
    pub max: f64,
    pub argmax: TorusPoint,
    /// Indices of grid nodes with `Delta(p, 0) < 0`.
    pub region_d: Vec<usize>,
    /// `Delta(node, 0)` for every grid node, in node order.
    pub node_values: Vec<f64>,
}

/// Values of `Delta(node, z)` at every grid node, in node order.
pub fn delta_on_nodes(m: &ModelParams, z: f64, grid: &Grid) -> Result<Vec<f64>> {
    grid.nodes()
        .par_iter()
        .map(|p| delta(m, p, z, grid))
        .collect()
}

pub fn delta_extrema(m: &ModelParams, grid: &Grid) -> Result<DeltaExtrema> {
    let values = delta_on_nodes(m, 0.0, grid)?;
    delta_extrema_from(m, grid, values)
}

/// Same as [`delta_extrema`] with `Delta(node, 0)` already evaluated.
pub fn delta_extrema_from(
    m: &ModelParams,
    grid: &Grid,
    node_values: Vec<f64>,
) -> Result<DeltaExtrema> {
    let nodes = grid.nodes();
    let mut candidates: Vec<(TorusPoint, f64)> =
        nodes.iter().copied().zip(node_values.iter().copied()).collect();
    candidates.push((TorusPoint::ORIGIN, delta(m, &TorusPoint::ORIGIN, 0.0, grid)?));
    let lo = candidates
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .copied()
        .expect("nonempty grid");
    let hi = candidates
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .copied()
        .expect("nonempty grid");
    let h = 2.0 * PI / grid.n_per_axis() as f64;
    let eval = |x: [f64; 3]| -> Result<f64> { delta(m, &TorusPoint::new(x)?, 0.0, grid) };
    let (xmin, fmin) = compass_minimize(eval, lo.0.coords(), lo.1, h)?;
    let (xmax, fmax) = compass_minimize(|x| eval(x).map(|v| -v), hi.0.coords(), -hi.1, h)?;
    let region_d = node_values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(DeltaExtrema {
        min: fmin,
        argmin: TorusPoint::new(xmin)?,
        max: -fmax,
        argmax: TorusPoint::new(xmax)?,
        region_d,
        node_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandCase {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    Ii,
    #[serde(rename = "iii")]
    Iii,
}

/// Essential spectrum: case i is `[a, b] U [0, M]`, case ii is `[a, M]`,
/// case iii is `[0, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBands {
    pub case: BandCase,
    pub a: Option<f64>,
    pub b: Option<f64>,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub hypothesis_ok: bool,
}

pub fn case_from_extrema(min: f64, max: f64) -> BandCase {
    if max < 0.0 {
        BandCase::I
    } else if min < 0.0 {
        BandCase::Ii
    } else {
        BandCase::Iii
    }
}

fn bound_state_at(m: &ModelParams, x: [f64; 3], grid: &Grid) -> Result<Option<f64>> {
    bound_state(m, &TorusPoint::new(x)?, grid)
}

pub fn essential_spectrum(m: &ModelParams, grid: &Grid) -> Result<SpectralBands> {
    let ext = delta_extrema(m, grid)?;
    essential_spectrum_from(m, grid, &ext)
}

/// Same as [`essential_spectrum`] reusing precomputed extrema.
pub fn essential_spectrum_from(
    m: &ModelParams,
    grid: &Grid,
    ext: &DeltaExtrema,
) -> Result<SpectralBands> {
    let case = case_from_extrema(ext.min, ext.max);
    let big_m = global_max_m(m, grid)?;
    let nodes = grid.nodes();
    let h = 2.0 * PI / grid.n_per_axis() as f64;

    let (a, b) = if case == BandCase::Iii {
        (None, None)
    } else {
        let mut zs: Vec<(usize, f64)> = Vec::with_capacity(ext.region_d.len());
        let found: Vec<Option<f64>> = ext
            .region_d
            .par_iter()
            .map(|&i| bound_state(m, &nodes[i], grid))
            .collect::<Result<_>>()?;
        for (&i, z) in ext.region_d.iter().zip(found) {
            if let Some(z) = z {
                zs.push((i, z));
            }
        }
        // the refined minimizer of Delta(., 0) is always in D here
        let seed_min = match bound_state(m, &ext.argmin, grid)? {
            Some(z0) => {
                let best_node = zs.iter().min_by(|x, y| x.1.total_cmp(&y.1)).copied();
                match best_node {
                    Some((i, zn)) if zn < z0 => (nodes[i].coords(), zn),
                    _ => (ext.argmin.coords(), z0),
                }
            }
            None => {
                return Err(Error::numerical(
                    "essential_spectrum",
                    "no bound state at the minimizer of Delta(., 0)",
                ))
            }
        };
        let z_of = |x: [f64; 3]| -> Result<f64> {
            Ok(bound_state_at(m, x, grid)?.unwrap_or(0.0))
        };
        let (_, a) = compass_minimize(z_of, seed_min.0, seed_min.1, h)?;
        let b = if case == BandCase::I {
            let (i, zn) = zs
                .iter()
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .copied()
                .ok_or_else(|| Error::numerical("essential_spectrum", "empty region D"))?;
            let (_, neg_b) = compass_minimize(|x| z_of(x).map(|v| -v), nodes[i].coords(), -zn, h)?;
            -neg_b
        } else {
            // D meets its boundary, where z(p) reaches 0
            0.0
        };
        (Some(a), Some(b))
    };

    let hypothesis_ok = nodes
        .par_iter()
        .map(|p| delta(m, p, big_m, grid).map(|d| d <= 0.0))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .all(|ok| ok);

    Ok(SpectralBands {
        case,
        a,
        b,
        big_m,
        hypothesis_ok,
    })
}

/// Square-root behaviour of `Delta(0, -zeta^2) - Delta(0, 0)` at small `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtCoefficient {
    /// Log-log slope of the difference against `zeta`.
    pub exponent: f64,
    /// Coefficient of the term linear in `zeta`.
    pub coefficient: f64,
    /// Log-log slope of the difference with the linear term removed.
    pub remainder_exponent: f64,
    pub prediction_hessian_form: f64,
    pub prediction_profile_form: f64,
    pub prediction_gaussian: f64,
    pub ratio_hessian_form: f64,
    pub ratio_profile_form: f64,
    pub ratio_gaussian: f64,
}

pub fn zeta_ladder() -> Vec<f64> {
    (0..10).map(|k| 1e-4 * 2f64.powi(k)).collect()
}

pub fn sqrt_coefficient_measure(m: &ModelParams, grid: &Grid) -> Result<SqrtCoefficient> {
    let origin = TorusPoint::ORIGIN;
    let d00 = delta(m, &origin, 0.0, grid)?;
    if d00.abs() >= 1e-8 {
        return Err(Error::PreconditionViolation(format!(
            "model is not tuned: Delta(0, 0) = {d00:e}"
        )));
    }
    let zetas = zeta_ladder();
    let diffs: Vec<f64> = zetas
        .iter()
        .map(|&zeta| delta_difference(m, &origin, -zeta * zeta, 0.0, grid))
        .collect::<Result<_>>()?;
    if diffs.iter().any(|d| *d <= 0.0) {
        return Err(Error::numerical(
            "sqrt_coefficient",
            "Delta(0, z) is not decreasing on the zeta ladder",
        ));
    }
    let lz: Vec<f64> = zetas.iter().map(|z| z.ln()).collect();
    let ld: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
    let (exponent, _) = linear_fit(&lz, &ld)?;

    // relative-error fit: d / zeta^2 = a / zeta + b + c zeta + e zeta^2
    let y: Vec<f64> = zetas.iter().zip(&diffs).map(|(z, d)| d / (z * z)).collect();
    let cols = vec![
        zetas.iter().map(|z| 1.0 / z).collect::<Vec<_>>(),
        vec![1.0; zetas.len()],
        zetas.clone(),
        zetas.iter().map(|z| z * z).collect(),
    ];
    let coef = least_squares(&cols, &y)?;
    let resid = y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let fit: f64 = (0..4).map(|k| coef[k] * cols[k][i]).sum();
            ((fit - yi) / yi).abs()
        })
        .fold(0.0f64, f64::max);
    if resid > 1e-6 {
        return Err(Error::numerical(
            "sqrt_coefficient",
            format!("fit residual {resid:e} above 1e-6"),
        ));
    }
    let a = coef[0];
    let rest: Vec<f64> = zetas
        .iter()
        .zip(&diffs)
        .map(|(z, d)| (d - a * z).abs().ln())
        .collect();
    let (remainder_exponent, _) = linear_fit(&lz, &rest)?;

    let ap = assumption_params(m)?;
    let det_w = nalgebra::Matrix3::from_fn(|i, j| ap.w_matrix[i][j]).determinant();
    let v0 = v_eval(m, &origin);
    let v2 = v0 * v0;
    let (l1, l2) = (ap.big_l1, ap.big_l2);
    let hess = 2.0 * PI * PI * v2 * (l1 * l1 - l2 * l2).sqrt() / (l1 * l1) / det_w.sqrt();
    let profile = 4.0 * 2f64.sqrt() * PI * PI * v2 / l1.powf(1.5) / det_w.sqrt();
    let gauss = 2f64.powf(1.5) * PI * PI * v2 / l1.powf(1.5) / det_w.sqrt();
    let ratio = |pred: f64| if pred == 0.0 { f64::NAN } else { a / pred };
    Ok(SqrtCoefficient {
        exponent,
        coefficient: a,
        remainder_exponent,
        prediction_hessian_form: hess,
        prediction_profile_form: profile,
        prediction_gaussian: gauss,
        ratio_hessian_form: ratio(hess),
        ratio_profile_form: ratio(profile),
        ratio_gaussian: ratio(gauss),
    })
}

/// Direction used by [`delta_exponent_fit`].
pub const FIT_DIRECTION: [f64; 3] = [
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
];

/// Growth exponent of `Delta(p, 0)` along a fixed direction for
/// `|p|` in `[1e-3, 1e-1]`.
pub fn delta_exponent_fit(m: &ModelParams, grid: &Grid) -> Result<f64> {
    let radii: Vec<f64> = (0..7).map(|k| 1e-3 * 2f64.powi(k)).collect();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &r in &radii {
        let p = TorusPoint::new(FIT_DIRECTION.map(|x| r * x))?;
        let d = delta(m, &p, 0.0, grid)?;
        if d <= 0.0 {
            return Err(Error::numerical(
                "delta_exponent_fit",
                format!("Delta(p, 0) = {d:e} <= 0 at |p| = {r}"),
            ));
        }
        lx.push(r.ln());
        ly.push(d.ln());
    }
    Ok(linear_fit(&lx, &ly)?.0)
}
