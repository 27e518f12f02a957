//! Concrete cosine models `(u, v, w)` on the torus and their threshold geometry.
//!
//! Both presets share the form
//! `w(p, q) = l1 eps(p) + l2 eps(p+q) + l1 eps(q)` with `u(p) = eps(p) + c`;
//! the `remark24` preset is the special case `l1 = l2 = 1`, `v = eps`.
//!
//! Per axis, `l1 cos q + l2 cos(p+q) = r cos(q - phi)` with
//! `r = |l1 + l2 e^{ip}|`, so `w_p(q) = m_w(p) + sum_i r_i (1 - cos(q_i - phi_i))`.
//! Everything downstream leans on this exact decomposition.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{Grid, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Remark24,
    Remark27,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Epsilon,
    ConstantOne,
    /// `v = 0`; decouples the sectors. Test use only.
    ZeroTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub preset: Preset,
    pub c: f64,
    pub l1: f64,
    pub l2: f64,
    pub v: Channel,
    pub u0: f64,
}

impl ModelParams {
    pub fn remark24(c: f64) -> Self {
        ModelParams {
            preset: Preset::Remark24,
            c,
            l1: 1.0,
            l2: 1.0,
            v: Channel::Epsilon,
            u0: 1.0,
        }
    }

    pub fn remark27(l1: f64, l2: f64, v: Channel, c: f64) -> Result<Self> {
        let m = ModelParams {
            preset: Preset::Remark27,
            c,
            l1,
            l2,
            v,
            u0: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_u0(mut self, u0: f64) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_channel(mut self, v: Channel) -> Self {
        self.v = v;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.c, self.l1, self.l2, self.u0].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidModel("non-finite model parameter".into()));
        }
        match self.preset {
            Preset::Remark24 => {
                if self.l1 != 1.0 || self.l2 != 1.0 {
                    return Err(Error::InvalidModel(
                        "remark24 fixes the hopping weights to (1, 1)".into(),
                    ));
                }
                if self.v == Channel::ConstantOne {
                    return Err(Error::InvalidModel("remark24 uses v = eps".into()));
                }
            }
            Preset::Remark27 => {
                if self.l1 <= 0.0 || self.l2 <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "hopping weights must be positive, got ({}, {})",
                        self.l1, self.l2
                    )));
                }
                if self.l1 == self.l2 {
                    return Err(Error::InvalidModel("remark27 requires l1 != l2".into()));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn hav(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// `3 - sum cos p_i`, evaluated as `sum 2 sin^2(p_i/2)` so that small
/// arguments keep full relative accuracy.
#[inline]
pub fn eps_raw(p: [f64; 3]) -> f64 {
    hav(p[0]) + hav(p[1]) + hav(p[2])
}

pub fn eps(p: &TorusPoint) -> f64 {
    eps_raw(p.coords())
}

pub fn u_eval(m: &ModelParams, p: &TorusPoint) -> f64 {
    eps(p) + m.c
}

#[inline]
pub fn v_raw(m: &ModelParams, p: [f64; 3]) -> f64 {
    match m.v {
        Channel::Epsilon => eps_raw(p),
        Channel::ConstantOne => 1.0,
        Channel::ZeroTest => 0.0,
    }
}

pub fn v_eval(m: &ModelParams, p: &TorusPoint) -> f64 {
    v_raw(m, p.coords())
}

#[inline]
pub fn w_raw(m: &ModelParams, p: [f64; 3], q: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        acc += m.l1 * (hav(p[i]) + hav(q[i])) + m.l2 * hav(p[i] + q[i]);
    }
    acc
}

pub fn w_eval(m: &ModelParams, p: &TorusPoint, q: &TorusPoint) -> f64 {
    w_raw(m, p.coords(), q.coords())
}

/// Per-axis decomposition of `w_p`: minimum value, radii and minimizer phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdGeometry {
    pub m_w: f64,
    pub radii: [f64; 3],
    pub phase: [f64; 3],
}

impl ThresholdGeometry {
    /// `w_p(t) - m_w(p)` in cancellation-free form.
    #[inline]
    pub fn excess(&self, t: [f64; 3]) -> f64 {
        self.radii[0] * hav(t[0] - self.phase[0])
            + self.radii[1] * hav(t[1] - self.phase[1])
            + self.radii[2] * hav(t[2] - self.phase[2])
    }

    /// Maximum of `w_p` over the torus.
    pub fn top(&self) -> f64 {
        self.m_w + 2.0 * (self.radii[0] + self.radii[1] + self.radii[2])
    }
}

pub fn threshold_geometry(m: &ModelParams, p: &TorusPoint) -> ThresholdGeometry {
    let (l1, l2) = (m.l1, m.l2);
    let big = l1 + l2;
    let mut m_w = 0.0;
    let mut radii = [0.0; 3];
    let mut phase = [0.0; 3];
    for (i, &pi) in p.coords().iter().enumerate() {
        let s2 = {
            let s = (0.5 * pi).sin();
            s * s
        };
        // r^2 = (l1 + l2)^2 - 4 l1 l2 sin^2(p/2)
        let r = (big * big - 4.0 * l1 * l2 * s2).max(0.0).sqrt();
        // l1 (1 - cos p) + (l1 + l2) - r, with the last difference rationalized
        m_w += 2.0 * l1 * s2 + 4.0 * l1 * l2 * s2 / (big + r);
        radii[i] = r;
        phase[i] = (-l2 * pi.sin()).atan2(l1 + l2 * pi.cos());
    }
    ThresholdGeometry { m_w, radii, phase }
}

/// `min_q w(p, q)` in closed form.
pub fn m_w_closed(m: &ModelParams, p: &TorusPoint) -> f64 {
    threshold_geometry(m, p).m_w
}

/// Minimizer `q0(p)` of `w_p`, one arctangent per axis.
pub fn q0_closed(m: &ModelParams, p: &TorusPoint) -> TorusPoint {
    // atan2 already returns values in (-pi, pi]
    TorusPoint::new(threshold_geometry(m, p).phase).expect("finite phase")
}

fn w_grad_q(m: &ModelParams, p: [f64; 3], q: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mut g = [0.0; 3];
    let mut h = [0.0; 3];
    for i in 0..3 {
        g[i] = m.l2 * (p[i] + q[i]).sin() + m.l1 * q[i].sin();
        h[i] = m.l2 * (p[i] + q[i]).cos() + m.l1 * q[i].cos();
    }
    (g, h)
}

/// Brute-force `min_q w(p, q)`: a 32^3 scan followed by Newton polishing.
pub fn m_w_numeric(m: &ModelParams, p: &TorusPoint) -> Result<(f64, TorusPoint)> {
    let pc = p.coords();
    let scan = crate::torus::make_grid(32)?;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for q in scan.nodes() {
        let val = w_raw(m, pc, q.coords());
        if val < best.0 {
            best = (val, q.coords());
        }
    }
    let mut q = best.1;
    let mut converged = false;
    for _ in 0..200 {
        let (g, h) = w_grad_q(m, pc, q);
        if g.iter().all(|x| x.abs() < 1e-13) {
            converged = true;
            break;
        }
        for i in 0..3 {
            let step = if h[i] > 1e-12 { -g[i] / h[i] } else { -0.1 * g[i] };
            q[i] += step.clamp(-0.5, 0.5);
        }
    }
    let (g, _) = w_grad_q(m, pc, q);
    let gmax = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !converged && gmax > 1e-10 {
        return Err(Error::numerical(
            "m_w_numeric",
            format!("Newton polish stalled with gradient {gmax:e} at p = {pc:?}"),
        ));
    }
    let q = TorusPoint::new(q)?;
    Ok((w_eval(m, p, &q), q))
}

/// Hessian-derived parameters at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionParams {
    #[serde(rename = "L1")]
    pub big_l1: f64,
    #[serde(rename = "L2")]
    pub big_l2: f64,
    #[serde(rename = "W")]
    pub w_matrix: [[f64; 3]; 3],
    pub s: f64,
    pub l: f64,
    pub n_coef: f64,
    /// Relative Frobenius residual of `H_pq - L2 W`.
    pub proportionality_residual: f64,
}

/// Exact second-derivative blocks `(d^2 w/dp dp, d^2 w/dp dq)` at `(0, 0)`.
pub fn hessian_blocks(m: &ModelParams) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let mut hpp = [[0.0; 3]; 3];
    let mut hpq = [[0.0; 3]; 3];
    for i in 0..3 {
        hpp[i][i] = m.l1 + m.l2;
        hpq[i][i] = m.l2;
    }
    (hpp, hpq)
}

/// Central-difference version of [`hessian_blocks`] with step `h`.
pub fn hessian_blocks_fd(m: &ModelParams, h: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let f = |x: [f64; 6]| w_raw(m, [x[0], x[1], x[2]], [x[3], x[4], x[5]]);
    let second = |a: usize, b: usize| {
        let shifted = |sa: f64, sb: f64| {
            let mut x = [0.0; 6];
            x[a] += sa * h;
            x[b] += sb * h;
            f(x)
        };
        (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
            / (4.0 * h * h)
    };
    let mut hpp = [[0.0; 3]; 3];
    let mut hpq = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hpp[i][j] = second(i, j);
            hpq[i][j] = second(i, 3 + j);
        }
    }
    (hpp, hpq)
}

/// Extracts `(L1, L2, W)` from the two Hessian blocks, normalizing `tr W = 3`.
pub fn extract_assumption_params(
    hpp: [[f64; 3]; 3],
    hpq: [[f64; 3]; 3],
) -> Result<AssumptionParams> {
    let a = Matrix3::from_fn(|i, j| 0.5 * (hpp[i][j] + hpp[j][i]));
    let b = Matrix3::from_fn(|i, j| 0.5 * (hpq[i][j] + hpq[j][i]));
    let big_l1 = a.trace() / 3.0;
    if big_l1 <= 0.0 {
        return Err(Error::InvalidModel(format!(
            "p-p Hessian has nonpositive trace {}",
            a.trace()
        )));
    }
    let w = a / big_l1;
    let big_l2 = b.dot(&w) / w.dot(&w);
    let residual = (b - w * big_l2).norm() / b.norm().max(f64::MIN_POSITIVE);
    let min_eig = SymmetricEigen::new(w).eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::InvalidModel("W is not positive definite".into()));
    }
    if big_l2.abs() >= big_l1 || big_l2 == 0.0 {
        return Err(Error::InvalidModel(format!(
            "degenerate Hessian: need L1 > |L2| > 0, got L1 = {big_l1}, L2 = {big_l2}"
        )));
    }
    let s = big_l2 / big_l1;
    let mut w_matrix = [[0.0; 3]; 3];
    for (i, row) in w_matrix.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = w[(i, j)];
        }
    }
    Ok(AssumptionParams {
        big_l1,
        big_l2,
        w_matrix,
        s,
        l: 1.0 / (1.0 - s * s).sqrt(),
        n_coef: (big_l1 * big_l1 - big_l2 * big_l2) / big_l1,
        proportionality_residual: residual,
    })
}

pub fn assumption_params(m: &ModelParams) -> Result<AssumptionParams> {
    let (hpp, hpq) = hessian_blocks(m);
    extract_assumption_params(hpp, hpq)
}

fn w_axis_grad_hess(m: &ModelParams, p: f64, q: f64) -> (Vector2<f64>, Matrix2<f64>) {
    let cpq = m.l2 * (p + q).cos();
    let spq = m.l2 * (p + q).sin();
    let g = Vector2::new(m.l1 * p.sin() + spq, m.l1 * q.sin() + spq);
    let h = Matrix2::new(m.l1 * p.cos() + cpq, cpq, cpq, m.l1 * q.cos() + cpq);
    (g, h)
}

/// Largest value of `w` over all pairs of grid nodes, then polished by a
/// damped Newton ascent on the torus.
pub fn global_max_m(m: &ModelParams, grid: &Grid) -> Result<f64> {
    let nodes = grid.nodes();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for (i, p) in nodes.iter().enumerate() {
        let pc = p.coords();
        for (j, q) in nodes.iter().enumerate().skip(i) {
            let val = w_raw(m, pc, q.coords());
            if val > best.0 {
                best = (val, i, j);
            }
        }
    }
    let mut p = nodes[best.1].coords();
    let mut q = nodes[best.2].coords();
    let mut value = best.0;
    for _ in 0..200 {
        let mut moved = false;
        for i in 0..3 {
            let (g, h) = w_axis_grad_hess(m, p[i], q[i]);
            if g.amax() < 1e-14 {
                continue;
            }
            // shift the Hessian so the step is always an ascent direction;
            // the maximum can sit in a flat quartic valley
            let lam = SymmetricEigen::new(h).eigenvalues.max();
            let shift = lam.max(0.0) + 1e-10 * (1.0 + h.amax());
            let dir = match (h - Matrix2::identity() * shift).try_inverse() {
                Some(inv) => -(inv * g),
                None => g,
            };
            let mut best_step = None;
            let mut t = 1024.0;
            while t > 1e-12 {
                let mut p2 = p;
                let mut q2 = q;
                p2[i] += t * dir[0];
                q2[i] += t * dir[1];
                let v2 = w_raw(m, p2, q2);
                if v2 > best_step.map_or(value, |(v, _, _)| v) {
                    best_step = Some((v2, p2, q2));
                }
                t *= 0.5;
            }
            if let Some((v2, p2, q2)) = best_step {
                p = p2;
                q = q2;
                value = v2;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    if !value.is_finite() {
        return Err(Error::numerical("global_max_M", "non-finite maximum"));
    }
    Ok(value)
}
