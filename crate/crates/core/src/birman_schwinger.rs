//! Nystrom discretization of the Birman-Schwinger operator
//!
//! `T(z)(p, q) = v(p) v(q) / sqrt(Delta(p,z) Delta(q,z)) * [1/(2(w(p,q) - z)) + 1/(u0 - z)]`,
//!
//! eigenvalue counting `N(z)`, and the discretized Fock-space matrix used as
//! an independent oracle.
//!
//! In `sqrt(weight)` coordinates the discrete Hamiltonian `H - z` reduces by
//! two Schur complements (the diagonal two-particle block, then the scalar
//! sector) to `Delta^{1/2} (I - T) Delta^{1/2}` built with the Nystrom
//! determinant, so `#{eig(H) < z} = #{eig(T) > 1} + [u0 < z]` holds exactly
//! whenever the two-particle block has no eigenvalue below `z`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::friedrichs::{delta_with, DeltaRule};
use crate::linalg::{bunch_kaufman_inertia, count_above, Count, SymmetricMatrix, AMBIGUITY_WINDOW};
use crate::model::{u_eval, v_raw, w_raw, ModelParams};
use crate::torus::Grid;

/// Uniform grids cannot resolve kernels concentrated at `|p| ~ sqrt|z|`;
/// counts closer to the threshold than this need a graded grid.
pub const UNIFORM_Z_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricKernelMatrix {
    pub matrix: SymmetricMatrix,
    pub z: f64,
    pub n_per_axis: usize,
    pub rule: DeltaRule,
}

impl SymmetricKernelMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// `Delta(node, z)` for every node, checked positive.
fn positive_deltas(m: &ModelParams, z: f64, grid: &Grid, rule: DeltaRule) -> Result<Vec<f64>> {
    let d: Vec<f64> = grid
        .nodes()
        .par_iter()
        .map(|p| delta_with(rule, m, p, z, grid))
        .collect::<Result<_>>()?;
    if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::PreconditionViolation(format!(
            "Delta(p, {z}) = {v:e} <= 0 at node {i} {:?}",
            grid.nodes()[i].coords()
        )));
    }
    Ok(d)
}

fn check_z(m: &ModelParams, z: f64) -> Result<()> {
    if !(z < 0.0) {
        return Err(Error::invalid(format!("z = {z} must be negative")));
    }
    if z == m.u0 {
        return Err(Error::invalid(format!("z = {z} coincides with u0")));
    }
    Ok(())
}

/// Builds `sqrt(w_i w_j) a_i a_j k(p_i, p_j)` with `a_i = v_i / sqrt(Delta_i)`.
fn kernel_matrix<F>(grid: &Grid, m: &ModelParams, deltas: &[f64], pair: F) -> SymmetricMatrix
where
    F: Fn(f64) -> f64 + Sync,
{
    let nodes = grid.nodes();
    let a: Vec<f64> = nodes
        .iter()
        .zip(grid.weights())
        .zip(deltas)
        .map(|((p, w), d)| w.sqrt() * v_raw(m, p.coords()) / d.sqrt())
        .collect();
    let rows: Vec<Vec<f64>> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let pi = nodes[i].coords();
            (0..=i)
                .map(|j| {
                    let wij = w_raw(m, pi, nodes[j].coords());
                    a[i] * a[j] * pair(wij)
                })
                .collect()
        })
        .collect();
    SymmetricMatrix::from_lower_rows(rows)
}

pub fn assemble_t_with(
    m: &ModelParams,
    z: f64,
    grid: &Grid,
    rule: DeltaRule,
) -> Result<SymmetricKernelMatrix> {
    check_z(m, z)?;
    let deltas = positive_deltas(m, z, grid, rule)?;
    let inv_u0 = 1.0 / (m.u0 - z);
    let matrix = kernel_matrix(grid, m, &deltas, |w| 0.5 / (w - z) + inv_u0);
    Ok(SymmetricKernelMatrix {
        matrix,
        z,
        n_per_axis: grid.n_per_axis(),
        rule,
    })
}

/// Nystrom matrix of `T(z)` with the subtracted determinant.
pub fn assemble_t(m: &ModelParams, z: f64, grid: &Grid) -> Result<SymmetricKernelMatrix> {
    assemble_t_with(m, z, grid, DeltaRule::Subtracted)
}

/// `T = T1 + T2` at `u0 = 0`: `T1` carries the two-particle channel and
/// `T2 = -a a^T / z` is the rank-one scalar channel.
pub fn assemble_t_split(
    m: &ModelParams,
    z: f64,
    grid: &Grid,
    rule: DeltaRule,
) -> Result<(SymmetricKernelMatrix, SymmetricMatrix)> {
    if m.u0 != 0.0 {
        return Err(Error::invalid(format!(
            "the split form needs u0 = 0, got {}",
            m.u0
        )));
    }
    check_z(m, z)?;
    let deltas = positive_deltas(m, z, grid, rule)?;
    let t1 = kernel_matrix(grid, m, &deltas, |w| 0.5 / (w - z));
    let t2 = kernel_matrix(grid, m, &deltas, |_| -1.0 / z);
    Ok((
        SymmetricKernelMatrix {
            matrix: t1,
            z,
            n_per_axis: grid.n_per_axis(),
            rule,
        },
        t2,
    ))
}

/// Number of eigenvalues of `T(z)` above 1 plus the scalar-sector
/// contribution `[u0 < z]`, i.e. the number of eigenvalues of `H` below `z`.
pub fn n_of_z_with(m: &ModelParams, z: f64, grid: &Grid, rule: DeltaRule) -> Result<Count> {
    if rule == DeltaRule::Subtracted && !grid.is_graded() && z >= -UNIFORM_Z_LIMIT {
        return Err(Error::invalid(format!(
            "z = {z} is within {UNIFORM_Z_LIMIT} of the threshold; use a graded grid"
        )));
    }
    let t = if m.u0 == 0.0 {
        let (mut t1, t2) = assemble_t_split(m, z, grid, rule)?;
        let n = t1.dim();
        for i in 0..n {
            for j in 0..=i {
                let v = t1.matrix.get(i, j) + t2.get(i, j);
                t1.matrix.set(i, j, v);
            }
        }
        t1
    } else {
        assemble_t_with(m, z, grid, rule)?
    };
    let mut c = count_above(&t.matrix, 1.0)?;
    if m.u0 < z {
        c.count += 1;
    }
    Ok(c)
}

pub fn n_of_z(m: &ModelParams, z: f64, grid: &Grid) -> Result<Count> {
    n_of_z_with(m, z, grid, DeltaRule::Subtracted)
}

/// Largest dimension guard for [`assemble_discrete_h`].
pub const MAX_FOCK_N: usize = 6;

/// Discretized Fock-space Hamiltonian on the full pair grid, in
/// `sqrt(weight)` coordinates. Blocks are stored, not the dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFock {
    pub n_per_axis: usize,
    pub u0: f64,
    /// `sqrt(w_j) v(p_j)`: the `H01` row and the scale of `H12`.
    pub coupling: Vec<f64>,
    /// Diagonal `u(p_i)`.
    pub h11: Vec<f64>,
    /// Diagonal `w(p_a, p_b)` at pair index `a * N + b`.
    pub h22: Vec<f64>,
}

impl DiscreteFock {
    pub fn nodes(&self) -> usize {
        self.h11.len()
    }

    pub fn dim(&self) -> usize {
        let n = self.nodes();
        1 + n + n * n
    }

    /// Nonzero entries of row `1 + i` of `H12`: `(pair, value)`.
    pub fn h12_row(&self, i: usize) -> Vec<(usize, f64)> {
        let n = self.nodes();
        let mut out = Vec::with_capacity(2 * n);
        for j in 0..n {
            if j == i {
                out.push((i * n + i, self.coupling[i]));
            } else {
                out.push((i * n + j, 0.5 * self.coupling[j]));
                out.push((j * n + i, 0.5 * self.coupling[j]));
            }
        }
        out
    }

    /// Dense symmetric matrix; only sensible for `n_per_axis <= 4`.
    pub fn to_dense(&self) -> SymmetricMatrix {
        let n = self.nodes();
        let mut h = SymmetricMatrix::zeros(self.dim());
        h.set(0, 0, self.u0);
        for i in 0..n {
            h.set(0, 1 + i, self.coupling[i]);
            h.set(1 + i, 1 + i, self.h11[i]);
            for (pair, v) in self.h12_row(i) {
                h.set(1 + i, 1 + n + pair, v);
            }
        }
        for (pair, w) in self.h22.iter().enumerate() {
            h.set(1 + n + pair, 1 + n + pair, *w);
        }
        h
    }
}

pub fn assemble_discrete_h(m: &ModelParams, grid: &Grid) -> Result<DiscreteFock> {
    let n_axis = grid.n_per_axis();
    if n_axis > MAX_FOCK_N {
        return Err(Error::invalid(format!(
            "discrete Fock matrix needs n_per_axis <= {MAX_FOCK_N}, got {n_axis}"
        )));
    }
    let nodes = grid.nodes();
    let coupling = nodes
        .iter()
        .zip(grid.weights())
        .map(|(p, w)| w.sqrt() * v_raw(m, p.coords()))
        .collect();
    let h11 = nodes.iter().map(|p| u_eval(m, p)).collect();
    let mut h22 = Vec::with_capacity(nodes.len() * nodes.len());
    for a in nodes {
        for b in nodes {
            h22.push(w_raw(m, a.coords(), b.coords()));
        }
    }
    Ok(DiscreteFock {
        n_per_axis: n_axis,
        u0: m.u0,
        coupling,
        h11,
        h22,
    })
}

fn negatives_below(fock: &DiscreteFock, z: f64) -> Result<usize> {
    let n = fock.nodes();
    let mut below = 0;
    let mut s = SymmetricMatrix::zeros(1 + n);
    s.set(0, 0, fock.u0 - z);
    for i in 0..n {
        s.set(0, 1 + i, fock.coupling[i]);
        s.set(1 + i, 1 + i, fock.h11[i] - z);
    }
    // eliminate the diagonal two-particle block pair by pair
    for a in 0..n {
        for b in 0..n {
            let d = fock.h22[a * n + b] - z;
            if d == 0.0 {
                return Err(Error::PreconditionViolation(format!(
                    "z = {z} equals a two-particle diagonal entry"
                )));
            }
            if d < 0.0 {
                below += 1;
            }
            if a == b {
                let c = fock.coupling[a];
                let v = s.get(1 + a, 1 + a) - c * c / d;
                s.set(1 + a, 1 + a, v);
            } else {
                // pair (a, b) couples to row a with 1/2 c_b and to row b with 1/2 c_a
                let ca = 0.5 * fock.coupling[b];
                let cb = 0.5 * fock.coupling[a];
                let vaa = s.get(1 + a, 1 + a) - ca * ca / d;
                s.set(1 + a, 1 + a, vaa);
                let vbb = s.get(1 + b, 1 + b) - cb * cb / d;
                s.set(1 + b, 1 + b, vbb);
                let vab = s.get(1 + a, 1 + b) - ca * cb / d;
                s.set(1 + a, 1 + b, vab);
            }
        }
    }
    let inertia = match bunch_kaufman_inertia(&s, 0.0) {
        Some(i) => i.negative,
        None => crate::linalg::eigenvalues(&s)
            .iter()
            .filter(|x| **x < 0.0)
            .count(),
    };
    Ok(below + inertia)
}

/// Number of eigenvalues of the discrete Fock matrix strictly below `z`.
pub fn count_h_below(fock: &DiscreteFock, z: f64) -> Result<Count> {
    if !z.is_finite() {
        return Err(Error::invalid(format!("z = {z} is not finite")));
    }
    let lo = negatives_below(fock, z - AMBIGUITY_WINDOW)?;
    let hi = negatives_below(fock, z + AMBIGUITY_WINDOW)?;
    if lo == hi {
        Ok(Count {
            count: lo,
            ambiguous: false,
        })
    } else {
        Ok(Count {
            count: negatives_below(fock, z)?,
            ambiguous: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friedrichs::{delta_nystrom, tune_coupling};
    use crate::linalg::eigenvalues;
    use crate::model::Channel;
    use crate::torus::{make_graded_grid, make_grid};

    fn res21() -> ModelParams {
        let g = make_grid(4).unwrap();
        let m = ModelParams::remark27(2.0, 1.0, Channel::ConstantOne, 0.0).unwrap();
        m.with_c(tune_coupling(&m, &g).unwrap())
    }

    #[test]
    fn spot_entry() {
        let g = make_grid(3).unwrap();
        let m = res21();
        let t = assemble_t_with(&m, -1.0, &g, DeltaRule::Nystrom).unwrap();
        let p = g.nodes()[5];
        let d = delta_nystrom(&m, &p, -1.0, &g).unwrap();
        let w = w_raw(&m, p.coords(), p.coords());
        let expected = g.weights()[5] / d * (0.5 / (w + 1.0) + 0.5);
        assert!((t.matrix.get(5, 5) - expected).abs() < 1e-14 * expected);
        assert_eq!(t.matrix.max_asymmetry(), 0.0);
    }

    #[test]
    fn far_z_counts_nothing() {
        let g = make_grid(4).unwrap();
        let t = assemble_t(&res21(), -1e6, &g).unwrap();
        assert!(t.matrix.as_slice().iter().all(|x| x.abs() < 1e-4));
        assert_eq!(count_above(&t.matrix, 1.0).unwrap().count, 0);
    }

    #[test]
    fn precondition_and_arguments() {
        let g = make_grid(4).unwrap();
        let sub = res21().with_c(0.0);
        assert!(matches!(
            assemble_t(&sub, -0.1, &g),
            Err(Error::PreconditionViolation(_))
        ));
        assert!(assemble_t(&res21().with_u0(-0.5), -0.5, &g).is_err());
        assert!(assemble_t(&res21(), 0.1, &g).is_err());
        assert!(n_of_z(&res21(), -1e-5, &g).is_err());
        assert!(assemble_t_split(&res21(), -0.1, &g, DeltaRule::Subtracted).is_err());
    }

    #[test]
    fn split_sums_to_full() {
        let g = make_graded_grid(4, 3).unwrap();
        let m = res21().with_u0(0.0);
        let full = assemble_t(&m, -0.2, &g).unwrap();
        let (t1, t2) = assemble_t_split(&m, -0.2, &g, DeltaRule::Subtracted).unwrap();
        for i in 0..full.dim() {
            for j in 0..full.dim() {
                let s = t1.matrix.get(i, j) + t2.get(i, j);
                assert!((s - full.matrix.get(i, j)).abs() <= 1e-14 * full.matrix.get(i, j).abs());
            }
        }
        let ev = eigenvalues(&t2);
        let mut mags: Vec<f64> = ev.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        assert!(mags[1] < 1e-12 * mags[0]);
    }

    #[test]
    fn zero_channel_counts_nothing() {
        let g = make_grid(3).unwrap();
        let m = res21().with_channel(Channel::ZeroTest);
        for z in [-0.5, -0.1] {
            assert_eq!(n_of_z(&m, z, &g).unwrap().count, 0);
            let fock = assemble_discrete_h(&m, &g).unwrap();
            assert_eq!(count_h_below(&fock, z).unwrap().count, 0);
        }
    }

    #[test]
    fn fock_dimension_and_symmetry() {
        let g = make_grid(4).unwrap();
        let fock = assemble_discrete_h(&res21(), &g).unwrap();
        assert_eq!(fock.dim(), 4161);
        let g2 = make_grid(2).unwrap();
        let h = assemble_discrete_h(&res21(), &g2).unwrap().to_dense();
        assert_eq!(h.max_asymmetry(), 0.0);
        assert!(assemble_discrete_h(&res21(), &make_grid(7).unwrap()).is_err());
    }

    #[test]
    fn schur_count_matches_dense_spectrum() {
        for n in [2, 3] {
            let g = make_grid(n).unwrap();
            for m in [res21(), res21().with_u0(-0.3), res21().with_c(3.0)] {
                let fock = assemble_discrete_h(&m, &g).unwrap();
                let ev = eigenvalues(&fock.to_dense());
                for z in [-0.5, -0.1, 0.7] {
                    let direct = ev.iter().filter(|x| **x < z).count();
                    assert_eq!(count_h_below(&fock, z).unwrap().count, direct, "n={n} z={z}");
                }
            }
        }
    }

    #[test]
    fn scalar_sector_below_z_is_counted() {
        let g = make_grid(4).unwrap();
        let base = res21();
        let m = base.with_c(1.5 * base.c).with_u0(-2.0);
        let fock = assemble_discrete_h(&m, &g).unwrap();
        for z in [-0.5, -0.1] {
            let direct = count_h_below(&fock, z).unwrap().count;
            let bs = n_of_z_with(&m, z, &g, DeltaRule::Nystrom).unwrap().count;
            assert_eq!(direct, bs);
        }
    }
}
