//! Eigenvalue counting for real symmetric matrices by inertia.
//!
//! `count(eigenvalues > mu)` is read off the signs of the block-diagonal
//! factor of `A - mu I = L D L^T`. Dense matrices use Bunch-Kaufman pivoting;
//! symmetric banded Toeplitz matrices use an unpivoted banded factorization
//! guarded by pivot-size checks. Both fall back to a full eigensolve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Half-width of the window used to flag eigenvalues close to the shift.
pub const AMBIGUITY_WINDOW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Dense real symmetric matrix, row-major with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        SymmetricMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds the matrix from `f(i, j)` evaluated once per unordered pair `j <= i`.
    pub fn from_lower_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds the matrix from lower-triangle rows, `rows[i].len() == i + 1`.
    pub fn from_lower_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.into_iter().enumerate() {
            debug_assert_eq!(row.len(), i + 1);
            for (j, v) in row.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Upper bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                let off: f64 = row.iter().map(|x| x.abs()).sum::<f64>() - row[i].abs();
                row[i] + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn add_pivot_block(inertia: &mut Inertia, d11: f64, d21: f64, d22: f64) {
    let det = d11 * d22 - d21 * d21;
    if det < 0.0 {
        inertia.positive += 1;
        inertia.negative += 1;
    } else if det > 0.0 {
        if d11 + d22 > 0.0 {
            inertia.positive += 2;
        } else {
            inertia.negative += 2;
        }
    } else {
        inertia.zero += 1;
        add_pivot(inertia, d11 + d22);
    }
}

fn add_pivot(inertia: &mut Inertia, d: f64) {
    if d > 0.0 {
        inertia.positive += 1;
    } else if d < 0.0 {
        inertia.negative += 1;
    } else {
        inertia.zero += 1;
    }
}

/// Inertia of `A - shift I` by Bunch-Kaufman `L D L^T` on the lower triangle.
/// Returns `None` if non-finite values appear.
pub fn bunch_kaufman_inertia(a: &SymmetricMatrix, shift: f64) -> Option<Inertia> {
    let n = a.n;
    let mut m = a.data.clone();
    for i in 0..n {
        m[i * n + i] -= shift;
    }
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let mut inertia = Inertia::default();
    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    let at = |m: &Vec<f64>, i: usize, j: usize| m[i * n + j];
    let mut k = 0;
    while k < n {
        let akk = at(&m, k, k).abs();
        let mut imax = k;
        let mut colmax = 0.0;
        for i in k + 1..n {
            let v = at(&m, i, k).abs();
            if v > colmax {
                colmax = v;
                imax = i;
            }
        }
        if !(akk.is_finite() && colmax.is_finite()) {
            return None;
        }
        if akk.max(colmax) == 0.0 {
            inertia.zero += 1;
            k += 1;
            continue;
        }
        let (kp, kstep) = if akk >= alpha * colmax {
            (k, 1)
        } else {
            let mut rowmax = 0.0f64;
            for j in k..imax {
                rowmax = rowmax.max(at(&m, imax, j).abs());
            }
            for j in imax + 1..n {
                rowmax = rowmax.max(at(&m, j, imax).abs());
            }
            if akk * rowmax >= alpha * colmax * colmax {
                (k, 1)
            } else if at(&m, imax, imax).abs() >= alpha * rowmax {
                (imax, 1)
            } else {
                (imax, 2)
            }
        };
        let kk = k + kstep - 1;
        if kp != kk {
            for j in k..kk {
                m.swap(kk * n + j, kp * n + j);
            }
            m.swap(kk * n + kk, kp * n + kp);
            for j in kk + 1..kp {
                m.swap(j * n + kk, kp * n + j);
            }
            for i in kp + 1..n {
                m.swap(i * n + kk, i * n + kp);
            }
        }
        if kstep == 1 {
            let d = at(&m, k, k);
            add_pivot(&mut inertia, d);
            for i in k + 1..n {
                c1[i] = at(&m, i, k);
            }
            for i in k + 1..n {
                let f = c1[i] / d;
                if f == 0.0 {
                    continue;
                }
                let row = &mut m[i * n + k + 1..=i * n + i];
                for (x, c) in row.iter_mut().zip(&c1[k + 1..=i]) {
                    *x -= f * c;
                }
            }
        } else {
            let d11 = at(&m, k, k);
            let d21 = at(&m, k + 1, k);
            let d22 = at(&m, k + 1, k + 1);
            add_pivot_block(&mut inertia, d11, d21, d22);
            let det = d11 * d22 - d21 * d21;
            for i in k + 2..n {
                c1[i] = at(&m, i, k);
                c2[i] = at(&m, i, k + 1);
            }
            for i in k + 2..n {
                let f1 = (c1[i] * d22 - c2[i] * d21) / det;
                let f2 = (c2[i] * d11 - c1[i] * d21) / det;
                let row = &mut m[i * n + k + 2..=i * n + i];
                for ((x, a1), a2) in row.iter_mut().zip(&c1[k + 2..=i]).zip(&c2[k + 2..=i]) {
                    *x -= f1 * a1 + f2 * a2;
                }
            }
        }
        k += kstep;
    }
    Some(inertia)
}

/// Eigenvalues by a full symmetric eigensolve.
pub fn eigenvalues(a: &SymmetricMatrix) -> Vec<f64> {
    a.to_dmatrix().symmetric_eigenvalues().iter().copied().collect()
}

fn count_strictly_above(a: &SymmetricMatrix, mu: f64) -> Result<usize> {
    if let Some(inertia) = bunch_kaufman_inertia(a, mu) {
        return Ok(inertia.positive);
    }
    let ev = eigenvalues(a);
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(
            "count_above",
            "factorization and eigensolver both failed",
        ));
    }
    Ok(ev.iter().filter(|&&x| x > mu).count())
}

/// Eigenvalue count with an ambiguity flag for eigenvalues within
/// [`AMBIGUITY_WINDOW`] of the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Count {
    pub count: usize,
    pub ambiguous: bool,
}

fn windowed_count<F>(mu: f64, upper_bound: f64, count: F) -> Result<Count>
where
    F: Fn(f64) -> Result<usize>,
{
    if !mu.is_finite() {
        return Err(Error::invalid(format!("threshold mu = {mu} is not finite")));
    }
    if upper_bound <= mu - AMBIGUITY_WINDOW {
        return Ok(Count {
            count: 0,
            ambiguous: false,
        });
    }
    let below = count(mu - AMBIGUITY_WINDOW)?;
    let above = count(mu + AMBIGUITY_WINDOW)?;
    if below == above {
        Ok(Count {
            count: above,
            ambiguous: false,
        })
    } else {
        Ok(Count {
            count: count(mu)?,
            ambiguous: true,
        })
    }
}

/// Number of eigenvalues strictly greater than `mu`.
pub fn count_above(a: &SymmetricMatrix, mu: f64) -> Result<Count> {
    windowed_count(mu, a.gershgorin_upper(), |s| count_strictly_above(a, s))
}

/// Symmetric Toeplitz matrix `A_ij = column[|i - j|]` of dimension `column.len()`,
/// with entries beyond `bandwidth` treated as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricToeplitz {
    pub column: Vec<f64>,
    pub bandwidth: usize,
}

impl SymmetricToeplitz {
    /// Drops trailing entries below `rel_drop * |column[0]|` from the band.
    pub fn new(column: Vec<f64>, rel_drop: f64) -> Self {
        let scale = column.first().map_or(0.0, |x| x.abs());
        let bandwidth = column
            .iter()
            .rposition(|x| x.abs() > rel_drop * scale)
            .unwrap_or(0);
        SymmetricToeplitz { column, bandwidth }
    }

    pub fn dim(&self) -> usize {
        self.column.len()
    }

    pub fn to_dense(&self) -> SymmetricMatrix {
        let b = self.bandwidth;
        SymmetricMatrix::from_lower_fn(self.dim(), |i, j| {
            if i - j <= b {
                self.column[i - j]
            } else {
                0.0
            }
        })
    }

    pub fn gershgorin_upper(&self) -> f64 {
        let m = self.dim();
        let b = self.bandwidth.min(m.saturating_sub(1));
        let mut worst = f64::NEG_INFINITY;
        // rows are equivalent up to how much of the band fits on each side
        let abs: Vec<f64> = self.column[..=b].iter().map(|x| x.abs()).collect();
        let mut prefix = vec![0.0; b + 2];
        for d in 1..=b {
            prefix[d + 1] = prefix[d] + abs[d];
        }
        for i in 0..m {
            let left = i.min(b);
            let right = (m - 1 - i).min(b);
            let r = prefix[left + 1] + prefix[right + 1];
            worst = worst.max(self.column[0] + r);
            if i > b && m - 1 - i > b {
                // interior rows all share the same bound
                continue;
            }
        }
        worst
    }

    /// Inertia of `A - shift I` by unpivoted banded `L D L^T`.
    /// Returns `None` when a pivot is too small or the factors grow.
    pub fn banded_inertia(&self, shift: f64) -> Option<Inertia> {
        let m = self.dim();
        let b = self.bandwidth.min(m.saturating_sub(1));
        let w = b + 1;
        // row i stores columns i-b..=i at offsets 0..=b
        let mut band = vec![0.0; m * w];
        for i in 0..m {
            for e in 0..=b {
                let d = b - e;
                if d <= i {
                    band[i * w + e] = self.column[d] - if d == 0 { shift } else { 0.0 };
                }
            }
        }
        let scale = self.column[..=b]
            .iter()
            .map(|x| x.abs())
            .sum::<f64>()
            .max(shift.abs());
        let mut inertia = Inertia::default();
        let mut col = vec![0.0; w];
        for k in 0..m {
            let d = band[k * w + b];
            if !(d.abs() > 1e-10 * scale) || d.abs() > 1e8 * scale {
                return None;
            }
            add_pivot(&mut inertia, d);
            let last = (k + b).min(m - 1);
            // col[i - k] = A[i][k]
            for i in k + 1..=last {
                col[i - k] = band[i * w + (k + b - i)];
            }
            for i in k + 1..=last {
                let f = col[i - k] / d;
                if f == 0.0 {
                    continue;
                }
                // columns j = k+1..=i live at offsets j + b - i
                let start = i * w + (k + 1 + b - i);
                let row = &mut band[start..=i * w + b];
                for (x, c) in row.iter_mut().zip(&col[1..=i - k]) {
                    *x -= f * c;
                }
            }
        }
        Some(inertia)
    }
}

fn toeplitz_count_strictly_above(t: &SymmetricToeplitz, mu: f64) -> Result<usize> {
    if let Some(inertia) = t.banded_inertia(mu) {
        return Ok(inertia.positive);
    }
    count_strictly_above(&t.to_dense(), mu)
}

pub fn count_above_toeplitz(t: &SymmetricToeplitz, mu: f64) -> Result<Count> {
    windowed_count(mu, t.gershgorin_upper(), |s| toeplitz_count_strictly_above(t, s))
}
