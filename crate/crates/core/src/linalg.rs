//! Dense symmetric linear algebra at patch scale.
//!
//! Patches hold at most a few hundred nodes, so everything here is plain
//! `O(n³)` dense code: Cholesky factorization and solves, a Householder
//! tridiagonalization followed by implicit QL for the full symmetric
//! eigendecomposition, and the reduction of the generalized problem
//! `Λq = λΘq` to standard form through the Cholesky factor of `Θ`.

use thiserror::Error;

/// Iteration cap for a single eigenvalue in the QL sweep.
pub const MAX_QL_ITERATIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(
        "symmetric eigensolver did not converge within {cap} iterations \
         (off-diagonal norm {offdiag_norm:e})"
    )]
    EigenNotConverged { cap: usize, offdiag_norm: f64 },
    #[error("empty matrix")]
    Empty,
}

/// Symmetric matrix in packed lower-triangular storage.
///
/// Row `i` holds the entries `(i, 0..=i)`; the upper triangle is implied, so
/// `M = Mᵀ` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; packed_offset(n)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.row_mut(i)[i] = d;
        }
        m
    }

    /// Builds the matrix from its lower triangle, `f(i, j)` with `j <= i`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                *v = f(i, j);
            }
        }
        m
    }

    /// Symmetrizes a dense row-major matrix as `(M + Mᵀ)/2`.
    pub fn from_dense_symmetrized(n: usize, dense: &[f64]) -> Result<Self, LinalgError> {
        if dense.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                found: dense.len(),
            });
        }
        Ok(Self::from_lower_fn(n, |i, j| {
            0.5 * (dense[i * n + j] + dense[j * n + i])
        }))
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.data[packed_offset(i) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.data[packed_offset(i) + j] = value;
    }

    /// Stored part of row `i`: entries `(i, 0..=i)`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = packed_offset(i);
        &self.data[start..start + i + 1]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let start = packed_offset(i);
        &mut self.data[start..start + i + 1]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.row(i)[..i].iter().all(|&v| v == 0.0))
    }

    /// Full row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for (j, &v) in self.row(i).iter().enumerate() {
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            let row = self.row(i);
            sum += row[i] * row[i];
            sum += 2.0 * row[..i].iter().map(|v| v * v).sum::<f64>();
        }
        sum.sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "matvec dimension");
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = self.row(i);
            let mut acc = row[i] * x[i];
            for j in 0..i {
                acc += row[j] * x[j];
                y[j] += row[j] * x[i];
            }
            y[i] += acc;
        }
        y
    }

    /// `xᵀMx`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor, dense row-major (upper part zero).
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<f64>,
}

/// Factors `M = LLᵀ`.
pub fn cholesky_factor(m: &SymmetricMatrix) -> Result<CholeskyFactor, LinalgError> {
    let n = m.order();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let a_row = m.row(i);
        for j in 0..=i {
            let (head, tail) = l.split_at_mut(i * n);
            let li = &tail[..n];
            let s = if j == i {
                a_row[i] - dot(&li[..i], &li[..i])
            } else {
                let lj = &head[j * n..j * n + j];
                a_row[j] - dot(&li[..j], lj)
            };
            if j == i {
                if !(s.is_finite() && s > 0.0) {
                    return Err(LinalgError::NotPositiveDefinite { pivot: i, value: s });
                }
                tail[i] = s.sqrt();
            } else {
                tail[j] = s / head[j * n + j];
            }
        }
    }
    Ok(CholeskyFactor { n, l })
}

impl CholeskyFactor {
    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Solves `Ly = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀx = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let xi = y[i] / self.l[i * n + i];
            y[i] = xi;
            let row = &self.l[i * n..i * n + i];
            for (yk, lik) in y[..i].iter_mut().zip(row) {
                *yk -= lik * xi;
            }
        }
    }

    /// Solves `LLᵀx = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        Ok(x)
    }

    /// `L⁻¹` as a dense row-major lower-triangular matrix.
    pub fn lower_inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            let lii = self.l[i * n + i];
            let (done, rest) = w.split_at_mut(i * n);
            let wi = &mut rest[..n];
            wi[i] = 1.0;
            // w_i = (e_i − Σ_{k<i} l_ik w_k) / l_ii
            for k in 0..i {
                let lik = self.l[i * n + k];
                if lik != 0.0 {
                    let wk = &done[k * n..k * n + k + 1];
                    for (a, b) in wi[..=k].iter_mut().zip(wk) {
                        *a -= lik * b;
                    }
                }
            }
            for v in &mut wi[..=i] {
                *v /= lii;
            }
        }
        w
    }

    /// `M⁻¹ = L⁻ᵀL⁻¹`, assembled from the triangular inverse.
    pub fn spd_inverse(&self) -> SymmetricMatrix {
        let n = self.n;
        let w = self.lower_inverse();
        let mut inv = SymmetricMatrix::zeros(n);
        // (L⁻ᵀL⁻¹)_ij = Σ_k w_ki w_kj: one packed rank-one update per row of W.
        for k in 0..n {
            let wk = &w[k * n..k * n + k + 1];
            for i in 0..=k {
                let wki = wk[i];
                if wki == 0.0 {
                    continue;
                }
                for (a, b) in inv.row_mut(i).iter_mut().zip(&wk[..=i]) {
                    *a += wki * b;
                }
            }
        }
        inv
    }

    /// `‖LLᵀ − M‖_F`.
    pub fn reconstruction_error(&self, m: &SymmetricMatrix) -> f64 {
        let n = self.n;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let lij = dot(&self.l[i * n..i * n + j + 1], &self.l[j * n..j * n + j + 1]);
                let d = lij - m.get(i, j);
                sum += if i == j { d * d } else { 2.0 * d * d };
            }
        }
        sum.sqrt()
    }
}

/// Solves `Mx = b` for SPD `M`.
pub fn solve_spd(m: &SymmetricMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    cholesky_factor(m)?.solve(b)
}

/// Solves `MX = B` for several right-hand sides, given as columns.
pub fn solve_spd_many(
    m: &SymmetricMatrix,
    columns: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, LinalgError> {
    let factor = cholesky_factor(m)?;
    columns.iter().map(|b| factor.solve(b)).collect()
}

/// Full eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Row-major; row `i` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<f64>,
    n: usize,
}

impl SymmetricEigen {
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }
}

/// Householder tridiagonalization plus implicit QL (EISPACK tred2/tql2).
///
/// The working array holds the transformation `V` transposed, so every
/// accumulation of Householder reflections and Givens rotations touches
/// contiguous memory.
pub fn symmetric_eigen(a: &SymmetricMatrix) -> Result<SymmetricEigen, LinalgError> {
    let n = a.order();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    // w[c*n + r] holds V(r, c).
    let mut w = a.to_dense();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut w, &mut d, &mut e);
    tridiagonal_ql(n, &mut w, &mut d, &mut e)?;
    Ok(SymmetricEigen {
        values: d,
        vectors: w,
        n,
    })
}

fn tridiagonalize(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| c * n + r;

    for j in 0..n {
        d[j] = w[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for &dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[at(i - 1, j)];
                w[at(i, j)] = 0.0;
                w[at(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                w[at(j, i)] = f;
                let col = &w[j * n..j * n + i];
                g = e[j] + col[j] * f;
                for k in (j + 1)..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut w[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = w[at(i - 1, j)];
                w[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..n - 1 {
        w[at(n - 1, i)] = w[at(i, i)];
        w[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let (lo, hi) = w.split_at_mut((i + 1) * n);
                let next = &hi[..=i];
                let col = &mut lo[j * n..j * n + i + 1];
                let g = dot(next, col);
                for (ck, dk) in col.iter_mut().zip(&d[..=i]) {
                    *ck -= g * dk;
                }
            }
        }
        for k in 0..=i {
            w[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[at(n - 1, j)];
        w[at(n - 1, j)] = 0.0;
    }
    w[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tridiagonal_ql(
    n: usize,
    w: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n always
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > MAX_QL_ITERATIONS {
                    let offdiag_norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                    return Err(LinalgError::EigenNotConverged {
                        cap: MAX_QL_ITERATIONS,
                        offdiag_norm,
                    });
                }

                // Implicit shift.
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                // Implicit QL transformation.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    // Columns i and i+1 of V are rows of w.
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let vi = &mut lo[i * n..];
                    let vi1 = &mut hi[..n];
                    for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Selection sort, ascending; swaps whole eigenvector rows.
    for i in 0..n - 1 {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            let (lo, hi) = w.split_at_mut(k * n);
            lo[i * n..(i + 1) * n].swap_with_slice(&mut hi[..n]);
        }
    }
    Ok(())
}

/// Smallest eigenpair of `Λq = λΘq`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub eigenvalue: f64,
    /// Unit 2-norm; the entry of largest magnitude is positive.
    pub eigenvector: Vec<f64>,
    /// `‖Λq − λΘq‖₂`.
    pub residual: f64,
}

impl EigenPair {
    /// Residual bound every returned pair satisfies.
    pub fn residual_tolerance(
        lambda: &SymmetricMatrix,
        theta: &SymmetricMatrix,
        value: f64,
    ) -> f64 {
        1e-10 * (lambda.frobenius_norm() + value.abs() * theta.frobenius_norm())
    }
}

/// Rescales to unit norm and makes the largest-magnitude entry positive.
pub fn normalize_with_sign_convention(v: &mut [f64]) {
    let norm = norm2(v);
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    let scale = if v[pivot] < 0.0 {
        -1.0 / norm
    } else {
        1.0 / norm
    };
    for x in v.iter_mut() {
        *x *= scale;
    }
}

/// Algebraically smallest eigenpair of the symmetric-definite pencil `(Λ, Θ)`.
///
/// With `Θ = LLᵀ` the pencil is reduced to the standard problem
/// `L⁻¹ΛL⁻ᵀy = λy`, fully diagonalized, and mapped back as `q = L⁻ᵀy`.
pub fn smallest_generalized_eigenpair(
    lambda: &SymmetricMatrix,
    theta: &SymmetricMatrix,
) -> Result<EigenPair, LinalgError> {
    let n = lambda.order();
    if theta.order() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: theta.order(),
        });
    }
    if n == 0 {
        return Err(LinalgError::Empty);
    }

    let mut q;
    if theta.is_diagonal() {
        // L = diag(√θ_i): the reduction is a two-sided diagonal scaling.
        let mut inv_sqrt = Vec::with_capacity(n);
        for (i, t) in theta.diagonal().into_iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(LinalgError::NotPositiveDefinite { pivot: i, value: t });
            }
            inv_sqrt.push(1.0 / t.sqrt());
        }
        let reduced =
            SymmetricMatrix::from_lower_fn(n, |i, j| lambda.get(i, j) * inv_sqrt[i] * inv_sqrt[j]);
        let eig = symmetric_eigen(&reduced)?;
        q = eig.vector(0).to_vec();
        for (qi, s) in q.iter_mut().zip(&inv_sqrt) {
            *qi *= s;
        }
    } else {
        let factor = cholesky_factor(theta)?;
        let winv = factor.lower_inverse();
        let dense = lambda.to_dense();
        // T = L⁻¹Λ, then C = T·L⁻ᵀ (lower triangle only).
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            let wi = &winv[i * n..i * n + i + 1];
            let ti = &mut t[i * n..(i + 1) * n];
            for (k, &wik) in wi.iter().enumerate() {
                for (a, b) in ti.iter_mut().zip(&dense[k * n..(k + 1) * n]) {
                    *a += wik * b;
                }
            }
        }
        let reduced = SymmetricMatrix::from_lower_fn(n, |i, j| {
            dot(&t[i * n..i * n + j + 1], &winv[j * n..j * n + j + 1])
        });
        let eig = symmetric_eigen(&reduced)?;
        q = eig.vector(0).to_vec();
        factor.solve_upper_in_place(&mut q);
    }

    normalize_with_sign_convention(&mut q);
    let lq = lambda.matvec(&q);
    let tq = theta.matvec(&q);
    let eigenvalue = dot(&q, &lq) / dot(&q, &tq);
    let residual = lq
        .iter()
        .zip(&tq)
        .map(|(a, b)| (a - eigenvalue * b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(EigenPair {
        eigenvalue,
        eigenvector: q,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymmetricMatrix {
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SymmetricMatrix::from_lower_fn(n, |i, j| {
            let s: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
            s + if i == j { n as f64 * 0.1 } else { 0.0 }
        })
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> SymmetricMatrix {
        SymmetricMatrix::from_lower_fn(n, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn packed_storage_roundtrip() {
        let m = SymmetricMatrix::from_lower_fn(4, |i, j| (10 * i + j) as f64);
        let d = m.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d[i * 4 + j], d[j * 4 + i]);
                assert_eq!(m.get(i, j), d[i * 4 + j]);
            }
        }
        assert_eq!(SymmetricMatrix::from_dense_symmetrized(4, &d).unwrap(), m);
        let x = [1.0, -2.0, 0.5, 3.0];
        let y = m.matvec(&x);
        for i in 0..4 {
            let expected: f64 = (0..4).map(|j| d[i * 4 + j] * x[j]).sum();
            assert_relative_eq!(y[i], expected, max_relative = 1e-15);
        }
    }

    #[test]
    fn cholesky_identity_and_hand_example() {
        let f = cholesky_factor(&SymmetricMatrix::identity(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f.entry(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let m = SymmetricMatrix::from_lower_fn(2, |i, j| [[4.0, 0.0], [2.0, 3.0]][i][j]);
        let f = cholesky_factor(&m).unwrap();
        assert_relative_eq!(f.entry(0, 0), 2.0);
        assert_relative_eq!(f.entry(1, 0), 1.0);
        assert_relative_eq!(f.entry(1, 1), 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(f.entry(0, 1), 0.0);
    }

    #[test]
    fn cholesky_hilbert_reconstruction() {
        let h = SymmetricMatrix::from_lower_fn(4, |i, j| 1.0 / (i + j + 1) as f64);
        let f = cholesky_factor(&h).unwrap();
        assert!(f.reconstruction_error(&h) <= 1e-12 * h.frobenius_norm());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = SymmetricMatrix::from_lower_fn(
            3,
            |i, j| if i == j { [1.0, 1.0, -1.0][i] } else { 0.0 },
        );
        assert!(matches!(
            cholesky_factor(&m),
            Err(LinalgError::NotPositiveDefinite { pivot: 2, .. })
        ));
        let semidef = SymmetricMatrix::from_lower_fn(2, |_, _| 1.0);
        assert!(matches!(
            cholesky_factor(&semidef),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn solves() {
        let b = [1.0, 2.0, 3.0];
        assert_eq!(
            solve_spd(&SymmetricMatrix::identity(3), &b).unwrap(),
            b.to_vec()
        );

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_spd(&mut rng, 10);
        let b: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_spd(&m, &b).unwrap();
        let r: Vec<f64> = m.matvec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-10 * m.frobenius_norm() * norm2(&x));

        // b = column k of M gives e_k
        let cols: Vec<Vec<f64>> = (0..10)
            .map(|k| (0..10).map(|i| m.get(i, k)).collect())
            .collect();
        for (k, x) in solve_spd_many(&m, &cols).unwrap().iter().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                let e = if i == k { 1.0 } else { 0.0 };
                assert!((xi - e).abs() < 1e-10);
            }
        }
        assert!(solve_spd(&m, &[1.0]).is_err());
    }

    #[test]
    fn spd_inverse_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_spd(&mut rng, 9);
        let inv = cholesky_factor(&m).unwrap().spd_inverse();
        let md = m.to_dense();
        let id = inv.to_dense();
        for i in 0..9 {
            for j in 0..9 {
                let p: f64 = (0..9).map(|k| md[i * 9 + k] * id[k * 9 + j]).sum();
                assert!((p - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 7, 20] {
            let a = random_symmetric(&mut rng, n);
            let eig = symmetric_eigen(&a).unwrap();
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            for k in 0..n {
                let v = eig.vector(k);
                assert_relative_eq!(norm2(v), 1.0, max_relative = 1e-12);
                let av = a.matvec(v);
                for i in 0..n {
                    assert!(
                        (av[i] - eig.values[k] * v[i]).abs() < 1e-11 * (1.0 + a.frobenius_norm())
                    );
                }
            }
        }
    }

    #[test]
    fn identity_and_diagonal_pencils() {
        let p = smallest_generalized_eigenpair(
            &SymmetricMatrix::identity(3),
            &SymmetricMatrix::identity(3),
        )
        .unwrap();
        assert_relative_eq!(p.eigenvalue, 1.0, max_relative = 1e-15);
        assert_relative_eq!(norm2(&p.eigenvector), 1.0, max_relative = 1e-15);
        let big = p.eigenvector.iter().cloned().fold(f64::MIN, f64::max);
        assert!(big > 0.0);

        let lambda = SymmetricMatrix::from_diagonal(&[2.0, 3.0]);
        let p = smallest_generalized_eigenpair(&lambda, &SymmetricMatrix::identity(2)).unwrap();
        assert_relative_eq!(p.eigenvalue, 2.0);
        assert_eq!(p.eigenvector, vec![1.0, 0.0]);
        assert_eq!(p.residual, 0.0);
    }

    #[test]
    fn general_theta_path_matches_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 5, 12] {
            let lambda = random_symmetric(&mut rng, n);
            let theta = random_spd(&mut rng, n);
            let p = smallest_generalized_eigenpair(&lambda, &theta).unwrap();
            assert!(p.residual <= EigenPair::residual_tolerance(&lambda, &theta, p.eigenvalue));
            assert_relative_eq!(norm2(&p.eigenvector), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn generalized_rejects_bad_theta() {
        let theta = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            smallest_generalized_eigenpair(&SymmetricMatrix::identity(2), &theta),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(smallest_generalized_eigenpair(
            &SymmetricMatrix::identity(2),
            &SymmetricMatrix::identity(3)
        )
        .is_err());
    }
}
