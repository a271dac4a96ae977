//! Small dense square matrices (n = 2 or 3) and the linear algebra the rest
//! of the crate needs: singular values, `R diag(λ) S` decompositions,
//! rank-one tests, dyads and minors.

use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_traits::Float;
use thiserror::Error;

use crate::tol::{JACOBI_MAX_SWEEPS, JACOBI_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("dimension {0} is not supported (expected 2 or 3)")]
    BadDimension(usize),
    #[error("expected {expected} entries, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("a dyad needs two nonzero vectors")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
}

/// Row-major n x n matrix, n in {2, 3}.
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix {
    n: usize,
    e: [f64; 9],
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.n {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.debug_list().entries(self.row(i)).finish()?;
        }
        f.write_str("]")
    }
}

impl Matrix {
    pub fn from_slice(n: usize, entries: &[f64]) -> Result<Self, MatError> {
        if n != 2 && n != 3 {
            return Err(MatError::BadDimension(n));
        }
        if entries.len() != n * n {
            return Err(MatError::BadLength { expected: n * n, got: entries.len() });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(MatError::NonFinite);
        }
        let mut e = [0.0; 9];
        e[..n * n].copy_from_slice(entries);
        Ok(Self { n, e })
    }

    /// Builds from nested rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, MatError> {
        let n = rows.len();
        if n != 2 && n != 3 {
            return Err(MatError::BadDimension(n));
        }
        let mut e = [0.0; 9];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(MatError::BadLength { expected: n, got: r.len() });
            }
            e[i * n..i * n + n].copy_from_slice(r);
        }
        Self::from_slice(n, &e[..n * n])
    }

    /// 2x2 from rows; panics on non-finite input.
    pub fn new2(r: [[f64; 2]; 2]) -> Self {
        Self::from_slice(2, &[r[0][0], r[0][1], r[1][0], r[1][1]]).expect("finite 2x2")
    }

    /// 3x3 from rows; panics on non-finite input.
    pub fn new3(r: [[f64; 3]; 3]) -> Self {
        let flat = [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]];
        Self::from_slice(3, &flat).expect("finite 3x3")
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n == 2 || n == 3, "dimension must be 2 or 3");
        Self { n, e: [0.0; 9] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.e[i * self.n + j] = v;
    }

    /// Row-major entries, length n².
    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.e[..self.n * self.n]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.e[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn det(&self) -> f64 {
        let g = |i, j| self.get(i, j);
        if self.n == 2 {
            g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)
        } else {
            g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.entries().iter().zip(other.entries()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Frobenius norm `|ξ|`.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for x in m.e[..self.n * self.n].iter_mut() {
            *x *= s;
        }
        m
    }

    pub fn matmul(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n, "dimension mismatch");
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.get(i, k) * o.get(k, j);
                }
                m.set(i, j, s);
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    /// Cofactor matrix, `cof ξ = det(ξ) ξ^{-T}` when invertible.
    pub fn cofactor(&self) -> Self {
        let n = self.n;
        if n == 2 {
            return Self::new2([[self.get(1, 1), -self.get(1, 0)], [-self.get(0, 1), self.get(0, 0)]]);
        }
        let mut c = Self::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                let (i1, i2) = others(i);
                let (j1, j2) = others(j);
                let minor = self.get(i1, j1) * self.get(i2, j2) - self.get(i1, j2) * self.get(i2, j1);
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                c.set(i, j, sign * minor);
            }
        }
        c
    }

    /// Matrix of all 2x2 minors of a 3x3 matrix, rows and columns indexed by
    /// the pairs (0,1), (0,2), (1,2) in lexicographic order.
    pub fn adj2(&self) -> Self {
        assert_eq!(self.n, 3, "adj2 is defined here for 3x3 matrices");
        const P: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
        let mut a = Self::zeros(3);
        for (r, &(i1, i2)) in P.iter().enumerate() {
            for (c, &(j1, j2)) in P.iter().enumerate() {
                a.set(r, c, self.get(i1, j1) * self.get(i2, j2) - self.get(i1, j2) * self.get(i2, j1));
            }
        }
        a
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|x| x.is_finite())
    }

    pub fn approx_eq(&self, o: &Self, tol: f64) -> bool {
        self.n == o.n && (*self - *o).max_abs() <= tol * 1.0f64.max(self.max_abs()).max(o.max_abs())
    }
}

fn others(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl Add for Matrix {
    type Output = Matrix;
    fn add(mut self, o: Matrix) -> Matrix {
        self += o;
        self
    }
}

impl AddAssign for Matrix {
    fn add_assign(&mut self, o: Matrix) {
        assert_eq!(self.n, o.n, "dimension mismatch");
        for (a, b) in self.e.iter_mut().zip(o.e.iter()) {
            *a += b;
        }
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(mut self, o: Matrix) -> Matrix {
        self -= o;
        self
    }
}

impl SubAssign for Matrix {
    fn sub_assign(&mut self, o: Matrix) {
        assert_eq!(self.n, o.n, "dimension mismatch");
        for (a, b) in self.e.iter_mut().zip(o.e.iter()) {
            *a -= b;
        }
    }
}

impl Neg for Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Matrix {
    type Output = Matrix;
    fn mul(self, s: f64) -> Matrix {
        self.scale(s)
    }
}

impl Mul<Matrix> for f64 {
    type Output = Matrix;
    fn mul(self, m: Matrix) -> Matrix {
        m.scale(self)
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, o: Matrix) -> Matrix {
        self.matmul(&o)
    }
}

/// Ascending singular values `λ_1 <= ... <= λ_n`.
#[derive(Clone, Copy, PartialEq)]
pub struct SingularValues {
    n: usize,
    v: [f64; 3],
}

impl fmt::Debug for SingularValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.values()).finish()
    }
}

impl SingularValues {
    /// Sorts and stores; entries must be nonnegative.
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n == 2 || n == 3, "dimension must be 2 or 3");
        let mut v = [0.0; 3];
        v[..n].copy_from_slice(values);
        v[..n].sort_by(|a, b| a.partial_cmp(b).expect("finite singular values"));
        Self { n, v }
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.v[..self.n]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn smallest(&self) -> f64 {
        self.v[0]
    }

    pub fn largest(&self) -> f64 {
        self.v[self.n - 1]
    }

    pub fn product(&self) -> f64 {
        self.values().iter().product()
    }

    pub fn sum_sq(&self) -> f64 {
        self.values().iter().map(|x| x * x).sum()
    }

    /// Euclidean distance to another tuple of the same length.
    pub fn dist(&self, p: &[f64]) -> f64 {
        self.values().iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Singular values of ξ. For n = 2 the closed form
/// `λ_{1,2} = ½[√(|ξ|²+2|det ξ|) ∓ √(|ξ|²−2|det ξ|)]`; the smaller one is
/// evaluated as `|det ξ| / λ_2`, the same quantity without cancellation.
pub fn singular_values(xi: &Matrix) -> SingularValues {
    if xi.n() == 2 {
        let f2 = xi.norm_sq();
        let d = xi.det().abs();
        let p = (f2 + 2.0 * d).max(0.0).sqrt();
        let m = (f2 - 2.0 * d).max(0.0).sqrt();
        let l2 = 0.5 * (p + m);
        let l1 = if l2 > 0.0 { d / l2 } else { 0.0 };
        SingularValues { n: 2, v: [l1.min(l2), l2, 0.0] }
    } else {
        let (_, b) = orthogonalize_rows(xi);
        let mut s = [0.0; 3];
        for (i, si) in s.iter_mut().enumerate() {
            *si = b.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        SingularValues::new(&s)
    }
}

/// One-sided Jacobi: returns (Q, B) with Q orthogonal, `B = Q ξ` and the
/// rows of B mutually orthogonal, so that `Q ξ ξ^T Q^T` is diagonal.
fn orthogonalize_rows(xi: &Matrix) -> (Matrix, Matrix) {
    let n = xi.n();
    let mut q = Matrix::identity(n);
    let mut b = *xi;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for r in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    let (x, y) = (b.get(p, k), b.get(r, k));
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_THRESHOLD * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut b, p, r, c, s);
                rotate_rows(&mut q, p, r, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (q, b)
}

fn rotate_rows(m: &mut Matrix, p: usize, r: usize, c: f64, s: f64) {
    for k in 0..m.n() {
        let (x, y) = (m.get(p, k), m.get(r, k));
        m.set(p, k, c * x - s * y);
        m.set(r, k, s * x + c * y);
    }
}

/// Decomposition `ξ = R diag(Σ) S` with R, S orthogonal and Σ ascending.
/// S is always a rotation; R is one too whenever `det ξ > 0`.
pub fn rsd_decompose(xi: &Matrix) -> (Matrix, SingularValues, Matrix) {
    let n = xi.n();
    let (q, b) = orthogonalize_rows(xi);
    let mut norms = [0.0; 3];
    for (i, s) in norms.iter_mut().enumerate().take(n) {
        *s = b.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let mut order = [0usize, 1, 2];
    order[..n].sort_by(|&i, &j| norms[i].partial_cmp(&norms[j]).expect("finite"));

    // Rows of S are the normalized rows of B in ascending order; zero rows
    // are completed to an orthonormal basis.
    let scale = norms[order[n - 1]];
    let mut s_rows = [[0.0f64; 3]; 3];
    let mut filled = [false; 3];
    for (k, &i) in order[..n].iter().enumerate() {
        if norms[i] > 1e-300 && norms[i] > scale * 1e-300 {
            for c in 0..n {
                s_rows[k][c] = b.get(i, c) / norms[i];
            }
            filled[k] = true;
        }
    }
    complete_basis(&mut s_rows, &mut filled, n);

    let mut r = Matrix::zeros(n);
    let qt = q.transpose();
    let mut s = Matrix::zeros(n);
    for (k, &i) in order[..n].iter().enumerate() {
        for row in 0..n {
            r.set(row, k, qt.get(row, i));
        }
        for c in 0..n {
            s.set(k, c, s_rows[k][c]);
        }
    }
    let sv = singular_values(xi);
    if s.det() < 0.0 {
        for row in 0..n {
            r.set(row, 0, -r.get(row, 0));
        }
        for c in 0..n {
            s.set(0, c, -s.get(0, c));
        }
    }
    (r, sv, s)
}

fn complete_basis(rows: &mut [[f64; 3]; 3], filled: &mut [bool; 3], n: usize) {
    for k in 0..n {
        if filled[k] {
            continue;
        }
        let mut best = [0.0; 3];
        let mut best_norm = -1.0;
        for e in 0..n {
            let mut v = [0.0; 3];
            v[e] = 1.0;
            for j in 0..n {
                if filled[j] {
                    let d: f64 = (0..n).map(|c| v[c] * rows[j][c]).sum();
                    for c in 0..n {
                        v[c] -= d * rows[j][c];
                    }
                }
            }
            let nv = (0..n).map(|c| v[c] * v[c]).sum::<f64>().sqrt();
            if nv > best_norm {
                best_norm = nv;
                best = v;
            }
        }
        for c in 0..n {
            rows[k][c] = best[c] / best_norm;
        }
        filled[k] = true;
    }
}

/// Second-largest singular value; the matrix has rank at most one exactly
/// when this vanishes.
pub fn rank_one_defect(xi: &Matrix) -> f64 {
    let sv = singular_values(xi);
    sv.values()[xi.n() - 2]
}

/// `rank ξ == 1` numerically: defect at most `tol·max(1, λ_max)` and
/// `|ξ| >= tol`, so the zero matrix is rejected.
pub fn is_rank_one(xi: &Matrix, tol: f64) -> bool {
    let sv = singular_values(xi);
    let defect = sv.values()[xi.n() - 2];
    defect <= tol * 1.0f64.max(sv.largest()) && xi.norm() >= tol
}

/// Nearest rank-one matrix in Frobenius norm (truncated decomposition).
pub fn rank_one_part(xi: &Matrix) -> Matrix {
    let n = xi.n();
    let (r, sv, s) = rsd_decompose(xi);
    let a: [f64; 3] = core::array::from_fn(|i| if i < n { r.get(i, n - 1) } else { 0.0 });
    let b: [f64; 3] = core::array::from_fn(|i| if i < n { s.get(n - 1, i) } else { 0.0 });
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, sv.largest() * a[i] * b[j]);
        }
    }
    m
}

/// Rank-one matrix `a ⊗ b` with entries `a_i b_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dyad {
    n: usize,
    a: [f64; 3],
    b: [f64; 3],
}

impl Dyad {
    pub fn new(a: &[f64], b: &[f64]) -> Result<Self, MatError> {
        if a.len() != b.len() {
            return Err(MatError::Mismatch(a.len(), b.len()));
        }
        let n = a.len();
        if n != 2 && n != 3 {
            return Err(MatError::BadDimension(n));
        }
        if a.iter().chain(b).any(|x| !x.is_finite()) {
            return Err(MatError::NonFinite);
        }
        if a.iter().all(|&x| x == 0.0) || b.iter().all(|&x| x == 0.0) {
            return Err(MatError::ZeroVector);
        }
        let mut d = Self { n, a: [0.0; 3], b: [0.0; 3] };
        d.a[..n].copy_from_slice(a);
        d.b[..n].copy_from_slice(b);
        Ok(d)
    }

    pub fn a(&self) -> &[f64] {
        &self.a[..self.n]
    }

    pub fn b(&self) -> &[f64] {
        &self.b[..self.n]
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.set(i, j, self.a[i] * self.b[j]);
            }
        }
        m
    }
}

/// The minors map `T(ξ)`: `(ξ, det ξ)` for n = 2 and `(ξ, adj_2 ξ, det ξ)` for n = 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinorsVector {
    pub matrix: Matrix,
    pub adj2: Option<Matrix>,
    pub det: f64,
}

impl MinorsVector {
    /// Flattened coordinates: entries of ξ, then adj_2 ξ if present, then det.
    pub fn coords(&self) -> alloc::vec::Vec<f64> {
        let mut v = alloc::vec::Vec::with_capacity(19);
        v.extend_from_slice(self.matrix.entries());
        if let Some(a) = &self.adj2 {
            v.extend_from_slice(a.entries());
        }
        v.push(self.det);
        v
    }
}

pub fn minors(xi: &Matrix) -> MinorsVector {
    MinorsVector { matrix: *xi, adj2: if xi.n() == 3 { Some(xi.adj2()) } else { None }, det: xi.det() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_values() {
        let sv = singular_values(&Matrix::diag(&[1.0, 2.0]));
        assert_eq!(sv.values(), &[1.0, 2.0]);
        let sv = singular_values(&Matrix::diag(&[3.0, -1.0, 2.0]));
        assert_relative_eq!(sv.values()[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(sv.values()[2], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn upper_triangular_closed_form() {
        let sv = singular_values(&Matrix::new2([[1.0, 1.0], [0.0, 2.0]]));
        let (s10, s2) = (10f64.sqrt(), 2f64.sqrt());
        assert_relative_eq!(sv.values()[0], 0.5 * (s10 - s2), max_relative = 1e-14);
        assert_relative_eq!(sv.values()[1], 0.5 * (s10 + s2), max_relative = 1e-14);
        assert_relative_eq!(sv.product(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(sv.sum_sq(), 6.0, max_relative = 1e-14);
        assert!((sv.values()[0] - 0.874032).abs() < 1e-6);
        assert!((sv.values()[1] - 2.288246).abs() < 1e-6);
    }

    #[test]
    fn rotation_by_minus_quarter_turn() {
        let xi = Matrix::new2([[0.0, 1.0], [-1.0, 0.0]]);
        let (r, sv, s) = rsd_decompose(&xi);
        assert_relative_eq!(sv.values()[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(sv.values()[1], 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.det(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.det(), 1.0, epsilon = 1e-12);
        assert!((r * Matrix::diag(sv.values()) * s).approx_eq(&xi, 1e-12));
    }

    #[test]
    fn decompose_swaps_order() {
        let xi = Matrix::diag(&[2.0, 1.0]);
        let (r, sv, s) = rsd_decompose(&xi);
        assert_eq!(sv.values(), &[1.0, 2.0]);
        assert!((r * Matrix::diag(sv.values()) * s).approx_eq(&xi, 1e-14));
        assert!((r.transpose() * r).approx_eq(&Matrix::identity(2), 1e-14));
    }

    #[test]
    fn decompose_rank_deficient_3x3() {
        let xi = Dyad::new(&[1.0, 2.0, -1.0], &[0.5, 0.0, 3.0]).unwrap().to_matrix();
        let (r, sv, s) = rsd_decompose(&xi);
        assert!((r * Matrix::diag(sv.values()) * s).approx_eq(&xi, 1e-12));
        assert!((s * s.transpose()).approx_eq(&Matrix::identity(3), 1e-12));
        assert!((r.transpose() * r).approx_eq(&Matrix::identity(3), 1e-12));
        assert!(sv.values()[1] < 1e-12);
        assert!(is_rank_one(&xi, 1e-9));
    }

    #[test]
    fn defect_values() {
        assert_eq!(rank_one_defect(&Dyad::new(&[1.0, -2.0], &[3.0, 0.5]).unwrap().to_matrix()), 0.0);
        assert_relative_eq!(rank_one_defect(&Matrix::identity(2)), 1.0);
        let e = 1e-3;
        let m = Matrix::new2([[1.0, 1.0], [1.0, 1.0 + e]]);
        let d = rank_one_defect(&m);
        assert_relative_eq!(d, singular_values(&m).values()[0], max_relative = 1e-15);
        // det = e and λ_2 ≈ 2, so λ_1 ≈ e/2.
        assert!((d / (e / 2.0) - 1.0).abs() < 1e-3);
        assert!(!is_rank_one(&Matrix::zeros(2), 1e-9));
    }

    #[test]
    fn minors_examples() {
        let m = minors(&Matrix::diag(&[1.0, 2.0]));
        assert_eq!(m.coords(), [1.0, 0.0, 0.0, 2.0, 2.0]);
        let m = minors(&Matrix::new2([[1.0, 2.0], [3.0, 4.0]]));
        assert_eq!(m.coords(), [1.0, 2.0, 3.0, 4.0, -2.0]);
        let m = minors(&Matrix::identity(3));
        assert_eq!(m.adj2, Some(Matrix::identity(3)));
        assert_eq!(m.det, 1.0);
    }

    #[test]
    fn cofactor_identity() {
        let m = Matrix::new3([[2.0, -1.0, 0.5], [0.0, 3.0, 1.0], [1.0, 1.0, -2.0]]);
        let p = m.transpose() * m.cofactor();
        assert!(p.approx_eq(&Matrix::identity(3).scale(m.det()), 1e-13));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Matrix::from_slice(4, &[0.0; 16]), Err(MatError::BadDimension(4)));
        assert_eq!(Matrix::from_slice(2, &[0.0, f64::NAN, 0.0, 0.0]), Err(MatError::NonFinite));
        assert_eq!(Dyad::new(&[0.0, 0.0], &[1.0, 0.0]), Err(MatError::ZeroVector));
    }
}
