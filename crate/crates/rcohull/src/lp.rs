//! Small dense linear programs (two-phase tableau simplex with Bland's rule)
//! and least squares by Householder QR. Problem sizes here are a few dozen
//! variables at most.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pr = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, w) in row.iter_mut().zip(&pr) {
                        *v -= f * w;
                    }
                }
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, w) in obj.iter_mut().zip(&pr) {
                *v -= f * w;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes the reduced-cost row `obj` (last entry is minus the
    /// objective value) over columns `< allowed`. Returns false if unbounded.
    fn minimize(&mut self, obj: &mut [f64], allowed: usize) -> bool {
        let rhs = self.cols;
        for _ in 0..10_000 {
            let Some(c) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[rhs] / row[c];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c, obj),
            }
        }
        true
    }
}

/// Maximizes `c·x` subject to `A x = b`, `x >= 0`.
pub fn maximize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpSolution {
    let m = a.len();
    let n = c.len();
    let cols = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, ai) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; cols + 1];
        for j in 0..n {
            row[j] = sign * ai[j];
        }
        row[n + i] = 1.0;
        row[cols] = sign * b[i];
        rows.push(row);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), cols };

    // Phase one: minimize the sum of artificials.
    let mut obj = vec![0.0; cols + 1];
    for row in &t.rows {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[cols] -= row[cols];
    }
    t.minimize(&mut obj, n);
    let scale = 1.0f64.max(b.iter().fold(0.0f64, |s, x| s.max(x.abs())));
    if -obj[cols] > 1e-9 * scale {
        return LpSolution { status: LpStatus::Infeasible, x: vec![0.0; n], objective: f64::NAN };
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if t.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| t.rows[r][j].abs() > EPS) {
                let mut dummy = vec![0.0; cols + 1];
                t.pivot(r, c, &mut dummy);
            }
        }
    }

    // Phase two.
    let mut obj = vec![0.0; cols + 1];
    for j in 0..n {
        obj[j] = -c[j];
    }
    for (r, &bj) in t.basis.iter().enumerate() {
        let f = obj[bj];
        if f != 0.0 {
            for (v, w) in obj.iter_mut().zip(&t.rows[r]) {
                *v -= f * w;
            }
        }
    }
    if !t.minimize(&mut obj, n) {
        return LpSolution { status: LpStatus::Unbounded, x: vec![0.0; n], objective: f64::INFINITY };
    }
    let mut x = vec![0.0; n];
    for (r, &bj) in t.basis.iter().enumerate() {
        if bj < n {
            x[bj] = t.rows[r][cols];
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpSolution { status: LpStatus::Optimal, x, objective }
}

/// Some `x >= 0` with `A x = b`, if one exists.
pub fn feasible(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.first().map_or(0, Vec::len);
    let s = maximize(a, b, &vec![0.0; n]);
    (s.status == LpStatus::Optimal).then_some(s.x)
}

/// Least-squares solution of `A x ≈ b` (A is m×k with m >= k) and the
/// residual norm. Returns `None` when A is numerically rank deficient.
pub fn least_squares(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let m = a.len();
    let k = a.first().map_or(0, Vec::len);
    if m < k {
        return None;
    }
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut y = b.to_vec();
    let scale = r.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    for j in 0..k {
        let norm = (j..m).map(|i| r[i][j] * r[i][j]).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale {
            return None;
        }
        let alpha = if r[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| r[i][j]).collect();
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>();
        if vn == 0.0 {
            continue;
        }
        for col in j..k {
            let d: f64 = (j..m).map(|i| v[i - j] * r[i][col]).sum();
            for i in j..m {
                r[i][col] -= 2.0 * d / vn * v[i - j];
            }
        }
        let d: f64 = (j..m).map(|i| v[i - j] * y[i]).sum();
        for i in j..m {
            y[i] -= 2.0 * d / vn * v[i - j];
        }
    }
    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let s: f64 = (j + 1..k).map(|c| r[j][c] * x[c]).sum();
        x[j] = (y[j] - s) / r[j][j];
    }
    let res = y[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
    Some((x, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_max() {
        // max x + y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6.
        let a = vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]];
        let s = maximize(&a, &[4.0, 6.0], &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0]];
        assert_eq!(maximize(&a, &[-1.0], &[0.0, 0.0]).status, LpStatus::Infeasible);
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(maximize(&a, &[1.0], &[1.0, 0.0]).status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let x = feasible(&a, &[1.0, 2.0]).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_exact_and_residual() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let (x, res) = least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12 && res < 1e-12);
        let (_, res) = least_squares(&a, &[1.0, 1.0, 0.0]).unwrap();
        assert!((res - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(least_squares(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 2.0]).is_none());
    }
}
