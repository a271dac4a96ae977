//! Numerical tolerances shared across modules.

/// Default relative tolerance for every comparison that takes one.
pub const REL_TOL: f64 = 1e-9;

/// Sweep cap of the one-sided Jacobi iteration used for 3x3 matrices.
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// A row pair counts as orthogonal once `|<r_p, r_q>| <= JACOBI_THRESHOLD * |r_p| |r_q|`.
pub const JACOBI_THRESHOLD: f64 = 1e-12;

/// Weights of a laminate chain must sum to one within this bound.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest chain the `H_I` search accepts.
pub const HI_MAX_ATOMS: usize = 64;

/// Search-node budget of the `H_I` search.
pub const HI_NODE_BUDGET: usize = 1_000_000;

/// Grid size of the coarse pass when minimizing over a segment of singular values.
pub const SEGMENT_GRID: usize = 1024;

/// Relative `|a - b| <= tol * max(|a|, |b|)`, exact zeros compare equal.
pub fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= tol * scale
}

/// Absolute-or-relative comparison with unit floor: `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn near(a: f64, b: f64, tol: f64) -> bool {
    let scale = 1.0f64.max(a.abs()).max(b.abs());
    (a - b).abs() <= tol * scale
}
