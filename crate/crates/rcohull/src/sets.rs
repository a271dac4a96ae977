//! Isotropic matrix sets `E = {ξ : λ(ξ) ∈ Λ, det-sign constraint}` and
//! finite matrix lists, with membership, distance and sampling.
//!
//! Distances to isotropic sets are measured between singular-value vectors;
//! distances to finite lists are Frobenius distances.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::matcore::{rsd_decompose, singular_values, Matrix};
use crate::rng;
use crate::tol::SEGMENT_GRID;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("dimension mismatch: set has n = {expected}, matrix has n = {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation not supported for {0}")]
    Unsupported(&'static str),
    #[error("the singular-value set is empty")]
    Empty,
    #[error("point {0} is not an ordered tuple of admissible singular values")]
    InvalidPoint(usize),
    #[error("dimension {0} is not supported (expected 2 or 3)")]
    BadDimension(usize),
}

/// Inequality on an ordered singular-value tuple.
pub type RegionCheck = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// The set `Λ` of admissible singular-value tuples.
#[derive(Clone)]
pub enum SingularValueSet {
    FinitePoints(Vec<Vec<f64>>),
    /// The closed segment `{(1 - t) a + t b : t ∈ [0, 1]}`.
    Segment { a: Vec<f64>, b: Vec<f64> },
    /// All tuples in the box `[lower, upper]` passing every check.
    Region { checks: Vec<RegionCheck>, lower: Vec<f64>, upper: Vec<f64> },
}

impl fmt::Debug for SingularValueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FinitePoints(p) => f.debug_tuple("FinitePoints").field(p).finish(),
            Self::Segment { a, b } => f.debug_struct("Segment").field("a", a).field("b", b).finish(),
            Self::Region { checks, lower, upper } => f
                .debug_struct("Region")
                .field("checks", &checks.len())
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
        }
    }
}

impl SingularValueSet {
    pub fn point(values: &[f64]) -> Self {
        Self::FinitePoints(alloc::vec![values.to_vec()])
    }

    pub fn segment(a: &[f64], b: &[f64]) -> Self {
        Self::Segment { a: a.to_vec(), b: b.to_vec() }
    }

    /// Tuple length, if the set is nonempty.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::FinitePoints(p) => p.first().map(Vec::len),
            Self::Segment { a, .. } => Some(a.len()),
            Self::Region { lower, .. } => Some(lower.len()),
        }
    }

    /// Point of a segment at parameter `t`.
    pub fn segment_point(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    }

    /// Finite sample of the set: the points themselves, or `m` evenly spaced
    /// segment points including both ends.
    pub fn discretize(&self, m: usize) -> Result<Vec<Vec<f64>>, SetError> {
        match self {
            Self::FinitePoints(p) => Ok(p.clone()),
            Self::Segment { a, b } => {
                let m = m.max(2);
                Ok((0..m).map(|i| Self::segment_point(a, b, i as f64 / (m - 1) as f64)).collect())
            }
            Self::Region { .. } => Err(SetError::Unsupported("Region sets")),
        }
    }

    /// Largest coordinate appearing in the set (its bounding box for regions).
    pub fn max_coord(&self) -> f64 {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, &x| a.max(x));
        match self {
            Self::FinitePoints(p) => p.iter().fold(0.0f64, |a, v| a.max(m(v))),
            Self::Segment { a, b } => m(a).max(m(b)),
            Self::Region { upper, .. } => m(upper),
        }
    }

    /// Euclidean distance from `x` to the closure of the set.
    pub fn distance(&self, x: &[f64]) -> Result<f64, SetError> {
        match self {
            Self::FinitePoints(p) => {
                if p.is_empty() {
                    return Err(SetError::Empty);
                }
                Ok(p.iter().map(|q| euclid(q, x)).fold(f64::INFINITY, f64::min))
            }
            Self::Segment { a, b } => Ok(segment_project(a, b, x).1),
            Self::Region { .. } => Err(SetError::Unsupported("Region sets")),
        }
    }

    /// A closest point of the set to `x` (finite and segment variants).
    pub fn nearest(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::FinitePoints(p) => p
                .iter()
                .map(|q| (euclid(q, x), q))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, q)| q.clone()),
            Self::Segment { a, b } => Some(Self::segment_point(a, b, segment_project(a, b, x).0)),
            Self::Region { .. } => None,
        }
    }
}

fn euclid(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Grid minimization of `t ↦ |a + t(b - a) - x|` followed by a golden
/// section search on the bracketing cell. Returns the minimizer and the
/// minimum.
fn segment_project(a: &[f64], b: &[f64], x: &[f64]) -> (f64, f64) {
    let f = |t: f64| euclid(&SingularValueSet::segment_point(a, b, t), x);
    let g = SEGMENT_GRID;
    let mut best = 0usize;
    let mut best_v = f64::INFINITY;
    for i in 0..=g {
        let v = f(i as f64 / g as f64);
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    let mut lo = best.saturating_sub(1) as f64 / g as f64;
    let mut hi = (best + 1).min(g) as f64 / g as f64;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    let gt = best as f64 / g as f64;
    [(gt, best_v), (c, fc), (d, fd)].into_iter().min_by(|p, q| p.1.total_cmp(&q.1)).expect("nonempty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetConstraint {
    #[default]
    None,
    NonNegative,
    Positive,
}

/// `E = {ξ ∈ R^{n×n} : λ(ξ) ∈ Λ, det ξ satisfies the constraint}`.
#[derive(Debug, Clone)]
pub struct MatrixSetSpec {
    pub n: usize,
    pub lambda: SingularValueSet,
    pub det: DetConstraint,
    /// Allows `x_1 = 0` in the tuples of `Λ`.
    pub allow_zero: bool,
}

impl MatrixSetSpec {
    /// Validates tuple lengths and the ordering `0 < x_1 <= ... <= x_n`.
    pub fn new(n: usize, lambda: SingularValueSet, det: DetConstraint) -> Result<Self, SetError> {
        Self::with_zero(n, lambda, det, false)
    }

    pub fn with_zero(n: usize, lambda: SingularValueSet, det: DetConstraint, allow_zero: bool) -> Result<Self, SetError> {
        if n != 2 && n != 3 {
            return Err(SetError::BadDimension(n));
        }
        let ok = |v: &[f64]| {
            v.len() == n
                && v.iter().all(|x| x.is_finite())
                && if allow_zero { v[0] >= 0.0 } else { v[0] > 0.0 }
                && v.windows(2).all(|w| w[0] <= w[1])
        };
        match &lambda {
            SingularValueSet::FinitePoints(p) => {
                if p.is_empty() {
                    return Err(SetError::Empty);
                }
                if let Some(i) = p.iter().position(|v| !ok(v)) {
                    return Err(SetError::InvalidPoint(i));
                }
            }
            SingularValueSet::Segment { a, b } => {
                if !ok(a) {
                    return Err(SetError::InvalidPoint(0));
                }
                if !ok(b) {
                    return Err(SetError::InvalidPoint(1));
                }
            }
            SingularValueSet::Region { lower, upper, .. } => {
                if lower.len() != n || upper.len() != n {
                    return Err(SetError::DimensionMismatch { expected: n, got: lower.len().max(upper.len()) });
                }
            }
        }
        Ok(Self { n, lambda, det, allow_zero })
    }

    /// Finite set `{λ(ξ) = p}` with the given determinant constraint.
    pub fn points(n: usize, points: &[&[f64]], det: DetConstraint) -> Result<Self, SetError> {
        Self::new(n, SingularValueSet::FinitePoints(points.iter().map(|p| p.to_vec()).collect()), det)
    }

    fn check_dim(&self, xi: &Matrix) -> Result<(), SetError> {
        if xi.n() != self.n {
            return Err(SetError::DimensionMismatch { expected: self.n, got: xi.n() });
        }
        Ok(())
    }

    /// Whether the determinant sign constraint holds, with `tol·scale` slack
    /// toward the interior for the strict case.
    pub fn det_ok(&self, det: f64, scale: f64, tol: f64) -> bool {
        let s = tol * 1.0f64.max(scale).powi(self.n as i32);
        match self.det {
            DetConstraint::None => true,
            DetConstraint::NonNegative => det >= -s,
            DetConstraint::Positive => det > s,
        }
    }

    /// Membership of `ξ` up to `tol` (relative to `max(1, λ_max)`).
    pub fn contains(&self, xi: &Matrix, tol: f64) -> Result<bool, SetError> {
        self.check_dim(xi)?;
        let sv = singular_values(xi);
        let scale = 1.0f64.max(sv.largest());
        if !self.det_ok(xi.det(), scale, tol) {
            return Ok(false);
        }
        match &self.lambda {
            SingularValueSet::Region { checks, lower, upper } => {
                let x = sv.values();
                let slack = tol * scale;
                let boxed = x.iter().zip(lower).zip(upper).all(|((v, l), u)| *v >= l - slack && *v <= u + slack);
                Ok(boxed && checks.iter().all(|c| c(x)))
            }
            l => Ok(l.distance(sv.values())? <= tol * scale),
        }
    }

    /// `dist(ξ; E)`: singular-value distance to the closure of `Λ`, plus
    /// `2|det ξ|^{1/n}` when the sign constraint is violated.
    pub fn distance(&self, xi: &Matrix) -> Result<f64, SetError> {
        self.check_dim(xi)?;
        let sv = singular_values(xi);
        let d = self.lambda.distance(sv.values())?;
        let det = xi.det();
        let violated = match self.det {
            DetConstraint::None => false,
            DetConstraint::NonNegative => det < 0.0,
            DetConstraint::Positive => det <= 0.0,
        };
        Ok(if violated { d + 2.0 * det.abs().powf(1.0 / self.n as f64) } else { d })
    }

    /// `k` members of `E` of the form `R diag(λ) S`, deterministic in `seed`.
    pub fn sample(&self, k: usize, seed: u64) -> Result<Vec<Matrix>, SetError> {
        let mut r = rng::seeded(seed);
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let lam = self.sample_lambda(&mut r)?;
            let mut d = Matrix::diag(&lam);
            if self.det == DetConstraint::None && r.random_bool(0.5) {
                d.set(0, 0, -d.get(0, 0));
            }
            let rr = rng::rotation(&mut r, self.n);
            let ss = rng::rotation(&mut r, self.n);
            out.push(rr * d * ss);
        }
        Ok(out)
    }

    fn sample_lambda(&self, r: &mut rng::SeededRng) -> Result<Vec<f64>, SetError> {
        match &self.lambda {
            SingularValueSet::FinitePoints(p) => {
                if p.is_empty() {
                    return Err(SetError::Empty);
                }
                Ok(p[r.random_range(0..p.len())].clone())
            }
            SingularValueSet::Segment { a, b } => Ok(SingularValueSet::segment_point(a, b, r.random_range(0.0..=1.0))),
            SingularValueSet::Region { checks, lower, upper } => {
                for _ in 0..100_000 {
                    let mut x: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| if l < u { r.random_range(*l..=*u) } else { *l }).collect();
                    x.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                    if checks.iter().all(|c| c(&x)) {
                        return Ok(x);
                    }
                }
                Err(SetError::Empty)
            }
        }
    }
}

/// Anything with a distance function `dist(·; E)`.
pub trait Distance {
    fn distance_to(&self, xi: &Matrix) -> Result<f64, SetError>;

    /// A nearest member, when one is cheap to produce.
    fn nearest(&self, _xi: &Matrix) -> Option<Matrix> {
        None
    }
}

impl Distance for MatrixSetSpec {
    fn distance_to(&self, xi: &Matrix) -> Result<f64, SetError> {
        self.distance(xi)
    }

    /// `R diag(α) S` where `ξ = R diag(λ) S` and `α` is the nearest tuple.
    fn nearest(&self, xi: &Matrix) -> Option<Matrix> {
        let (r, sv, s) = rsd_decompose(xi);
        let alpha = self.lambda.nearest(sv.values())?;
        let mut d = Matrix::diag(&alpha);
        if self.det != DetConstraint::None && r.det() * s.det() < 0.0 {
            d.set(0, 0, -d.get(0, 0));
        }
        Some(r * d * s)
    }
}

impl Distance for TargetSet {
    fn distance_to(&self, xi: &Matrix) -> Result<f64, SetError> {
        self.distance(xi)
    }

    fn nearest(&self, xi: &Matrix) -> Option<Matrix> {
        match self {
            Self::Isotropic(s) => s.nearest(xi),
            Self::Finite(m) => m.iter().map(|a| ((*a - *xi).norm(), a)).min_by(|a, b| a.0.total_cmp(&b.0)).map(|(_, a)| *a),
        }
    }
}

/// Target set of a differential inclusion: an isotropic set or a finite
/// list of matrices (Frobenius distance).
#[derive(Debug, Clone)]
pub enum TargetSet {
    Isotropic(MatrixSetSpec),
    Finite(Vec<Matrix>),
}

impl TargetSet {
    pub fn n(&self) -> usize {
        match self {
            Self::Isotropic(s) => s.n,
            Self::Finite(m) => m.first().map_or(0, Matrix::n),
        }
    }

    pub fn distance(&self, xi: &Matrix) -> Result<f64, SetError> {
        match self {
            Self::Isotropic(s) => s.distance(xi),
            Self::Finite(m) => {
                if m.is_empty() {
                    return Err(SetError::Empty);
                }
                if let Some(a) = m.iter().find(|a| a.n() != xi.n()) {
                    return Err(SetError::DimensionMismatch { expected: a.n(), got: xi.n() });
                }
                Ok(m.iter().map(|a| (*a - *xi).norm()).fold(f64::INFINITY, f64::min))
            }
        }
    }

    pub fn contains(&self, xi: &Matrix, tol: f64) -> Result<bool, SetError> {
        match self {
            Self::Isotropic(s) => s.contains(xi, tol),
            Self::Finite(_) => Ok(self.distance(xi)? <= tol * 1.0f64.max(xi.norm())),
        }
    }
}

impl From<MatrixSetSpec> for TargetSet {
    fn from(s: MatrixSetSpec) -> Self {
        Self::Isotropic(s)
    }
}
