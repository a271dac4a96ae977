//! Hull predicates for isotropic sets: the `f_θ` envelope test, the
//! two-point formulas, fiber hulls and the segment families, plus a
//! lattice closure oracle and polyconvex membership for finite sets.
//!
//! Every predicate depends only on the singular values of `ξ` and the sign
//! of `det ξ`. Each comes in a closure and a strict (interior) version.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use thiserror::Error;

use crate::laminate::OpenSet;
use crate::lp;
use crate::matcore::{minors, singular_values, Matrix};
use crate::rng;
use crate::sets::{DetConstraint, MatrixSetSpec, SetError, SingularValueSet};
use crate::tol::{REL_TOL, SEGMENT_GRID};

/// Sample count for `f_θ` over a segment `Λ`.
pub const FTHETA_SEGMENT_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HullError {
    #[error("the singular-value set is empty")]
    Empty,
    #[error("parameters violate {0}")]
    Hypothesis(&'static str),
    #[error("delta {delta} is out of range (must lie in (0, {max}))")]
    DeltaOutOfRange { delta: f64, max: f64 },
    #[error("matrix dimension {got} does not match predicate dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("entry {0} is not on the lattice")]
    OffLattice(f64),
    #[error(transparent)]
    Set(#[from] SetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Ftheta,
    Twopoint,
    Fiber,
    Segment2,
    Segment3,
    Oracle,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Ftheta => "ftheta",
            Self::Twopoint => "twopoint",
            Self::Fiber => "fiber",
            Self::Segment2 => "segment2",
            Self::Segment3 => "segment3",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HullParams {
    /// `Λ` points, `θ` candidates (envelope breakpoints and both ends) and
    /// the envelope value at each.
    Ftheta { lambda: Vec<[f64; 2]>, theta_max: f64, thetas: Vec<f64>, rhs: Vec<f64> },
    /// `Λ = {a, b}` with `0 < a_1 < b_1 < a_2 < b_2`.
    Twopoint { a: [f64; 2], b: [f64; 2], theta: f64 },
    Fiber { alpha: [f64; 2] },
    /// With `delta`, the approximating set `K_δ` instead of `K`.
    Segment2 { a: [f64; 2], b: [f64; 2], delta: Option<f64> },
    Segment3 { a: [f64; 3], b: [f64; 3], delta: Option<f64> },
    /// Singular-value profiles `(λ_1, λ_2, sign det)` of a lattice set.
    Oracle { profiles: Vec<[f64; 3]>, h: f64 },
}

/// Outcome of a predicate evaluation. `margin` is the smallest slack of
/// the open constraints (negative when a constraint fails), and `binding`
/// names the constraint attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    pub margin: f64,
    pub binding: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullPredicate {
    pub source: Source,
    pub strict: bool,
    pub params: HullParams,
    pub tol: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    /// Strict in the interior version.
    Open,
    /// Non-strict in both versions.
    Closed,
    Equal,
}

struct Acc {
    strict: bool,
    slack: f64,
    accepted: bool,
    margin: f64,
    binding: &'static str,
}

impl Acc {
    fn new(strict: bool, slack: f64) -> Self {
        Self { strict, slack, accepted: true, margin: f64::INFINITY, binding: "none" }
    }

    fn push(&mut self, label: &'static str, value: f64, kind: Kind) {
        let (ok, m) = match kind {
            Kind::Open if self.strict => (value > self.slack, Some(value)),
            Kind::Open => (value >= -self.slack, Some(value)),
            Kind::Closed => (value >= -self.slack, (value < 0.0).then_some(value)),
            Kind::Equal => (value.abs() <= self.slack, (value.abs() > self.slack).then_some(-value.abs())),
        };
        if !ok && self.accepted {
            self.accepted = false;
            self.binding = label;
            self.margin = m.unwrap_or(value).min(self.margin);
            return;
        }
        if let Some(m) = m {
            if m < self.margin && self.accepted {
                self.margin = m;
                self.binding = label;
            } else if m < self.margin {
                self.margin = m;
            }
        }
    }

    fn done(self) -> Verdict {
        Verdict { accepted: self.accepted, margin: self.margin, binding: self.binding }
    }
}

fn sorted2(sv: &[f64]) -> (f64, f64) {
    (sv[0], sv[1])
}

/// Sign of `det` times `λ_1`: positive iff `det > 0`.
fn det_slack(det: f64, x1: f64) -> f64 {
    if det > 0.0 {
        x1
    } else if det < 0.0 {
        -x1
    } else {
        0.0
    }
}

impl HullPredicate {
    pub fn n(&self) -> usize {
        match self.params {
            HullParams::Segment3 { .. } => 3,
            _ => 2,
        }
    }

    /// The same hull with the other strictness.
    pub fn with_strict(&self, strict: bool) -> Self {
        Self { strict, ..self.clone() }
    }

    pub fn closure(&self) -> Self {
        self.with_strict(false)
    }

    pub fn interior(&self) -> Self {
        self.with_strict(true)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// `θ̲` of a two-point predicate.
    pub fn theta_underline(&self) -> Option<f64> {
        match self.params {
            HullParams::Twopoint { theta, .. } => Some(theta),
            _ => None,
        }
    }

    fn scale(&self) -> f64 {
        let m = match &self.params {
            HullParams::Ftheta { theta_max, .. } => *theta_max,
            HullParams::Twopoint { b, .. } => b[1],
            HullParams::Fiber { alpha } => alpha[1],
            HullParams::Segment2 { b, .. } => b[1],
            HullParams::Segment3 { b, .. } => b[2],
            HullParams::Oracle { profiles, .. } => profiles.iter().fold(0.0, |m, p| m.max(p[1])),
        };
        1.0f64.max(m)
    }

    /// Bound on `|ξ|` over accepted matrices.
    pub fn radius(&self) -> f64 {
        (self.n() as f64).sqrt() * self.scale() * (1.0 + 1e-9)
    }

    pub fn evaluate(&self, xi: &Matrix) -> Result<Verdict, HullError> {
        if xi.n() != self.n() {
            return Err(HullError::Dimension { expected: self.n(), got: xi.n() });
        }
        let sv = singular_values(xi);
        Ok(self.evaluate_values(sv.values(), xi.det()))
    }

    pub fn accepts(&self, xi: &Matrix) -> Result<bool, HullError> {
        Ok(self.evaluate(xi)?.accepted)
    }

    /// Evaluation from the ascending singular values and the determinant.
    pub fn evaluate_values(&self, x: &[f64], det: f64) -> Verdict {
        let s = self.scale();
        let mut acc = Acc::new(self.strict, self.tol * s);
        match &self.params {
            HullParams::Ftheta { thetas, rhs, .. } => {
                let (x1, x2) = sorted2(x);
                for (t, r) in thetas.iter().zip(rhs) {
                    acc.push("f_theta envelope", (r - (x1 * x2 + t * (x2 - x1))) / s, Kind::Open);
                }
            }
            HullParams::Twopoint { a, b, theta } => {
                let (x1, x2) = sorted2(x);
                acc.push("det > 0", det_slack(det, x1), Kind::Open);
                acc.push("x1 >= a1", x1 - a[0], Kind::Open);
                acc.push("x2 <= b2", b[1] - x2, Kind::Open);
                acc.push("x2 >= a1 a2 / x1", x2 - a[0] * a[1] / x1, Kind::Open);
                if x1 <= b[0] {
                    let g = (-a[0] * a[1] + theta * (a[0] + a[1]) - theta * x1) / (theta - x1);
                    acc.push("theta line", g - x2, Kind::Open);
                }
                acc.push("x2 <= b1 b2 / x1", b[0] * b[1] / x1 - x2, Kind::Open);
            }
            HullParams::Fiber { alpha } => {
                let (x1, x2) = sorted2(x);
                let p = alpha[0] * alpha[1];
                acc.push("det = a1 a2", (det - p) / s, Kind::Equal);
                acc.push("x2 <= a2", alpha[1] - x2, Kind::Open);
                let _ = x1;
            }
            HullParams::Segment2 { a, b, delta } => {
                let (x1, x2) = sorted2(x);
                let (lo, hi) = (a[0] * a[1], b[0] * b[1]);
                let d = delta.unwrap_or(0.0);
                let p = x1 * x2;
                acc.push("det > 0", det_slack(det, x1), Kind::Open);
                acc.push("product > lower", (p - lo - d) / s, Kind::Open);
                acc.push("product < upper", (hi - d - p) / s, Kind::Open);
                if p >= lo && p <= hi {
                    let al = gamma2(a, b, psi2_inverse(a, b, p));
                    match delta {
                        None => acc.push("x2 < alpha2", al[1] - x2, Kind::Open),
                        Some(d) => {
                            let beta = perturbed_point_2d(al, *d);
                            acc.push("x2 <= beta2", beta[1] - x2, Kind::Closed);
                        }
                    }
                }
            }
            HullParams::Segment3 { a, b, delta } => {
                let p = x[0] * x[1] * x[2];
                let (lo, hi) = (a[0] * a[1] * a[2], b[0] * b[1] * b[2]);
                let d = delta.unwrap_or(0.0);
                acc.push("det > 0", det_slack(det, x[0]), Kind::Open);
                acc.push("product > lower", (p - lo - d) / (s * s), Kind::Open);
                acc.push("product < upper", (hi - d - p) / (s * s), Kind::Open);
                if p >= lo && p <= hi {
                    let al = gamma3(a, b, psi3_inverse(a, b, p));
                    match delta {
                        None => {
                            acc.push("x3 < alpha3", al[2] - x[2], Kind::Open);
                            acc.push("x2 x3 < alpha2 alpha3", (al[1] * al[2] - x[1] * x[2]) / s, Kind::Open);
                        }
                        Some(d) => {
                            let beta = perturbed_point_3d(al, *d);
                            acc.push("ordered beta", (beta[1] - beta[0]).min(beta[2] - beta[1]), Kind::Closed);
                            acc.push("x3 <= beta3", beta[2] - x[2], Kind::Closed);
                            acc.push("x2 x3 <= beta2 beta3", (beta[1] * beta[2] - x[1] * x[2]) / s, Kind::Closed);
                        }
                    }
                }
            }
            HullParams::Oracle { profiles, h } => {
                let (x1, x2) = sorted2(x);
                let sg = if det > 0.0 { 1.0 } else if det < 0.0 { -1.0 } else { 0.0 };
                let d = profiles
                    .iter()
                    .filter(|p| p[2] == sg || p[2] == 0.0 || sg == 0.0)
                    .map(|p| ((p[0] - x1).powi(2) + (p[1] - x2).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                let _ = h;
                acc.push("lattice profile", -d, Kind::Equal);
            }
        }
        acc.done()
    }

    /// The accepted set as an open set for walks (strict predicates only).
    pub fn open_set(&self) -> Option<OpenSet> {
        if !self.strict || matches!(self.params, HullParams::Fiber { .. } | HullParams::Oracle { .. }) {
            return None;
        }
        let p = self.clone();
        let slack = self.tol * self.scale();
        Some(OpenSet::new(self.radius(), move |m| match p.evaluate(m) {
            Ok(v) if v.accepted => (v.margin - slack).max(f64::MIN_POSITIVE),
            Ok(v) => v.margin.min(-f64::MIN_POSITIVE) - slack,
            Err(_) => -1.0,
        }))
    }
}

/// Upper envelope of the lines `θ ↦ c_i + θ m_i` on `[0, t_max]`: the
/// breakpoints inside the interval.
fn envelope_breakpoints(lines: &[(f64, f64)], t_max: f64) -> Vec<f64> {
    let mut ls: Vec<(f64, f64)> = lines.to_vec();
    ls.sort_by(|p, q| p.1.total_cmp(&q.1).then(p.0.total_cmp(&q.0)));
    ls.dedup_by(|q, p| p.1 == q.1 && {
        p.0 = p.0.max(q.0);
        true
    });
    let cross = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0) / (q.1 - p.1);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for l in ls {
        while hull.len() >= 2 {
            let k = hull.len();
            if cross(hull[k - 2], l) <= cross(hull[k - 2], hull[k - 1]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }
    hull.windows(2).map(|w| cross(w[0], w[1])).filter(|t| *t > 0.0 && *t < t_max).collect()
}

/// `K = {f_θ(λ_1, λ_2) < max_Λ f_θ(a, b) ∀θ ∈ [0, max b]}` with
/// `f_θ(x, y) = xy + θ(y - x)`. Segments are sampled at 512 points.
pub fn ftheta_predicate(lambda: &SingularValueSet, strict: bool) -> Result<HullPredicate, HullError> {
    let pts = lambda.discretize(FTHETA_SEGMENT_SAMPLES)?;
    if pts.is_empty() {
        return Err(HullError::Empty);
    }
    let mut lam = Vec::with_capacity(pts.len());
    for p in &pts {
        if p.len() != 2 || !(p[0] > 0.0 && p[0] <= p[1]) {
            return Err(HullError::Hypothesis("0 < a <= b for every point of Λ"));
        }
        lam.push([p[0], p[1]]);
    }
    let theta_max = lam.iter().fold(0.0, |m, p| m.max(p[1]));
    let lines: Vec<(f64, f64)> = lam.iter().map(|p| (p[0] * p[1], p[1] - p[0])).collect();
    let mut thetas = vec![0.0];
    thetas.extend(envelope_breakpoints(&lines, theta_max));
    thetas.push(theta_max);
    let rhs = thetas.iter().map(|t| lines.iter().map(|l| l.0 + t * l.1).fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(HullPredicate { source: Source::Ftheta, strict, params: HullParams::Ftheta { lambda: lam, theta_max, thetas, rhs }, tol: REL_TOL })
}

/// `θ̲ = (-a_1 a_2 + b_1 b_2) / (b_1 + b_2 - a_1 - a_2)`.
pub fn theta_underline(a1: f64, a2: f64, b1: f64, b2: f64) -> f64 {
    (-a1 * a2 + b1 * b2) / (b1 + b2 - a1 - a2)
}

/// `Rco_f E` (closure) or its interior for `Λ = {(a_1, a_2), (b_1, b_2)}`,
/// `det > 0`.
pub fn twopoint_predicate(a1: f64, a2: f64, b1: f64, b2: f64, strict: bool) -> Result<HullPredicate, HullError> {
    if !(0.0 < a1 && a1 < b1 && b1 < a2 && a2 < b2) {
        return Err(HullError::Hypothesis("0 < a1 < b1 < a2 < b2"));
    }
    let den = b1 + b2 - a1 - a2;
    if den <= 1e-9 {
        return Err(HullError::Hypothesis("b1 + b2 - a1 - a2 > 0"));
    }
    let theta = theta_underline(a1, a2, b1, b2);
    if !(b1 < theta && theta < a2) {
        return Err(HullError::Hypothesis("b1 < theta < a2"));
    }
    Ok(HullPredicate { source: Source::Twopoint, strict, params: HullParams::Twopoint { a: [a1, a2], b: [b1, b2], theta }, tol: REL_TOL })
}

/// `{det ξ = α_1 α_2, λ_2(ξ) <= α_2}` (strict: `λ_2 < α_2`).
pub fn fiber_rco_predicate(alpha1: f64, alpha2: f64, strict: bool) -> Result<HullPredicate, HullError> {
    if !(0.0 < alpha1 && alpha1 <= alpha2) {
        return Err(HullError::Hypothesis("0 < alpha1 <= alpha2"));
    }
    Ok(HullPredicate { source: Source::Fiber, strict, params: HullParams::Fiber { alpha: [alpha1, alpha2] }, tol: REL_TOL })
}

fn check_segment(a: &[f64], b: &[f64]) -> Result<(), HullError> {
    let n = a.len();
    if a.iter().any(|x| !(*x > 0.0)) || a.iter().zip(b).any(|(x, y)| !(x < y)) {
        return Err(HullError::Hypothesis("0 < a_i < b_i"));
    }
    if a.windows(2).any(|w| w[0] > w[1]) || b.windows(2).any(|w| w[0] > w[1]) {
        return Err(HullError::Hypothesis("ordered endpoints"));
    }
    let strictly = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    if n >= 2 && !strictly(a) && !strictly(b) {
        return Err(HullError::Hypothesis("strictly ordered a or b"));
    }
    Ok(())
}

/// Interior `K` of the segment construction in 2D: `det ξ > 0`,
/// `λ_1 λ_2 = α_1 α_2` for the unique `α` in the open segment, `λ_2 < α_2`.
pub fn segment_k_predicate_2d(a: [f64; 2], b: [f64; 2]) -> Result<HullPredicate, HullError> {
    check_segment(&a, &b)?;
    Ok(HullPredicate { source: Source::Segment2, strict: true, params: HullParams::Segment2 { a, b, delta: None }, tol: REL_TOL })
}

/// The 3D analogue: `λ_1 λ_2 λ_3 = α_1 α_2 α_3`, `λ_3 < α_3`,
/// `λ_2 λ_3 < α_2 α_3`.
pub fn segment_k_predicate_3d(a: [f64; 3], b: [f64; 3]) -> Result<HullPredicate, HullError> {
    check_segment(&a, &b)?;
    Ok(HullPredicate { source: Source::Segment3, strict: true, params: HullParams::Segment3 { a, b, delta: None }, tol: REL_TOL })
}

pub fn gamma2(a: &[f64; 2], b: &[f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

pub fn gamma3(a: &[f64; 3], b: &[f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// The `t ∈ [0, 1]` with `ψ(t) = (a_1 + t d_1)(a_2 + t d_2) = p`; `ψ` is
/// strictly increasing so the admissible quadratic root is unique.
pub fn psi2_inverse(a: &[f64; 2], b: &[f64; 2], p: f64) -> f64 {
    let (d1, d2) = (b[0] - a[0], b[1] - a[1]);
    let qa = d1 * d2;
    let qb = a[0] * d2 + a[1] * d1;
    let qc = a[0] * a[1] - p;
    let t = if qa.abs() < 1e-14 * qb.abs().max(1.0) {
        -qc / qb
    } else {
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
        let q = -0.5 * (qb + qb.signum() * disc);
        let r1 = q / qa;
        let r2 = if q != 0.0 { qc / q } else { r1 };
        let dist = |t: f64| if t < 0.0 { -t } else if t > 1.0 { t - 1.0 } else { 0.0 };
        if dist(r1) <= dist(r2) {
            r1
        } else {
            r2
        }
    };
    t.clamp(0.0, 1.0)
}

/// Inverse of the increasing cubic `t ↦ Π (a_i + t d_i)` on `[0, 1]`.
pub fn psi3_inverse(a: &[f64; 3], b: &[f64; 3], p: f64) -> f64 {
    let f = |t: f64| gamma3(a, b, t).iter().product::<f64>() - p;
    let (mut lo, mut hi) = (0.0, 1.0);
    if f(lo) >= 0.0 {
        return 0.0;
    }
    if f(hi) <= 0.0 {
        return 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `c(δ, α) = min{δ, √(α_1 α_2) - α_1}`.
pub fn perturbation_2d(delta: f64, alpha: [f64; 2]) -> f64 {
    delta.min((alpha[0] * alpha[1]).sqrt() - alpha[0])
}

/// `(α_1 + c, α_1 α_2 / (α_1 + c))`.
pub fn perturbed_point_2d(alpha: [f64; 2], delta: f64) -> [f64; 2] {
    let c = perturbation_2d(delta, alpha);
    [alpha[0] + c, alpha[0] * alpha[1] / (alpha[0] + c)]
}

/// `c(δ, α) = min{δ, √(α_1 α_2 α_3 / (α_1 + δ)) - α_1 α_2 / (α_1 + δ)}`.
pub fn perturbation_3d(delta: f64, alpha: [f64; 3]) -> f64 {
    let p = alpha[0] * alpha[1] * alpha[2];
    delta.min((p / (alpha[0] + delta)).sqrt() - alpha[0] * alpha[1] / (alpha[0] + delta))
}

/// `(α_1 + δ, α_1 α_2/(α_1 + δ) + c, α_1 α_2 α_3 / (α_1 α_2 + c(α_1 + δ)))`.
pub fn perturbed_point_3d(alpha: [f64; 3], delta: f64) -> [f64; 3] {
    let c = perturbation_3d(delta, alpha);
    let p = alpha[0] * alpha[1] * alpha[2];
    [alpha[0] + delta, alpha[0] * alpha[1] / (alpha[0] + delta) + c, p / (alpha[0] * alpha[1] + c * (alpha[0] + delta))]
}

/// An approximating pair `(E_δ, K_δ)`.
#[derive(Debug, Clone)]
pub struct DeltaFamily {
    pub delta: f64,
    pub e: MatrixSetSpec,
    pub k: HullPredicate,
}

/// `Λ_{E_δ} = {(a_1 + δ, a_2), (b_1, b_2 - δ)}` and `K_δ = Rco_f E_δ`;
/// needs `a_1 + δ < b_1` and `a_2 < b_2 - δ`.
pub fn twopoint_delta_family(a1: f64, a2: f64, b1: f64, b2: f64, delta: f64) -> Result<DeltaFamily, HullError> {
    twopoint_predicate(a1, a2, b1, b2, false)?;
    let max = (b1 - a1).min(b2 - a2);
    if !(delta > 0.0 && delta < max) {
        return Err(HullError::DeltaOutOfRange { delta, max });
    }
    if b1 + b2 - a1 - a2 - 2.0 * delta <= 1e-9 {
        return Err(HullError::DeltaOutOfRange { delta, max });
    }
    let k = twopoint_predicate(a1 + delta, a2, b1, b2 - delta, false)?;
    let e = MatrixSetSpec::points(2, &[&[a1 + delta, a2], &[b1, b2 - delta]], DetConstraint::Positive)?;
    Ok(DeltaFamily { delta, e, k })
}

/// `θ̲_δ = (-(a_1 + δ) a_2 + b_1 (b_2 - δ)) / (b_1 + b_2 - a_1 - a_2 - 2δ)`.
pub fn theta_underline_delta(a1: f64, a2: f64, b1: f64, b2: f64, delta: f64) -> f64 {
    theta_underline(a1 + delta, a2, b1, b2 - delta)
}

/// `E_δ` from the perturbed curve (sampled at `SEGMENT_GRID` products in
/// `[a_1 a_2 + δ, b_1 b_2 - δ]`) and the matching `K_δ`.
pub fn segment_delta_family_2d(a: [f64; 2], b: [f64; 2], delta: f64) -> Result<DeltaFamily, HullError> {
    check_segment(&a, &b)?;
    let (lo, hi) = (a[0] * a[1] + delta, b[0] * b[1] - delta);
    if !(delta > 0.0 && lo < hi) {
        return Err(HullError::DeltaOutOfRange { delta, max: 0.5 * (b[0] * b[1] - a[0] * a[1]) });
    }
    let pts: Vec<Vec<f64>> = (0..SEGMENT_GRID)
        .map(|i| {
            let p = lo + (hi - lo) * i as f64 / (SEGMENT_GRID - 1) as f64;
            perturbed_point_2d(gamma2(&a, &b, psi2_inverse(&a, &b, p)), delta).to_vec()
        })
        .collect();
    let e = MatrixSetSpec::new(2, SingularValueSet::FinitePoints(pts), DetConstraint::Positive)?;
    let k = HullPredicate { source: Source::Segment2, strict: false, params: HullParams::Segment2 { a, b, delta: Some(delta) }, tol: REL_TOL };
    Ok(DeltaFamily { delta, e, k })
}

/// 3D analogue of [`segment_delta_family_2d`]; curve points that break the
/// ordering `x_1 <= x_2 <= x_3` are dropped.
pub fn segment_delta_family_3d(a: [f64; 3], b: [f64; 3], delta: f64) -> Result<DeltaFamily, HullError> {
    check_segment(&a, &b)?;
    let (lo, hi) = (a.iter().product::<f64>() + delta, b.iter().product::<f64>() - delta);
    let empty = HullError::DeltaOutOfRange { delta, max: 0.5 * (b.iter().product::<f64>() - a.iter().product::<f64>()) };
    if !(delta > 0.0 && lo < hi) {
        return Err(empty);
    }
    let pts: Vec<Vec<f64>> = (0..SEGMENT_GRID)
        .map(|i| {
            let p = lo + (hi - lo) * i as f64 / (SEGMENT_GRID - 1) as f64;
            perturbed_point_3d(gamma3(&a, &b, psi3_inverse(&a, &b, p)), delta)
        })
        .filter(|q| 0.0 < q[0] && q[0] <= q[1] && q[1] <= q[2])
        .map(|q| q.to_vec())
        .collect();
    if pts.is_empty() {
        return Err(empty);
    }
    let e = MatrixSetSpec::new(3, SingularValueSet::FinitePoints(pts), DetConstraint::Positive)?;
    let k = HullPredicate { source: Source::Segment3, strict: false, params: HullParams::Segment3 { a, b, delta: Some(delta) }, tol: REL_TOL };
    Ok(DeltaFamily { delta, e, k })
}

/// Empirical check of the approximation conditions on a δ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub deltas: Vec<f64>,
    /// Largest `dist(η; E)` over sampled `η ∈ E_δ`, per δ.
    pub worst_distance: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Per ε, the largest grid δ below which every grid δ meets condition (i).
    pub delta0: Vec<Option<f64>>,
    /// Per interior sample, the largest grid δ below which `η ∈ K_δ` for
    /// every grid δ.
    pub entry_delta: Vec<Option<f64>>,
    /// Samples not in `K_δ` even for the smallest grid δ.
    pub uncovered: usize,
}

/// Samples `members` points of each `E_δ` for condition (i) and tests each
/// interior sample against each `K_δ` for condition (ii).
pub fn validate_approximation(
    e: &MatrixSetSpec,
    family: &dyn Fn(f64) -> Result<DeltaFamily, HullError>,
    deltas: &[f64],
    epsilons: &[f64],
    interior: &[Matrix],
    members: usize,
    seed: u64,
) -> Result<ApproxReport, HullError> {
    let mut ds = deltas.to_vec();
    ds.sort_by(|x, y| y.total_cmp(x));
    let fams: Vec<DeltaFamily> = ds.iter().map(|d| family(*d)).collect::<Result<_, _>>()?;
    let mut worst = Vec::with_capacity(fams.len());
    for (i, f) in fams.iter().enumerate() {
        let mut w: f64 = 0.0;
        for m in f.e.sample(members, seed.wrapping_add(i as u64))? {
            w = w.max(e.distance(&m)?);
        }
        worst.push(w);
    }
    let below = |ok: &dyn Fn(usize) -> bool| -> Option<f64> {
        // Grid is decreasing: find the first index from which all hold.
        let mut first = None;
        for i in (0..ds.len()).rev() {
            if ok(i) {
                first = Some(ds[i]);
            } else {
                break;
            }
        }
        first
    };
    let delta0 = epsilons.iter().map(|eps| below(&|i| worst[i] <= *eps)).collect();
    let mut entry = Vec::with_capacity(interior.len());
    let mut uncovered = 0;
    for eta in interior {
        let inside: Vec<bool> = fams.iter().map(|f| f.k.accepts(eta)).collect::<Result<_, _>>()?;
        let r = below(&|i| inside[i]);
        if r.is_none() {
            uncovered += 1;
        }
        entry.push(r);
    }
    Ok(ApproxReport { deltas: ds, worst_distance: worst, epsilons: epsilons.to_vec(), delta0, entry_delta: entry, uncovered })
}

/// `ξ ∈ Pco E` for finite `E`: `T(ξ) = Σ t_i T(ξ_i)` with `t` in the simplex,
/// where `T` collects all minors. Decided by a linear feasibility problem.
pub fn pco_membership(xi: &Matrix, e: &[Matrix]) -> Result<bool, HullError> {
    if e.is_empty() {
        return Err(HullError::Empty);
    }
    if let Some(m) = e.iter().find(|m| m.n() != xi.n()) {
        return Err(HullError::Dimension { expected: xi.n(), got: m.n() });
    }
    let target = minors(xi).coords();
    let cols: Vec<Vec<f64>> = e.iter().map(|m| minors(m).coords()).collect();
    let mut a = Vec::with_capacity(target.len() + 1);
    let mut b = Vec::with_capacity(target.len() + 1);
    for (r, v) in target.iter().enumerate() {
        a.push(cols.iter().map(|c| c[r]).collect::<Vec<f64>>());
        b.push(*v);
    }
    a.push(vec![1.0; e.len()]);
    b.push(1.0);
    Ok(lp::feasible(&a, &b).is_some())
}

/// Finite set of 2x2 matrices with entries in `h·Z ∩ [-box, box]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSet {
    h: f64,
    half: i32,
    points: Vec<[i32; 4]>,
    added_at: Vec<usize>,
    truncated: bool,
    converged: bool,
}

impl LatticeSet {
    /// Snaps each matrix to the lattice; matrices outside the box are
    /// dropped and flagged as truncated.
    pub fn new(h: f64, box_half: f64, matrices: &[Matrix]) -> Result<Self, HullError> {
        if !(h > 0.0) || !(box_half >= 0.0) {
            return Err(HullError::Hypothesis("h > 0 and box >= 0"));
        }
        let half = (box_half / h + 1e-9).floor() as i32;
        let mut s = Self { h, half, points: Vec::new(), added_at: Vec::new(), truncated: false, converged: true };
        let mut seen = Bitset::new(s.cells());
        for m in matrices {
            if m.n() != 2 {
                return Err(HullError::Dimension { expected: 2, got: m.n() });
            }
            let mut k = [0i32; 4];
            for (i, e) in m.entries().iter().enumerate() {
                let q = (e / h).round();
                if (q * h - e).abs() > 1e-9 * 1.0f64.max(e.abs()) {
                    return Err(HullError::OffLattice(*e));
                }
                k[i] = q as i32;
            }
            if k.iter().any(|v| v.abs() > half) {
                s.truncated = true;
                continue;
            }
            if seen.insert(s.index(&k)) {
                s.points.push(k);
                s.added_at.push(0);
            }
        }
        Ok(s)
    }

    /// All lattice matrices in the box belonging to `E`.
    pub fn from_spec(spec: &MatrixSetSpec, h: f64, box_half: f64) -> Result<Self, HullError> {
        if spec.n != 2 {
            return Err(HullError::Dimension { expected: 2, got: spec.n });
        }
        let half = (box_half / h + 1e-9).floor() as i32;
        let mut mats = Vec::new();
        let r = -half..=half;
        for i in r.clone() {
            for j in r.clone() {
                for k in r.clone() {
                    for l in r.clone() {
                        let m = Matrix::new2([[i as f64 * h, j as f64 * h], [k as f64 * h, l as f64 * h]]);
                        if spec.contains(&m, REL_TOL)? {
                            mats.push(m);
                        }
                    }
                }
            }
        }
        Self::new(h, box_half, &mats)
    }

    fn width(&self) -> usize {
        (2 * self.half + 1) as usize
    }

    fn cells(&self) -> usize {
        self.width().pow(4)
    }

    fn index(&self, k: &[i32; 4]) -> usize {
        let w = self.width();
        k.iter().fold(0, |acc, v| acc * w + (v + self.half) as usize)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn box_half(&self) -> f64 {
        self.half as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Some input matrix lay outside the box.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// The closure reached its fixed point.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn matrix(&self, i: usize) -> Matrix {
        let k = self.points[i];
        Matrix::new2([[k[0] as f64 * self.h, k[1] as f64 * self.h], [k[2] as f64 * self.h, k[3] as f64 * self.h]])
    }

    pub fn matrices(&self) -> Vec<Matrix> {
        (0..self.len()).map(|i| self.matrix(i)).collect()
    }

    /// Iteration at which each point entered (0 for the input).
    pub fn added_at(&self) -> &[usize] {
        &self.added_at
    }

    pub fn contains(&self, m: &Matrix) -> bool {
        if m.n() != 2 {
            return false;
        }
        let mut k = [0i32; 4];
        for (i, e) in m.entries().iter().enumerate() {
            let q = (e / self.h).round();
            if (q * self.h - e).abs() > 1e-9 * 1.0f64.max(e.abs()) || q.abs() > self.half as f64 {
                return false;
            }
            k[i] = q as i32;
        }
        self.points.contains(&k)
    }

    /// SO(2)-saturated membership predicate: `ξ` is accepted when its
    /// singular values and determinant sign match some lattice member.
    pub fn predicate(&self) -> HullPredicate {
        let mut profiles: Vec<[f64; 3]> = self
            .matrices()
            .iter()
            .map(|m| {
                let sv = singular_values(m);
                let d = m.det();
                [sv.values()[0], sv.values()[1], if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 }]
            })
            .collect();
        profiles.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
        profiles.dedup_by(|p, q| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12 && p[2] == q[2]);
        HullPredicate { source: Source::Oracle, strict: false, params: HullParams::Oracle { profiles, h: self.h }, tol: REL_TOL }
    }
}

struct Bitset(Vec<u64>);

impl Bitset {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    /// Sets bit `i`; true if it was clear.
    fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.0[w] & b == 0;
        self.0[w] |= b;
        fresh
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// Iterated rank-one closure on the lattice: adds every lattice point on a
/// segment `[A, B]` with `rank(A - B) = 1` (exact integer test), until no
/// point is added or `max_iter` rounds have run.
pub fn rco_oracle(e: &LatticeSet, max_iter: usize) -> LatticeSet {
    let mut s = e.clone();
    let mut seen = Bitset::new(s.cells());
    for k in &s.points {
        seen.insert(s.index(k));
    }
    let mut frontier = 0..s.points.len();
    s.converged = false;
    for it in 1..=max_iter {
        let end = s.points.len();
        for i in frontier.clone() {
            let p = s.points[i];
            for j in 0..end {
                if frontier.contains(&j) && j >= i {
                    continue;
                }
                let q = s.points[j];
                let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2], q[3] - p[3]].map(i64::from);
                if d[0] * d[3] != d[1] * d[2] {
                    continue;
                }
                let g = d.iter().fold(0, |g, v| gcd(g, *v));
                if g <= 1 {
                    continue;
                }
                let step = d.map(|v| (v / g) as i32);
                for t in 1..g as i32 {
                    let r = [p[0] + t * step[0], p[1] + t * step[1], p[2] + t * step[2], p[3] + t * step[3]];
                    if seen.insert(s.index(&r)) {
                        s.points.push(r);
                        s.added_at.push(it);
                    }
                }
            }
        }
        if s.points.len() == end {
            s.converged = true;
            break;
        }
        frontier = end..s.points.len();
    }
    s
}

/// Random members of the region accepted by `k`, built as `R diag(x) S`
/// with `R, S ∈ SO(n)` from a box of singular-value tuples.
pub fn sample_accepted(k: &HullPredicate, lower: f64, upper: f64, count: usize, seed: u64, max_tries: usize) -> Vec<Matrix> {
    use rand::Rng;
    let n = k.n();
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..max_tries {
        if out.len() == count {
            break;
        }
        let mut x: Vec<f64> = (0..n).map(|_| r.random_range(lower..=upper)).collect();
        x.sort_by(|p, q| p.total_cmp(q));
        let m = rng::rotation(&mut r, n) * Matrix::diag(&x) * rng::rotation(&mut r, n);
        if k.evaluate_values(&x, m.det()).accepted {
            out.push(m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sv2(x1: f64, x2: f64) -> Matrix {
        Matrix::diag(&[x1, x2])
    }

    #[test]
    fn ftheta_examples() {
        let l = SingularValueSet::point(&[1.0, 2.0]);
        let c = ftheta_predicate(&l, false).unwrap();
        let s = ftheta_predicate(&l, true).unwrap();
        assert!(c.accepts(&sv2(1.0, 2.0)).unwrap());
        assert!(!s.accepts(&sv2(1.0, 2.0)).unwrap());
        assert!(s.accepts(&sv2(1.2, 1.5)).unwrap());
        assert!(!c.accepts(&sv2(2.0, 2.0)).unwrap());
    }

    #[test]
    fn envelope_matches_brute_force() {
        let l = SingularValueSet::FinitePoints(vec![vec![1.0, 2.0], vec![2.0, 3.0], vec![0.5, 4.0], vec![1.5, 1.6]]);
        let p = ftheta_predicate(&l, false).unwrap();
        let HullParams::Ftheta { thetas, rhs, lambda, theta_max } = &p.params else { unreachable!() };
        assert_eq!(*theta_max, 4.0);
        // Envelope value at each candidate is the brute-force maximum, and
        // the minimal slack over a fine θ grid is attained at a candidate.
        for x in [[1.0, 2.5], [1.6, 2.0], [0.7, 3.7]] {
            let f = |t: f64| lambda.iter().map(|q| q[0] * q[1] + t * (q[1] - q[0])).fold(f64::MIN, f64::max) - (x[0] * x[1] + t * (x[1] - x[0]));
            let grid = (0..=4000).map(|i| f(4.0 * i as f64 / 4000.0)).fold(f64::INFINITY, f64::min);
            let cand = thetas.iter().zip(rhs).map(|(t, r)| r - (x[0] * x[1] + t * (x[1] - x[0]))).fold(f64::INFINITY, f64::min);
            assert!(cand <= grid + 1e-12 && cand >= grid - 1e-2);
        }
    }

    #[test]
    fn twopoint_examples() {
        let c = twopoint_predicate(1.0, 3.0, 2.0, 4.0, false).unwrap();
        let s = c.interior();
        assert_eq!(c.theta_underline(), Some(2.5));
        let xi = sv2(1.5, 2.0);
        assert!(c.accepts(&xi).unwrap());
        assert!(!s.accepts(&xi).unwrap());
        assert_eq!(s.evaluate(&xi).unwrap().binding, "x2 >= a1 a2 / x1");
        assert!(c.accepts(&sv2(1.0, 3.0)).unwrap());
        assert!(!c.accepts(&Matrix::diag(&[-1.0, 3.0])).unwrap());
        assert!(twopoint_predicate(1.0, 2.0, 3.0, 4.0, false).is_err());
    }

    #[test]
    fn theta_line_value_at_example() {
        let (a1, a2, t) = (1.0, 3.0, 2.5);
        let g = (-a1 * a2 + t * (a1 + a2) - t * 1.5) / (t - 1.5);
        assert_relative_eq!(g, 3.25, epsilon = 1e-15);
    }

    #[test]
    fn fiber_examples() {
        let (a1, a2) = (1.0, 4.0);
        let c = fiber_rco_predicate(a1, a2, false).unwrap();
        assert!(c.accepts(&sv2(a1, a2)).unwrap());
        assert!(c.accepts(&sv2(2.0, 2.0)).unwrap());
        assert!(!c.accepts(&sv2(a1 / 2.0, 2.0 * a2)).unwrap());
        assert!(!c.interior().accepts(&sv2(a1, a2)).unwrap());
        assert!(!c.accepts(&sv2(1.0, 3.0)).unwrap());
    }

    #[test]
    fn segment2_examples() {
        let k = segment_k_predicate_2d([1.0, 2.0], [2.0, 3.0]).unwrap();
        assert_relative_eq!(psi2_inverse(&[1.0, 2.0], &[2.0, 3.0], 3.75), 0.5, epsilon = 1e-14);
        assert!(!k.accepts(&sv2(1.5, 2.5)).unwrap());
        assert!(k.accepts(&sv2(1.7, 3.75 / 1.7)).unwrap());
        assert!(!k.accepts(&sv2(1.0, 2.0)).unwrap());
        assert!(segment_k_predicate_2d([1.0, 1.0], [2.0, 2.0]).is_err());
    }

    #[test]
    fn segment3_examples() {
        let (a, b) = ([1.0, 2.0, 3.0], [2.0, 3.0, 4.0]);
        let k = segment_k_predicate_3d(a, b).unwrap();
        let m = gamma3(&a, &b, 0.5);
        let x = [m[0] * 1.05, m[1], m[2] / 1.05];
        assert!(k.accepts(&Matrix::diag(&x)).unwrap());
        let y = [m[0] * 0.95, m[1], m[2] / 0.95];
        assert!(!k.accepts(&Matrix::diag(&y)).unwrap());
        assert!(!k.accepts(&Matrix::diag(&m)).unwrap());
        assert!(!k.accepts(&Matrix::diag(&a)).unwrap());
    }

    #[test]
    fn delta_families() {
        let f = twopoint_delta_family(1.0, 3.0, 2.0, 4.0, 0.1).unwrap();
        assert_relative_eq!(f.k.theta_underline().unwrap(), 2.5, epsilon = 1e-12);
        assert_relative_eq!(theta_underline_delta(1.0, 3.0, 2.0, 4.0, 0.1), 2.5, epsilon = 1e-12);
        assert!(twopoint_delta_family(1.0, 3.0, 2.0, 4.0, 1.0).is_err());
        let p = perturbed_point_2d([1.0, 2.0], 0.05);
        assert_relative_eq!(p[0], 1.05);
        assert_relative_eq!(p[1], 2.0 / 1.05);
        assert_relative_eq!(perturbation_3d(0.1, [1.0, 2.0, 3.0]), 0.1);
        let g = segment_delta_family_2d([1.0, 2.0], [2.0, 3.0], 0.05).unwrap();
        assert!(g.e.contains(&sv2(p[0], p[1]), 1e-3).is_ok());
        assert!(segment_delta_family_2d([1.0, 2.0], [2.0, 3.0], 3.0).is_err());
        assert!(segment_delta_family_3d([1.0, 2.0, 3.0], [2.0, 3.0, 4.0], 0.1).is_ok());
    }

    #[test]
    fn pco_examples() {
        let e = [sv2(1.0, 0.0), sv2(0.0, 1.0)];
        assert!(!pco_membership(&sv2(0.5, 0.5), &e).unwrap());
        assert!(pco_membership(&e[0], &e).unwrap());
        let e = [sv2(1.0, 1.0), sv2(1.0, -1.0)];
        assert!(pco_membership(&sv2(1.0, 0.0), &e).unwrap());
    }

    #[test]
    fn oracle_examples() {
        let one = LatticeSet::new(0.25, 3.0, &[sv2(1.0, 1.0)]).unwrap();
        assert_eq!(rco_oracle(&one, 10).len(), 1);
        let pair = LatticeSet::new(0.25, 3.0, &[sv2(1.0, 1.0), sv2(1.0, -1.0)]).unwrap();
        let g = rco_oracle(&pair, 10);
        assert_eq!(g.len(), 9);
        assert!(g.converged());
        for k in -4..=4 {
            assert!(g.contains(&sv2(1.0, k as f64 / 4.0)));
        }
        let far = LatticeSet::new(0.25, 3.0, &[sv2(1.0, 1.0), sv2(-1.0, -1.0)]).unwrap();
        assert_eq!(rco_oracle(&far, 10).len(), 2);
        assert!(LatticeSet::new(0.25, 3.0, &[sv2(0.1, 0.0)]).is_err());
        assert!(LatticeSet::new(0.25, 1.0, &[sv2(2.0, 0.0)]).unwrap().truncated());
    }
}
