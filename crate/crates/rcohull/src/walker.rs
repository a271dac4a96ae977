//! Rank-one walks: from `ξ ∈ int K` find steps `η_1, …, η_J` with every
//! segment `[p_{j-1} - η_j, p_{j-1} + η_j]` inside `int K` and the end point
//! in `B_δ(E)`. Walks become laminate chains with weights `1/2^j`.
//!
//! Directions come from a [`Proposer`]. Three are provided: a generic one
//! (nearest-member projection, a fixed dyad dictionary and seeded random
//! dyads), a fiber proposer for 2x2 sets with finitely many singular-value
//! points, and the norm-growth proposer for Kirchheim-type data.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::laminate::{Atom, LaminateChain, MergeStep, MergeWitness, OpenSet};
use crate::lp;
use crate::matcore::{is_rank_one, rank_one_part, rsd_decompose, Dyad, Matrix};
use crate::rng::{self, SeededRng};
use crate::sets::{Distance, SetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("start point is not in int K")]
    StartOutside,
    #[error("no admissible rank-one direction at step {0}")]
    NoDirection(usize),
    #[error("walk exceeded its cap of {0} steps")]
    CapExceeded(usize),
    #[error(transparent)]
    Set(#[from] SetError),
}

#[derive(Debug, Clone, Copy)]
pub struct WalkCaps {
    /// Absolute step cap.
    pub max_steps: usize,
    /// Sample points per segment, endpoints included.
    pub samples: usize,
    /// Minimal margin of the `int K` predicate along a segment.
    pub margin: f64,
    /// Bound on `|ξ|` over `K`, for the norm-growth cap.
    pub bound_k: Option<f64>,
    pub rank_tol: f64,
    /// Bisection rounds when a candidate asks for step-length search.
    pub bisections: usize,
}

impl Default for WalkCaps {
    fn default() -> Self {
        Self { max_steps: 10_000, samples: 11, margin: 1e-9, bound_k: None, rank_tol: 1e-9, bisections: 40 }
    }
}

/// The walk `ξ → ξ + η_1 → … → ξ + η_1 + … + η_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub start: Matrix,
    pub steps: Vec<Matrix>,
    /// Smallest `int K` margin seen on each step's segment.
    pub margins: Vec<f64>,
    pub final_distance: f64,
}

impl WalkPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `ξ + η_1 + … + η_j`.
    pub fn point(&self, j: usize) -> Matrix {
        self.steps[..j].iter().fold(self.start, |p, s| p + *s)
    }

    pub fn end(&self) -> Matrix {
        self.point(self.steps.len())
    }
}

/// A rank-one direction with trial step lengths. With `bisect` set, each
/// length is an upper bound and the largest admissible length below it is
/// searched for.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub direction: Matrix,
    pub scales: Vec<f64>,
    pub bisect: bool,
}

pub trait Proposer {
    fn propose(&mut self, p: &Matrix, target: &dyn Distance) -> Vec<Candidate>;

    /// Progress measure; the walk only takes steps that lower it, unless the
    /// step ends inside `B_δ(E)`.
    fn score(&self, m: &Matrix, target: &dyn Distance) -> f64 {
        target.distance_to(m).unwrap_or(f64::INFINITY)
    }

    /// Guaranteed lower bound `C` on step norms, if the proposer has one.
    fn step_floor(&self) -> Option<f64> {
        None
    }
}

/// Smallest `int K` margin over `samples` points of `[p - η, p + η]`.
pub fn segment_margin(p: &Matrix, eta: &Matrix, int_k: &OpenSet, samples: usize) -> f64 {
    let k = samples.max(2);
    (0..k)
        .map(|i| {
            let s = -1.0 + 2.0 * i as f64 / (k - 1) as f64;
            int_k.margin(&(*p + eta.scale(s)))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Step cap: `ceil((2·bound_K / C)²)` when both are known, never above the
/// absolute cap.
pub fn step_cap(caps: &WalkCaps, floor: Option<f64>, int_k: &OpenSet) -> usize {
    let bound = caps.bound_k.or_else(|| int_k.radius().is_finite().then(|| int_k.radius()));
    match (bound, floor) {
        (Some(b), Some(c)) if c > 0.0 => {
            let v = (2.0 * b / c).powi(2).ceil();
            if v < caps.max_steps as f64 {
                v as usize
            } else {
                caps.max_steps
            }
        }
        _ => caps.max_steps,
    }
}

/// Runs a rank-one walk from `xi` until it enters `B_δ(E)`.
pub fn walk(
    xi: &Matrix,
    int_k: &OpenSet,
    e: &dyn Distance,
    delta: f64,
    proposer: &mut dyn Proposer,
    caps: &WalkCaps,
) -> Result<WalkPath, WalkError> {
    if !int_k.contains(xi) {
        return Err(WalkError::StartOutside);
    }
    let mut path = WalkPath { start: *xi, steps: Vec::new(), margins: Vec::new(), final_distance: e.distance_to(xi)? };
    let cap = step_cap(caps, proposer.step_floor(), int_k);
    let mut p = *xi;
    while path.final_distance >= delta {
        if path.steps.len() >= cap {
            return Err(WalkError::CapExceeded(cap));
        }
        let here = proposer.score(&p, e);
        let mut best: Option<(f64, f64, Matrix, f64)> = None;
        for c in proposer.propose(&p, e) {
            let dn = c.direction.norm();
            if dn == 0.0 || !is_rank_one(&c.direction, caps.rank_tol) {
                continue;
            }
            for &s in &c.scales {
                let Some((eta, margin)) = admissible_step(&p, &c.direction, s, c.bisect, int_k, caps) else {
                    continue;
                };
                let q = p + eta;
                let d = e.distance_to(&q)?;
                let sc = if d < delta { f64::NEG_INFINITY } else { proposer.score(&q, e) };
                if d >= delta && !(sc < here - 1e-14 * here.abs().max(1.0)) {
                    continue;
                }
                let len = eta.norm();
                let better = match &best {
                    None => true,
                    Some((bs, bl, _, _)) => sc < *bs || (sc == *bs && len < *bl),
                };
                if better {
                    best = Some((sc, len, eta, margin));
                }
            }
        }
        let Some((_, _, eta, margin)) = best else {
            return Err(WalkError::NoDirection(path.steps.len()));
        };
        p += eta;
        path.steps.push(eta);
        path.margins.push(margin);
        path.final_distance = e.distance_to(&p)?;
    }
    Ok(path)
}

fn admissible_step(p: &Matrix, dir: &Matrix, s: f64, bisect: bool, int_k: &OpenSet, caps: &WalkCaps) -> Option<(Matrix, f64)> {
    if !(s > 0.0 && s.is_finite()) {
        return None;
    }
    let check = |t: f64| {
        let eta = dir.scale(t);
        let m = segment_margin(p, &eta, int_k, caps.samples);
        (m > caps.margin).then_some((eta, m))
    };
    if let Some(r) = check(s) {
        return Some(r);
    }
    if !bisect {
        return None;
    }
    let (mut lo, mut hi) = (0.0, s);
    let mut found = None;
    for _ in 0..caps.bisections {
        let mid = 0.5 * (lo + hi);
        match check(mid) {
            Some(r) => {
                lo = mid;
                found = Some(r);
            }
            None => hi = mid,
        }
    }
    found.filter(|(eta, _)| eta.norm() > 1e-12)
}

/// Chain `(1/2^j, ξ + η_1 + … + η_{j-1} - η_j)` for `j = 1..J` and
/// `(1/2^J, ξ + η_1 + … + η_J)`; its barycenter is `ξ`.
pub fn path_to_chain(path: &WalkPath) -> LaminateChain {
    if path.is_empty() {
        return LaminateChain::singleton(path.start);
    }
    let mut atoms = Vec::with_capacity(path.len() + 1);
    let mut p = path.start;
    let mut w = 1.0;
    for eta in &path.steps {
        w *= 0.5;
        atoms.push((w, p - *eta));
        p += *eta;
    }
    atoms.push((w, p));
    LaminateChain::new(atoms).expect("dyadic weights sum to one")
}

/// Merge order of a walk chain: repeatedly join the last two atoms.
pub fn path_witness(path: &WalkPath) -> MergeWitness {
    let j = path.len();
    let mut steps = Vec::with_capacity(j);
    let mut w = 0.5f64.powi(j as i32);
    for k in (0..j).rev() {
        w *= 2.0;
        steps.push(MergeStep { i: k, j: k + 1, weight: w, matrix: path.point(k) });
    }
    MergeWitness { steps }
}

#[derive(Debug, Clone, Copy)]
pub struct RefineCaps {
    pub walk: WalkCaps,
    pub sweeps: usize,
    pub max_atoms: usize,
}

impl Default for RefineCaps {
    fn default() -> Self {
        Self { walk: WalkCaps::default(), sweeps: 60, max_atoms: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub chain: LaminateChain,
    /// Outside mass before the first sweep and after each sweep.
    pub masses: Vec<f64>,
    /// Longest walk used in each sweep.
    pub walk_lengths: Vec<usize>,
    /// Atoms whose walk failed in the last sweep.
    pub stuck: usize,
    /// True when a cap stopped refinement before the outside mass fell below δ.
    pub capped: bool,
}

/// Replaces atoms outside `B_δ(E)` by the chains of their own walks until
/// the outside mass drops below `δ`.
pub fn refine_chain(
    chain: &LaminateChain,
    e: &dyn Distance,
    int_k: &OpenSet,
    delta: f64,
    proposer: &mut dyn Proposer,
    caps: &RefineCaps,
) -> Result<RefineReport, WalkError> {
    let mut atoms: Vec<Atom> = chain.atoms().to_vec();
    let mass = |atoms: &[Atom]| -> Result<f64, SetError> {
        let mut m = 0.0;
        for a in atoms {
            if e.distance_to(&a.matrix)? >= delta {
                m += a.weight;
            }
        }
        Ok(m)
    };
    let mut masses = vec![mass(&atoms)?];
    let mut walk_lengths = Vec::new();
    let mut stuck = 0;
    let mut capped = false;
    while *masses.last().expect("nonempty") >= delta {
        if walk_lengths.len() >= caps.sweeps || atoms.len() >= caps.max_atoms {
            capped = true;
            break;
        }
        let mut next = Vec::with_capacity(atoms.len() * 2);
        let mut longest = 0;
        stuck = 0;
        for a in &atoms {
            if e.distance_to(&a.matrix)? < delta {
                next.push(*a);
                continue;
            }
            match walk(&a.matrix, int_k, e, delta, proposer, &caps.walk) {
                Ok(path) if !path.is_empty() => {
                    longest = longest.max(path.len());
                    for b in path_to_chain(&path).atoms() {
                        next.push(Atom { weight: a.weight * b.weight, matrix: b.matrix });
                    }
                }
                Ok(_) => next.push(*a),
                Err(WalkError::Set(s)) => return Err(WalkError::Set(s)),
                Err(_) => {
                    stuck += 1;
                    next.push(*a);
                }
            }
        }
        atoms = next;
        walk_lengths.push(longest);
        masses.push(mass(&atoms)?);
        if longest == 0 {
            capped = true;
            break;
        }
    }
    let chain = LaminateChain::new(atoms.iter().map(|a| (a.weight, a.matrix)).collect()).expect("weights preserved");
    Ok(RefineReport { chain, masses, walk_lengths, stuck, capped })
}

/// Unit dyads `±a ⊗ b` for `a, b` in a fixed set of four unit vectors.
pub fn dyad_dictionary(n: usize) -> Vec<Matrix> {
    let s2 = 0.5f64.sqrt();
    let s3 = (1.0f64 / 3.0).sqrt();
    let vs: Vec<Vec<f64>> = if n == 2 {
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s2, s2], vec![s2, -s2]]
    } else {
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![s3, s3, s3]]
    };
    let mut out = Vec::with_capacity(32);
    for a in &vs {
        for b in &vs {
            let d = Dyad::new(a, b).expect("unit vectors").to_matrix();
            out.push(d);
            out.push(-d);
        }
    }
    out
}

/// Nearest-member projection, a 32-dyad dictionary and seeded random dyads.
#[derive(Debug, Clone)]
pub struct GenericProposer {
    rng: SeededRng,
    dictionary: Vec<Matrix>,
    random: usize,
}

impl GenericProposer {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { rng: rng::seeded(seed), dictionary: dyad_dictionary(n), random: 4 }
    }
}

impl Proposer for GenericProposer {
    fn propose(&mut self, p: &Matrix, target: &dyn Distance) -> Vec<Candidate> {
        let n = p.n();
        let d = target.distance_to(p).unwrap_or(1.0).max(1e-6);
        let mut out = Vec::new();
        if let Some(rep) = target.nearest(p) {
            let diff = rep - *p;
            let r1 = rank_one_part(&diff);
            let len = r1.norm();
            if len > 0.0 {
                // Step to the orthogonal projection of `rep` on the line.
                let s = diff.dot(&r1) / len;
                out.push(Candidate { direction: r1.scale(1.0 / len), scales: vec![s.abs()], bisect: true });
            }
        }
        for m in &self.dictionary {
            out.push(Candidate { direction: *m, scales: vec![d], bisect: true });
        }
        for _ in 0..self.random {
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            rng::unit_vector(&mut self.rng, &mut a[..n]);
            rng::unit_vector(&mut self.rng, &mut b[..n]);
            let m = Dyad::new(&a[..n], &b[..n]).expect("unit vectors").to_matrix();
            let sign = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            out.push(Candidate { direction: m.scale(sign), scales: vec![d], bisect: true });
        }
        out
    }
}

/// For 2x2 targets `{λ(ξ) ∈ {α^1, …, α^m}, det ξ > 0}`: in the frame
/// `p = R diag(x_1, x_2) S`, offers moves of `x_1` or `x_2` onto a fiber
/// `x_1 x_2 = α_1 α_2`, and on a fiber the move along `R e_1 ⊗ e_2 S` whose
/// both ends have singular values exactly `α`.
#[derive(Debug, Clone)]
pub struct FiberProposer {
    targets: Vec<[f64; 2]>,
}

impl FiberProposer {
    pub fn new(targets: &[[f64; 2]]) -> Self {
        Self { targets: targets.to_vec() }
    }

    fn fiber_score(&self, m: &Matrix) -> f64 {
        let (_, sv, _) = rsd_decompose(m);
        let (x1, x2) = (sv.values()[0], sv.values()[1]);
        if m.det() <= 0.0 {
            return f64::INFINITY;
        }
        self.targets
            .iter()
            .map(|a| {
                let p = a[0] * a[1];
                let r = a[0] * a[0] + a[1] * a[1];
                (x1 * x2 - p).abs() / p + (x1 * x1 + x2 * x2 - r).max(0.0) / r
            })
            .fold(f64::INFINITY, f64::min)
    }
}

impl Proposer for FiberProposer {
    fn propose(&mut self, p: &Matrix, _target: &dyn Distance) -> Vec<Candidate> {
        let (r, sv, s) = rsd_decompose(p);
        let (x1, x2) = (sv.values()[0], sv.values()[1]);
        let frame = |i: usize, j: usize| {
            let mut e = Matrix::zeros(2);
            e.set(i, j, 1.0);
            r * e * s
        };
        let mut out = Vec::new();
        for a in &self.targets {
            let prod = a[0] * a[1];
            let rr = a[0] * a[0] + a[1] * a[1];
            if (x1 * x2 - prod).abs() <= 1e-9 * prod && x1 * x1 + x2 * x2 <= rr {
                let t = (rr - x1 * x1 - x2 * x2).sqrt();
                if t > 1e-12 {
                    out.push(Candidate { direction: frame(0, 1), scales: vec![t], bisect: false });
                }
            }
            for (i, s1) in [(0usize, prod / x2 - x1), (1, prod / x1 - x2)] {
                if s1.abs() > 1e-12 && s1.is_finite() {
                    out.push(Candidate { direction: frame(i, i).scale(s1.signum()), scales: vec![s1.abs()], bisect: false });
                }
            }
        }
        out
    }

    fn score(&self, m: &Matrix, _target: &dyn Distance) -> f64 {
        self.fiber_score(m)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KirchheimError {
    #[error("the point equals its base matrix; no step is defined")]
    Degenerate,
    #[error("the point is not in the interior of any hull co({{ξ}} ∪ M_ξ)")]
    NotRepresentable,
    #[error("coefficients must be positive with sum below one")]
    BadCoefficients,
}

/// Step data at `η = Σ λ_j μ_j + (1 - Σ λ_j) ξ`: the index `j*` maximizing
/// `λ_j |ξ - μ_j|` (lowest index on ties), the bound
/// `min{λ_{j*}, 1 - Σ λ_j}` on admissible `|t|`, and the direction `ξ - μ_{j*}`.
pub fn kirchheim_direction(xi: &Matrix, mus: &[Matrix], lambdas: &[f64]) -> Result<(usize, f64, Matrix), KirchheimError> {
    if mus.len() != lambdas.len() || lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(KirchheimError::BadCoefficients);
    }
    let total: f64 = lambdas.iter().sum();
    if total <= 0.0 {
        return Err(KirchheimError::Degenerate);
    }
    if total >= 1.0 {
        return Err(KirchheimError::BadCoefficients);
    }
    let mut js = 0;
    let mut best = -1.0;
    for (j, (m, &l)) in mus.iter().zip(lambdas).enumerate() {
        let v = l * (*xi - *m).norm();
        if v > best {
            best = v;
            js = j;
        }
    }
    Ok((js, lambdas[js].min(1.0 - total), *xi - mus[js]))
}

/// Interior representation of `q` in `co(vertices)`: maximizes `t` with
/// every barycentric coefficient `>= t`. Returns the coefficients and `t`.
pub fn interior_coefficients(q: &Matrix, vertices: &[Matrix]) -> Option<(Vec<f64>, f64)> {
    let k = vertices.len();
    let d = q.entries().len();
    let mut a = vec![vec![0.0; k + 1]; d + 1];
    let mut b = vec![0.0; d + 1];
    for i in 0..k {
        a[0][i] = 1.0;
    }
    a[0][k] = k as f64;
    b[0] = 1.0;
    for r in 0..d {
        let mut sum = 0.0;
        for (i, v) in vertices.iter().enumerate() {
            a[r + 1][i] = v.entries()[r];
            sum += v.entries()[r];
        }
        a[r + 1][k] = sum;
        b[r + 1] = q.entries()[r];
    }
    let mut c = vec![0.0; k + 1];
    c[k] = 1.0;
    let s = lp::maximize(&a, &b, &c);
    if s.status != lp::LpStatus::Optimal {
        return None;
    }
    let t = s.x[k];
    Some((s.x[..k].iter().map(|v| v + t).collect(), t))
}

/// Whether the vertices affinely span all of matrix space.
pub fn full_dimensional(vertices: &[Matrix]) -> bool {
    let Some(v0) = vertices.first() else { return false };
    let d = v0.entries().len();
    let mut rows: Vec<Vec<f64>> = vertices[1..].iter().map(|v| (*v - *v0).entries().to_vec()).collect();
    let scale = rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut rank = 0;
    for col in 0..d {
        let Some(piv) = (rank..rows.len()).max_by(|&i, &j| rows[i][col].abs().total_cmp(&rows[j][col].abs())) else { break };
        if rows[piv][col].abs() <= 1e-10 * scale {
            continue;
        }
        rows.swap(rank, piv);
        for i in 0..rows.len() {
            if i != rank {
                let f = rows[i][col] / rows[rank][col];
                if f != 0.0 {
                    for c in col..d {
                        rows[i][c] -= f * rows[rank][c];
                    }
                }
            }
        }
        rank += 1;
    }
    rank == d
}

/// Finite set `E` with, for each `ξ ∈ E`, a finite list `M_ξ` of matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct KirchheimInput {
    pub e: Vec<Matrix>,
    pub m: Vec<Vec<Matrix>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Condition {
    /// `M_ξ ⊂ ξ + {rank one}`.
    I,
    /// `M_ξ ⊂ B_{1/2}(0)` and `#M_ξ < 4Nn`.
    II,
    /// `∂B_{1/2}(0)` covered by the interiors of `co({ξ} ∪ M_ξ)`.
    III,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Self::I => "i",
            Self::II => "ii",
            Self::III => "iii",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: Condition,
    /// Index into `E`, when the violation belongs to one base matrix.
    pub xi: Option<usize>,
    pub witness: Option<Matrix>,
    pub detail: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KirchheimReport {
    pub violations: Vec<Violation>,
    pub sampled: usize,
    pub covered: usize,
}

impl KirchheimReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn labels(&self) -> Vec<&'static str> {
        let mut v: Vec<Condition> = self.violations.iter().map(|x| x.condition).collect();
        v.sort();
        v.dedup();
        v.into_iter().map(Condition::label).collect()
    }
}

impl KirchheimInput {
    /// Builds and validates the data (`samples` sphere points for iii).
    pub fn new(e: Vec<Matrix>, m: Vec<Vec<Matrix>>, samples: usize, seed: u64) -> Result<Self, KirchheimReport> {
        let input = Self { e, m };
        let report = validate_kirchheim_input(&input, samples, seed, 1e-9);
        if report.ok() {
            Ok(input)
        } else {
            Err(report)
        }
    }

    pub fn n(&self) -> usize {
        self.e.first().map_or(2, Matrix::n)
    }

    fn vertices(&self, i: usize) -> Vec<Matrix> {
        let mut v = Vec::with_capacity(self.m[i].len() + 1);
        v.push(self.e[i]);
        v.extend_from_slice(&self.m[i]);
        v
    }

    /// Index of a hull `co({ξ} ∪ M_ξ)` containing `q` in its interior, with
    /// the interior coefficients (base matrix first).
    pub fn locate(&self, q: &Matrix) -> Option<(usize, Vec<f64>, f64)> {
        self.locate_in(q, &self.bounding_balls())
    }

    /// Center and radius of a ball around each hull.
    fn bounding_balls(&self) -> Vec<(Matrix, f64)> {
        (0..self.e.len())
            .map(|i| {
                let v = self.vertices(i);
                let c = v.iter().fold(Matrix::zeros(self.n()), |s, m| s + *m).scale(1.0 / v.len() as f64);
                let r = v.iter().map(|m| (*m - c).norm()).fold(0.0, f64::max);
                (c, r)
            })
            .collect()
    }

    /// As `locate`, trying hulls whose ball holds `q` nearest center first.
    fn locate_in(&self, q: &Matrix, balls: &[(Matrix, f64)]) -> Option<(usize, Vec<f64>, f64)> {
        let mut order: Vec<(f64, usize)> = Vec::new();
        for (i, (c, r)) in balls.iter().enumerate() {
            let d = (*q - *c).norm();
            if d < *r {
                order.push((d / r, i));
            }
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, i) in order {
            let v = self.vertices(i);
            if let Some((lam, t)) = interior_coefficients(q, &v) {
                if t > 1e-12 && full_dimensional(&v) {
                    return Some((i, lam, t));
                }
            }
        }
        None
    }

    /// `K = B_{1/2}(0) ∪ ⋃ int co({ξ} ∪ M_ξ)` as an open set.
    pub fn k_set(&self) -> OpenSet {
        let me = self.clone();
        let balls = self.bounding_balls();
        let radius = self.e.iter().map(Matrix::norm).fold(0.5, f64::max) + 1e-9;
        OpenSet::new(radius, move |q| {
            let ball = 0.5 - q.norm();
            if ball > 0.0 {
                return ball;
            }
            match me.locate_in(q, &balls) {
                Some((_, _, t)) => t,
                None => ball.min(-1e-12),
            }
        })
    }

    /// `max |μ - ξ|` and `max |μ|` over all data, and `max |ξ|`.
    fn extents(&self) -> (f64, f64, f64) {
        let mut dmax: f64 = 0.0;
        let mut mumax: f64 = 0.0;
        for (x, ms) in self.e.iter().zip(&self.m) {
            for m in ms {
                dmax = dmax.max((*x - *m).norm());
                mumax = mumax.max(m.norm());
            }
        }
        (dmax, mumax, self.e.iter().map(Matrix::norm).fold(0.0, f64::max))
    }

    /// Lower bound on `min{λ_{j*}, 1 - Σ λ_j}` for points outside
    /// `B_δ(E) ∪ B_{1/2}(0)`.
    pub fn coefficient_floor(&self, delta: f64) -> f64 {
        let n = self.n();
        let (dmax, mumax, ximax) = self.extents();
        let a = delta / (4.0 * (n * n) as f64 * dmax);
        let b = (0.5 - mumax) / (ximax - mumax);
        a.min(b)
    }
}

/// Checks conditions i)–iii) on finite data; iii) on `samples` uniform
/// points of `∂B_{1/2}(0)`.
pub fn validate_kirchheim_input(input: &KirchheimInput, samples: usize, seed: u64, tol: f64) -> KirchheimReport {
    let mut violations = Vec::new();
    let n = input.n();
    if input.e.len() != input.m.len() {
        violations.push(Violation { condition: Condition::II, xi: None, witness: None, detail: "E and M have different lengths" });
        return KirchheimReport { violations, sampled: 0, covered: 0 };
    }
    for (i, (x, ms)) in input.e.iter().zip(&input.m).enumerate() {
        for mu in ms {
            if !is_rank_one(&(*mu - *x), tol) {
                violations.push(Violation { condition: Condition::I, xi: Some(i), witness: Some(*mu), detail: "μ - ξ is not rank one" });
            }
            if mu.norm() >= 0.5 {
                violations.push(Violation { condition: Condition::II, xi: Some(i), witness: Some(*mu), detail: "μ is not in B_1/2(0)" });
            }
        }
        if ms.len() >= 4 * n * n {
            violations.push(Violation { condition: Condition::II, xi: Some(i), witness: None, detail: "#M_ξ is at least 4Nn" });
        }
    }
    let mut r = rng::substream(seed, 0x4b49);
    let mut covered = 0;
    let balls = input.bounding_balls();
    for _ in 0..samples {
        let q = rng::sphere_matrix(&mut r, n, 0.5);
        if input.locate_in(&q, &balls).is_some() {
            covered += 1;
        } else if violations.iter().filter(|v| v.condition == Condition::III).count() < 8 {
            violations.push(Violation { condition: Condition::III, xi: None, witness: Some(q), detail: "sphere point not covered" });
        }
    }
    KirchheimReport { violations, sampled: samples, covered }
}

/// Norm-growth proposer: inside a hull steps along `±c(ξ - μ_{j*})`; inside
/// the ball moves outward along a rank-one direction.
#[derive(Debug, Clone)]
pub struct KirchheimProposer {
    input: KirchheimInput,
    /// Fraction of the admissible `|t|` used.
    pub gamma: f64,
    floor: Option<f64>,
    balls: Vec<(Matrix, f64)>,
}

impl KirchheimProposer {
    pub fn new(input: KirchheimInput) -> Self {
        let balls = input.bounding_balls();
        Self { input, gamma: 0.9, floor: None, balls }
    }

    /// Enables the walk cap from the guaranteed step norm at scale `δ`.
    pub fn with_delta(mut self, delta: f64) -> Self {
        let (dmax, _, _) = self.input.extents();
        let dmin = self
            .input
            .e
            .iter()
            .zip(&self.input.m)
            .flat_map(|(x, ms)| ms.iter().map(move |m| (*x - *m).norm()))
            .fold(f64::INFINITY, f64::min);
        let _ = dmax;
        self.floor = Some(self.gamma * self.input.coefficient_floor(delta) * dmin);
        self
    }

    /// The step at `eta`: base index, `j*`, admissible bound and direction.
    pub fn step(&self, eta: &Matrix) -> Result<(usize, usize, f64, Matrix), KirchheimError> {
        let (i, lam, _) = self.input.locate_in(eta, &self.balls).ok_or(KirchheimError::NotRepresentable)?;
        let (js, bound, dir) = kirchheim_direction(&self.input.e[i], &self.input.m[i], &lam[1..])?;
        Ok((i, js, bound, dir))
    }
}

impl Proposer for KirchheimProposer {
    fn propose(&mut self, p: &Matrix, _target: &dyn Distance) -> Vec<Candidate> {
        if p.norm() < 0.5 {
            let r1 = rank_one_part(p);
            let dir = if r1.norm() > 1e-12 { r1.scale(1.0 / r1.norm()) } else { Dyad::new(&[1.0, 0.0], &[1.0, 0.0]).expect("unit").to_matrix() };
            return vec![
                Candidate { direction: dir, scales: vec![0.5], bisect: true },
                Candidate { direction: -dir, scales: vec![0.5], bisect: true },
            ];
        }
        match self.step(p) {
            Ok((_, _, bound, dir)) => {
                let c = self.gamma * bound;
                vec![
                    Candidate { direction: dir, scales: vec![c], bisect: false },
                    Candidate { direction: -dir, scales: vec![c], bisect: false },
                ]
            }
            Err(_) => Vec::new(),
        }
    }

    fn score(&self, m: &Matrix, _target: &dyn Distance) -> f64 {
        -m.norm()
    }

    fn step_floor(&self) -> Option<f64> {
        self.floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::check_hi;
    use crate::sets::TargetSet;
    use crate::tol::REL_TOL;

    #[test]
    fn rank_one_pair_single_step() {
        let a = Matrix::diag(&[1.0, 1.0]);
        let b = Matrix::diag(&[1.0, -1.0]);
        let e = TargetSet::Finite(vec![a, b]);
        let xi = (a + b).scale(0.5);
        // Thin open neighborhood of the segment [a, b].
        let k = OpenSet::new(10.0, move |m| {
            let t = ((m.get(1, 1) + 1.0) / 2.0).clamp(0.0, 1.0);
            let on = b + (a - b).scale(t);
            0.05 - (*m - on).norm()
        });
        let mut prop = GenericProposer::new(2, 1);
        let path = walk(&xi, &k, &e, 1e-6, &mut prop, &WalkCaps::default()).unwrap();
        assert_eq!(path.len(), 1);
        assert!(path.final_distance < 1e-6);
        assert!(is_rank_one(&path.steps[0], REL_TOL));
        let chain = path_to_chain(&path);
        assert_eq!(chain.len(), 2);
        assert!(chain.barycenter().approx_eq(&xi, 1e-12));
        assert_eq!(chain.outside_mass(&e, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn start_inside_target_is_empty() {
        let e = TargetSet::Finite(vec![Matrix::identity(2)]);
        let path = walk(&Matrix::identity(2), &OpenSet::everything(), &e, 0.1, &mut GenericProposer::new(2, 0), &WalkCaps::default()).unwrap();
        assert!(path.is_empty());
        assert_eq!(path_to_chain(&path).len(), 1);
    }

    #[test]
    fn chain_weights_and_witness() {
        let d1 = Dyad::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap().to_matrix();
        let d2 = Dyad::new(&[1.0, 1.0], &[1.0, -1.0]).unwrap().to_matrix().scale(0.3);
        let path = WalkPath { start: Matrix::identity(2), steps: vec![d1, d2], margins: vec![1.0, 1.0], final_distance: 0.0 };
        let c = path_to_chain(&path);
        let w: Vec<f64> = c.atoms().iter().map(|a| a.weight).collect();
        assert_eq!(w, vec![0.5, 0.25, 0.25]);
        assert!(c.barycenter().approx_eq(&Matrix::identity(2), 1e-15));
        let wit = path_witness(&path);
        wit.verify(&c, &OpenSet::everything(), REL_TOL).unwrap();
        assert!(check_hi(&c, &OpenSet::everything(), REL_TOL).is_ok());
    }

    #[test]
    fn kirchheim_direction_examples() {
        let xi = Matrix::diag(&[1.0, 0.0]);
        let mu = Matrix::diag(&[0.2, 0.0]);
        let (j, bound, dir) = kirchheim_direction(&xi, &[mu], &[0.5]).unwrap();
        assert_eq!(j, 0);
        assert_eq!(bound, 0.5);
        assert_eq!(dir, xi - mu);
        assert_eq!(kirchheim_direction(&xi, &[mu], &[0.0]), Err(KirchheimError::Degenerate));
        // Ties go to the lowest index.
        let (j, _, _) = kirchheim_direction(&xi, &[mu, mu], &[0.2, 0.2]).unwrap();
        assert_eq!(j, 0);
    }

    #[test]
    fn interior_lp() {
        let v = vec![Matrix::zeros(2), Matrix::diag(&[1.0, 0.0]), Matrix::new2([[0.0, 1.0], [0.0, 0.0]]), Matrix::new2([[0.0, 0.0], [1.0, 0.0]]), Matrix::diag(&[0.0, 1.0])];
        assert!(full_dimensional(&v));
        let q = Matrix::new2([[0.1, 0.1], [0.1, 0.1]]);
        let (lam, t) = interior_coefficients(&q, &v).unwrap();
        assert!(t > 0.05);
        let back = v.iter().zip(&lam).fold(Matrix::zeros(2), |s, (m, l)| s + m.scale(*l));
        assert!(back.approx_eq(&q, 1e-12));
        assert!(interior_coefficients(&Matrix::diag(&[1.0, 1.0]), &v).is_none());
        let (_, t) = interior_coefficients(&Matrix::diag(&[0.5, 0.0]), &v).unwrap();
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn dictionary_is_rank_one() {
        for n in [2, 3] {
            let d = dyad_dictionary(n);
            assert_eq!(d.len(), 32);
            assert!(d.iter().all(|m| is_rank_one(m, REL_TOL) && (m.norm() - 1.0).abs() < 1e-12));
        }
    }
}
