//! Laminate chains `(λ_i, ξ_i)`, the recursive `H_I(U)` test with merge
//! witnesses, outside mass, and inner membership certificates for `Rco_f E`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::matcore::{is_rank_one, rank_one_defect, Matrix};
use crate::sets::{Distance, SetError};
use crate::tol::{HI_MAX_ATOMS, HI_NODE_BUDGET, WEIGHT_SUM_TOL};
use crate::walker::{self, Proposer, WalkCaps, WalkError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LaminateError {
    #[error("a laminate chain needs at least one atom")]
    Empty,
    #[error("weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("weights sum to {0}, not 1")]
    WeightSum(f64),
    #[error("atom matrices have mixed dimensions")]
    MixedDimensions,
    #[error("chain has {atoms} atoms, more than the cap of {cap}")]
    CapExceeded { atoms: usize, cap: usize },
    #[error("search budget of {0} nodes exhausted before deciding")]
    BudgetExceeded(usize),
    #[error("no merge order satisfies H_I(U)")]
    NoWitness,
    #[error("witness step {step} is invalid: {reason}")]
    BadWitness { step: usize, reason: &'static str },
    #[error("certificate search inconclusive: {0}")]
    Inconclusive(&'static str),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

/// Open set `U` given by a margin function (positive inside) and a bounding
/// radius: `ξ ∈ U` iff `margin(ξ) > 0` and `|ξ| < radius`.
#[derive(Clone)]
pub struct OpenSet {
    margin: Arc<dyn Fn(&Matrix) -> f64 + Send + Sync>,
    radius: f64,
}

impl fmt::Debug for OpenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenSet").field("radius", &self.radius).finish_non_exhaustive()
    }
}

impl OpenSet {
    pub fn new(radius: f64, margin: impl Fn(&Matrix) -> f64 + Send + Sync + 'static) -> Self {
        Self { margin: Arc::new(margin), radius }
    }

    /// Open set from a boolean test; the margin is ±1.
    pub fn from_test(radius: f64, test: impl Fn(&Matrix) -> bool + Send + Sync + 'static) -> Self {
        Self::new(radius, move |m| if test(m) { 1.0 } else { -1.0 })
    }

    /// Open Frobenius ball `B_r(center)`.
    pub fn ball(center: Matrix, r: f64) -> Self {
        Self::new(center.norm() + r, move |m| r - (*m - center).norm())
    }

    /// All of matrix space.
    pub fn everything() -> Self {
        Self::new(f64::INFINITY, |_| f64::INFINITY)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Signed margin; positive exactly on the set.
    pub fn margin(&self, m: &Matrix) -> f64 {
        (self.margin)(m).min(self.radius - m.norm())
    }

    pub fn contains(&self, m: &Matrix) -> bool {
        self.margin(m) > 0.0
    }

    /// Intersection with another open set.
    pub fn and(&self, other: &OpenSet) -> OpenSet {
        let (a, b) = (self.clone(), other.clone());
        OpenSet::new(self.radius.min(other.radius), move |m| a.margin(m).min(b.margin(m)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub matrix: Matrix,
}

/// Weighted matrices with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LaminateChain {
    atoms: Vec<Atom>,
}

impl LaminateChain {
    pub fn new(atoms: Vec<(f64, Matrix)>) -> Result<Self, LaminateError> {
        if atoms.is_empty() {
            return Err(LaminateError::Empty);
        }
        if let Some(&(w, _)) = atoms.iter().find(|(w, _)| !(*w > 0.0 && w.is_finite())) {
            return Err(LaminateError::NonPositiveWeight(w));
        }
        let n = atoms[0].1.n();
        if atoms.iter().any(|(_, m)| m.n() != n) {
            return Err(LaminateError::MixedDimensions);
        }
        let s: f64 = atoms.iter().map(|a| a.0).sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(LaminateError::WeightSum(s));
        }
        Ok(Self { atoms: atoms.into_iter().map(|(weight, matrix)| Atom { weight, matrix }).collect() })
    }

    pub fn singleton(m: Matrix) -> Self {
        Self { atoms: alloc::vec![Atom { weight: 1.0, matrix: m }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn n(&self) -> usize {
        self.atoms[0].matrix.n()
    }

    /// `Σ λ_i ξ_i`.
    pub fn barycenter(&self) -> Matrix {
        let mut s = Matrix::zeros(self.n());
        for a in &self.atoms {
            s += a.matrix.scale(a.weight);
        }
        s
    }

    /// Total weight of atoms with `dist(ξ_i; E) >= ε`.
    pub fn outside_mass(&self, e: &dyn Distance, eps: f64) -> Result<f64, SetError> {
        let mut m = 0.0;
        for a in &self.atoms {
            if e.distance_to(&a.matrix)? >= eps {
                m += a.weight;
            }
        }
        Ok(m)
    }

    /// Runs the `H_I(U)` search; see [`check_hi`].
    pub fn check_hi(&self, u: &OpenSet, tol: f64) -> Result<MergeWitness, LaminateError> {
        check_hi(self, u, tol)
    }
}

/// One merge: atoms `i < j` of the current list are replaced by their
/// weighted mean at position `i`, and `j` is removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergeWitness {
    pub steps: Vec<MergeStep>,
}

impl MergeWitness {
    /// Replays the merges and returns the single remaining atom.
    pub fn replay(&self, chain: &LaminateChain) -> Result<Atom, LaminateError> {
        let mut cur: Vec<Atom> = chain.atoms.clone();
        for (k, s) in self.steps.iter().enumerate() {
            if !(s.i < s.j && s.j < cur.len()) {
                return Err(LaminateError::BadWitness { step: k, reason: "index out of range" });
            }
            let (a, b) = (cur[s.i], cur[s.j]);
            cur[s.i] = merge(&a, &b);
            cur.remove(s.j);
        }
        if cur.len() != 1 {
            return Err(LaminateError::BadWitness { step: self.steps.len(), reason: "more than one atom remains" });
        }
        Ok(cur[0])
    }

    /// Checks every condition of `H_I(U)` along the stored order.
    pub fn verify(&self, chain: &LaminateChain, u: &OpenSet, tol: f64) -> Result<(), LaminateError> {
        let mut cur: Vec<Atom> = chain.atoms.clone();
        if cur.iter().any(|a| !u.contains(&a.matrix)) {
            return Err(LaminateError::BadWitness { step: 0, reason: "atom outside U" });
        }
        for (k, s) in self.steps.iter().enumerate() {
            if !(s.i < s.j && s.j < cur.len()) {
                return Err(LaminateError::BadWitness { step: k, reason: "index out of range" });
            }
            let (a, b) = (cur[s.i], cur[s.j]);
            if !is_rank_one(&(a.matrix - b.matrix), tol) {
                return Err(LaminateError::BadWitness { step: k, reason: "difference is not rank one" });
            }
            let m = merge(&a, &b);
            if cur.len() > 2 && !u.contains(&m.matrix) {
                return Err(LaminateError::BadWitness { step: k, reason: "merged atom outside U" });
            }
            cur[s.i] = m;
            cur.remove(s.j);
        }
        if cur.len() != 1 {
            return Err(LaminateError::BadWitness { step: self.steps.len(), reason: "more than one atom remains" });
        }
        Ok(())
    }
}

fn merge(a: &Atom, b: &Atom) -> Atom {
    let w = a.weight + b.weight;
    Atom { weight: w, matrix: (a.matrix.scale(a.weight) + b.matrix.scale(b.weight)).scale(1.0 / w) }
}

struct Search<'a> {
    chain: &'a LaminateChain,
    u: &'a OpenSet,
    tol: f64,
    groups: BTreeMap<u64, Option<Atom>>,
    failed: BTreeSet<Vec<u64>>,
    nodes: usize,
}

impl Search<'_> {
    /// Merged atom of a group of original indices, if it lies in `U`.
    fn group(&mut self, mask: u64) -> Option<Atom> {
        if let Some(g) = self.groups.get(&mask) {
            return *g;
        }
        let atom = self.raw_group(mask);
        let g = self.u.contains(&atom.matrix).then_some(atom);
        self.groups.insert(mask, g);
        g
    }

    fn raw_group(&self, mask: u64) -> Atom {
        let n = self.chain.n();
        let mut w = 0.0;
        let mut m = Matrix::zeros(n);
        for (i, a) in self.chain.atoms.iter().enumerate() {
            if mask >> i & 1 == 1 {
                w += a.weight;
                m += a.matrix.scale(a.weight);
            }
        }
        Atom { weight: w, matrix: m.scale(1.0 / w) }
    }

    fn dfs(&mut self, cur: &mut Vec<u64>, steps: &mut Vec<MergeStep>) -> Result<bool, LaminateError> {
        self.nodes += 1;
        if self.nodes > HI_NODE_BUDGET {
            return Err(LaminateError::BudgetExceeded(HI_NODE_BUDGET));
        }
        let mut key = cur.clone();
        key.sort_unstable();
        if self.failed.contains(&key) {
            return Ok(false);
        }
        // Candidate pairs: rank-one differences, ordered by defect then weight.
        let mut pairs = Vec::new();
        for i in 0..cur.len() {
            for j in i + 1..cur.len() {
                let (a, b) = (self.group(cur[i]).expect("in U"), self.group(cur[j]).expect("in U"));
                let d = a.matrix - b.matrix;
                if is_rank_one(&d, self.tol) {
                    pairs.push((rank_one_defect(&d), a.weight + b.weight, i, j));
                }
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)).then((x.2, x.3).cmp(&(y.2, y.3))));
        for (_, _, i, j) in pairs {
            let mask = cur[i] | cur[j];
            let last = cur.len() == 2;
            let merged = if last { Some(self.raw_group(mask)) } else { self.group(mask) };
            let Some(m) = merged else { continue };
            steps.push(MergeStep { i, j, weight: m.weight, matrix: m.matrix });
            if last {
                return Ok(true);
            }
            let (ci, cj) = (cur[i], cur[j]);
            cur[i] = mask;
            cur.remove(j);
            if self.dfs(cur, steps)? {
                return Ok(true);
            }
            cur.insert(j, cj);
            cur[i] = ci;
            steps.pop();
        }
        self.failed.insert(key);
        Ok(false)
    }
}

/// Searches for a merge order witnessing `H_I(U)`: every atom lies in `U`,
/// each merge joins two atoms with a rank-one difference, and every merged
/// atom except the last lies in `U`.
pub fn check_hi(chain: &LaminateChain, u: &OpenSet, tol: f64) -> Result<MergeWitness, LaminateError> {
    let count = chain.len();
    if count > HI_MAX_ATOMS {
        return Err(LaminateError::CapExceeded { atoms: count, cap: HI_MAX_ATOMS });
    }
    let mut s = Search { chain, u, tol, groups: BTreeMap::new(), failed: BTreeSet::new(), nodes: 0 };
    for i in 0..count {
        if s.group(1u64 << i).is_none() {
            return Err(LaminateError::NoWitness);
        }
    }
    if count == 1 {
        return Ok(MergeWitness::default());
    }
    let mut cur: Vec<u64> = (0..count).map(|i| 1u64 << i).collect();
    let mut steps = Vec::new();
    if s.dfs(&mut cur, &mut steps)? {
        Ok(MergeWitness { steps })
    } else {
        Err(LaminateError::NoWitness)
    }
}

/// Budget for [`rcof_certificate`].
#[derive(Debug, Clone, Copy)]
pub struct CertificateBudget {
    pub walk: WalkCaps,
    /// Refinement sweeps after the first walk.
    pub sweeps: usize,
    /// Largest chain length kept.
    pub max_atoms: usize,
}

impl Default for CertificateBudget {
    fn default() -> Self {
        Self { walk: WalkCaps::default(), sweeps: 60, max_atoms: 4096 }
    }
}

/// Inner certificate for `ξ ∈ Rco_f E`: a chain with barycenter `ξ`, built
/// from rank-one walks inside `U`, whose outside mass is below `ε`.
///
/// Walk targets are measured against `e`; the walks stop inside `B_ε(E)`.
/// The `H_I(U)` property holds by construction (each walk splits an atom
/// along its segments); it is not re-verified here because the refined
/// chains can be long. Failure is inconclusive.
pub fn rcof_certificate(
    xi: &Matrix,
    e: &dyn Distance,
    u: &OpenSet,
    eps: f64,
    proposer: &mut dyn Proposer,
    budget: &CertificateBudget,
) -> Result<LaminateChain, LaminateError> {
    if e.distance_to(xi)? < eps {
        if !u.contains(xi) {
            return Err(LaminateError::Inconclusive("start lies outside U"));
        }
        return Ok(LaminateChain::singleton(*xi));
    }
    let path = walker::walk(xi, u, e, eps, proposer, &budget.walk)?;
    let chain = walker::path_to_chain(&path);
    let refined = walker::refine_chain(&chain, e, u, eps, proposer, &walker::RefineCaps {
        walk: budget.walk,
        sweeps: budget.sweeps,
        max_atoms: budget.max_atoms,
    })?;
    if refined.chain.outside_mass(e, eps)? < eps {
        Ok(refined.chain)
    } else {
        Err(LaminateError::Inconclusive("outside mass still at least epsilon"))
    }
}
