//! Constructive relaxation: sawtooth oscillations between rank-one
//! connected gradients, nested realization of laminate chains, one
//! relaxation step toward `E`, and a refinement loop.
//!
//! All constructions cut convex polygons by half-planes. A cell of the
//! output keeps the exact gradient of the laminate atom it realizes, so
//! `Du = ξ_i` on `Ω^i` holds bit for bit; only auxiliary (frame) cells
//! carry computed gradients.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use thiserror::Error;

use crate::laminate::{check_hi, rcof_certificate, CertificateBudget, LaminateChain, LaminateError, MergeWitness, OpenSet};
use crate::lp;
use crate::matcore::{rsd_decompose, Matrix};
use crate::pam::{polygon_area, Affine, Domain, PamError, PiecewiseAffineMap, Point};
use crate::rng;
use crate::sets::{Distance, SetError, TargetSet};
use crate::tol::REL_TOL;
use crate::walker::Proposer;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("A - B is not rank one (defect {0})")]
    NotRankOne(f64),
    #[error("weight t = {0} is outside [0, 1]")]
    BadWeight(f64),
    #[error("base gradient differs from tA + (1-t)B by {0}")]
    BaseGradient(f64),
    #[error("auxiliary directions do not contain 0 in the interior of their hull")]
    Auxiliary,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("construction needs more than {0} cells")]
    CellCap(usize),
    #[error("gradient {0:?} lies outside U")]
    OutsideU(Matrix),
    #[error("witness does not match the chain: {0}")]
    Witness(&'static str),
    #[error("schedule is not strictly decreasing to 0")]
    Schedule,
    #[error("precondition failed: {0}")]
    Precondition(&'static str),
    #[error("decomposition failed: {0}")]
    Decomposition(LaminateError),
    #[error(transparent)]
    Pam(#[from] PamError),
    #[error(transparent)]
    Set(#[from] SetError),
}

impl From<LaminateError> for SolveError {
    fn from(e: LaminateError) -> Self {
        Self::Decomposition(e)
    }
}

/// Hard cap on polygon pieces produced by one construction.
pub const DEFAULT_MAX_CELLS: usize = 4_000_000;

// ---------------------------------------------------------------------------
// convex polygon helpers

/// Part of a convex polygon with `⟨n, x⟩ ≤ c`.
fn clip(poly: &[Point], n: [f64; 2], c: f64) -> Vec<Point> {
    let m = poly.len();
    let mut out = Vec::with_capacity(m + 1);
    for k in 0..m {
        let (p, q) = (poly[k], poly[(k + 1) % m]);
        let (fp, fq) = (n[0] * p[0] + n[1] * p[1] - c, n[0] * q[0] + n[1] * q[1] - c);
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let s = fp / (fp - fq);
            out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
        }
    }
    out
}

fn nonempty(poly: &[Point]) -> bool {
    poly.len() >= 3 && polygon_area(poly) > 0.0
}

/// Drops repeated and collinear vertices.
fn simplify(poly: &[Point]) -> Vec<Point> {
    let mut v: Vec<Point> = Vec::with_capacity(poly.len());
    for &p in poly {
        if v.last() != Some(&p) {
            v.push(p);
        }
    }
    while v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    let mut changed = true;
    while changed && v.len() >= 3 {
        changed = false;
        let m = v.len();
        for k in 0..m {
            let (a, b, c) = (v[(k + m - 1) % m], v[k], v[(k + 1) % m]);
            if crate::pam::cross(a, b, c) == 0.0 {
                v.remove(k);
                changed = true;
                break;
            }
        }
    }
    v
}

fn perimeter(poly: &[Point]) -> f64 {
    let m = poly.len();
    (0..m).map(|k| dist(poly[k], poly[(k + 1) % m])).sum()
}

fn dist(p: Point, q: Point) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn dot(a: [f64; 2], b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `a ⊗ b` for plane vectors.
fn dyad(a: [f64; 2], b: [f64; 2]) -> Matrix {
    Matrix::new2([[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]])
}

/// Balanced factorization `D = a ⊗ b` with `|a| = |b|` of the rank-one part
/// of `D`, plus the rank defect.
pub fn rank_one_factor(d: &Matrix) -> ([f64; 2], [f64; 2], f64) {
    let (r, sv, s) = rsd_decompose(d);
    let l = sv.largest().sqrt();
    ([l * r.get(0, 1), l * r.get(1, 1)], [l * s.get(1, 0), l * s.get(1, 1)], sv.values()[0])
}

/// `0 ∈ int co{v_i}` in the plane: a strictly positive combination of the
/// vectors vanishes and they span R².
pub fn zero_in_interior(vs: &[[f64; 2]]) -> bool {
    let k = vs.len();
    if k < 3 {
        return false;
    }
    let spans = vs.iter().any(|p| vs.iter().any(|q| (p[0] * q[1] - p[1] * q[0]).abs() > 1e-12 * (dot(*p, *p) * dot(*q, *q)).sqrt()));
    if !spans {
        return false;
    }
    // variables μ_1..μ_k, t, s_1..s_k >= 0; maximize t
    let nv = 2 * k + 1;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for c in 0..2 {
        let mut row = vec![0.0; nv];
        for (i, v) in vs.iter().enumerate() {
            row[i] = v[c];
        }
        a.push(row);
        b.push(0.0);
    }
    let mut row = vec![0.0; nv];
    row[..k].iter_mut().for_each(|x| *x = 1.0);
    a.push(row);
    b.push(1.0);
    for i in 0..k {
        let mut row = vec![0.0; nv];
        row[i] = 1.0;
        row[k] = -1.0;
        row[k + 1 + i] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    let mut c = vec![0.0; nv];
    c[k] = 1.0;
    let s = lp::maximize(&a, &b, &c);
    s.status == lp::LpStatus::Optimal && s.objective > 1e-9
}

// ---------------------------------------------------------------------------
// oscillation

/// What a piece of a construction realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// Gradient `A`.
    A,
    /// Gradient `B`.
    B,
    /// Frame cell with auxiliary gradient `Dφ + a ⊗ b_i`.
    Aux(usize),
}

#[derive(Debug, Clone)]
struct Piece {
    poly: Vec<Point>,
    map: Affine,
    label: Label,
}

/// Sizes chosen for one sawtooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SawtoothGeometry {
    /// Period in `τ = ⟨b, x⟩`.
    pub period: f64,
    /// Amplitude of the profile `h` (so `|u - φ| ≤ |a|·amplitude`).
    pub amplitude: f64,
    /// Pyramid slope `s`; auxiliary vectors are `-s n_i`.
    pub slope: f64,
    /// Width of the boundary frame.
    pub frame_width: f64,
}

/// Sawtooth between `A` and `B` on a convex polygon, pinned to `φ` on the
/// boundary. `sup_eps` bounds `|u - φ|`, `meas_eps` bounds the measure
/// deviations, `aux` is `|a ⊗ b_i|`.
#[allow(clippy::too_many_arguments)]
fn oscillate_poly(
    poly: &[Point],
    a_mat: &Matrix,
    b_mat: &Matrix,
    t: f64,
    phi: &Affine,
    sup_eps: f64,
    meas_eps: f64,
    aux: f64,
    max_cells: usize,
    out: &mut Vec<Piece>,
) -> Result<Option<SawtoothGeometry>, SolveError> {
    let poly = simplify(poly);
    if !nonempty(&poly) {
        return Ok(None);
    }
    let (a, b, _) = rank_one_factor(&(*a_mat - *b_mat));
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if t <= 0.0 || t >= 1.0 || na == 0.0 || nb == 0.0 {
        let (label, g) = if t >= 1.0 { (Label::A, *a_mat) } else { (Label::B, *b_mat) };
        // the gradient equals A (or B) up to rounding; keep φ's offset so the
        // boundary stays exact
        let map = if na == 0.0 || nb == 0.0 { *phi } else { Affine::new(g, phi.offset) };
        out.push(Piece { poly, map, label });
        return Ok(None);
    }
    let m = poly.len();
    let normals: Vec<[f64; 2]> = (0..m)
        .map(|k| {
            let (p, q) = (poly[k], poly[(k + 1) % m]);
            let l = dist(p, q);
            [(q[1] - p[1]) / l, -(q[0] - p[0]) / l]
        })
        .collect();
    // d_k(x) = c_k - ⟨n_k, x⟩ is the distance to edge line k (inside: positive)
    let offs: Vec<f64> = (0..m).map(|k| dot(normals[k], poly[k])).collect();
    let area = polygon_area(&poly);
    let perim = perimeter(&poly);
    // chords across b bound the area of one partial period slab
    let across = {
        let (lo, hi) = poly.iter().map(|p| (b[0] * p[1] - b[1] * p[0]) / nb).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        hi - lo
    };
    let s = aux / na;
    let tt = t * (1.0 - t);
    let h_max = (0.9 * sup_eps / na).min(0.9 * 0.5 * meas_eps * s / perim);
    let period = (h_max / tt).min(0.9 * 0.5 * meas_eps * nb / (4.0 * across));
    let amp = tt * period;
    let (tau_min, tau_max) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(dot(b, *p)), hi.max(dot(b, *p))));
    let periods = ((tau_max - tau_min) / period).ceil();
    if !(periods.is_finite()) || periods * 4.0 * m as f64 > max_cells as f64 || out.len() as f64 + periods * 2.0 > max_cells as f64 {
        return Err(SolveError::CellCap(max_cells));
    }
    let _ = area;
    // pyramid regions: where edge k is the closest edge line
    let regions: Vec<Vec<Point>> = (0..m)
        .map(|i| {
            let mut r = poly.clone();
            for k in 0..m {
                if k != i && nonempty(&r) {
                    r = clip(&r, [normals[k][0] - normals[i][0], normals[k][1] - normals[i][1]], offs[k] - offs[i]);
                }
            }
            r
        })
        .collect();
    let rho = |x: Point| (0..m).map(|k| offs[k] - dot(normals[k], x)).fold(f64::INFINITY, f64::min) * s;
    let base_grad = phi.gradient;
    let aux_maps: Vec<Affine> = (0..m)
        .map(|k| {
            // w = s (c_k - ⟨n_k, x⟩)
            let g = base_grad + dyad(a, [-s * normals[k][0], -s * normals[k][1]]);
            Affine::new(g, [phi.offset[0] + a[0] * s * offs[k], phi.offset[1] + a[1] * s * offs[k]])
        })
        .collect();
    let n_per = periods as usize;
    for p in 0..n_per {
        let start = tau_min + p as f64 * period;
        let mid = start + t * period;
        let end = start + period;
        for (lo, hi, rising) in [(start, mid, true), (mid, end, false)] {
            if lo >= tau_max {
                break;
            }
            // h = σ τ + c_h on this strip
            let (sigma, c_h) = if rising { (1.0 - t, -(1.0 - t) * start) } else { (-t, t * end) };
            let (label, g) = if rising { (Label::A, *a_mat) } else { (Label::B, *b_mat) };
            let core_map = Affine::new(g, [phi.offset[0] + a[0] * c_h, phi.offset[1] + a[1] * c_h]);
            let strip = clip(&clip(&poly, [-b[0], -b[1]], -lo), b, hi);
            if !nonempty(&strip) {
                continue;
            }
            let h = |x: Point| sigma * dot(b, x) + c_h;
            if strip.iter().all(|&v| rho(v) - h(v) >= 0.0) {
                out.push(Piece { poly: strip, map: core_map, label });
                continue;
            }
            // h ≤ ρ_k  ⇔  ⟨σ b + s n_k, x⟩ ≤ s c_k - c_h; the core is the
            // intersection over k, one convex piece
            let line = |k: usize| ([sigma * b[0] + s * normals[k][0], sigma * b[1] + s * normals[k][1]], s * offs[k] - c_h);
            let mut core = strip.clone();
            for k in 0..m {
                if nonempty(&core) {
                    let (ln, lc) = line(k);
                    core = clip(&core, ln, lc);
                }
            }
            if nonempty(&core) {
                out.push(Piece { poly: core, map: core_map, label });
            }
            for (i, reg) in regions.iter().enumerate() {
                if !nonempty(reg) {
                    continue;
                }
                let q = clip(&clip(reg, [-b[0], -b[1]], -lo), b, hi);
                if !nonempty(&q) {
                    continue;
                }
                let (ln, lc) = line(i);
                let q2 = clip(&q, [-ln[0], -ln[1]], -lc);
                if nonempty(&q2) {
                    out.push(Piece { poly: q2, map: aux_maps[i], label: Label::Aux(i) });
                }
            }
            if out.len() > max_cells {
                return Err(SolveError::CellCap(max_cells));
            }
        }
    }
    Ok(Some(SawtoothGeometry { period, amplitude: amp, slope: s, frame_width: amp / s }))
}

fn fan(poly: &[Point]) -> impl Iterator<Item = [Point; 3]> + '_ {
    (1..poly.len() - 1).map(move |k| [poly[0], poly[k], poly[k + 1]])
}

/// Triangulates pieces; returns the map and, per piece, its cell indices.
fn assemble(boundary: &[Point], pieces: &[Piece]) -> Result<(PiecewiseAffineMap, Vec<core::ops::Range<usize>>), SolveError> {
    let mut cells = Vec::with_capacity(pieces.len() * 2);
    let mut ranges = Vec::with_capacity(pieces.len());
    for p in pieces {
        let s = cells.len();
        for tri in fan(&p.poly) {
            if crate::pam::triangle_area(&tri) > 0.0 {
                cells.push((tri, p.map));
            }
        }
        ranges.push(s..cells.len());
    }
    Ok((PiecewiseAffineMap::from_cells(boundary.to_vec(), &cells)?, ranges))
}

/// Data of one oscillation.
#[derive(Debug, Clone)]
pub struct OscillationSpec {
    pub a: Matrix,
    pub b: Matrix,
    pub t: f64,
    pub eps: f64,
    /// `|a ⊗ b_i|` for the frame gradients; `eps` when small auxiliaries
    /// are wanted.
    pub aux: f64,
    pub phi: Affine,
}

impl OscillationSpec {
    /// `φ(x) = (tA + (1-t)B) x + offset`, auxiliaries of size `eps`.
    pub fn new(a: Matrix, b: Matrix, t: f64, eps: f64, offset: [f64; 2]) -> Result<Self, SolveError> {
        let phi = Affine::new(a.scale(t) + b.scale(1.0 - t), offset);
        let s = Self { a, b, t, eps, aux: eps, phi };
        s.validate()?;
        Ok(s)
    }

    pub fn with_aux(mut self, aux: f64) -> Self {
        self.aux = aux;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(SolveError::BadWeight(self.t));
        }
        if !(self.eps > 0.0) || !(self.aux > 0.0) {
            return Err(SolveError::BadTolerance(self.eps.min(self.aux)));
        }
        let d = self.a - self.b;
        let (_, _, defect) = rank_one_factor(&d);
        if defect > REL_TOL * d.norm().max(1.0) {
            return Err(SolveError::NotRankOne(defect));
        }
        let base = self.a.scale(self.t) + self.b.scale(1.0 - self.t);
        let off = (base - self.phi.gradient).norm();
        if off > REL_TOL * base.norm().max(1.0) {
            return Err(SolveError::BaseGradient(off));
        }
        Ok(())
    }
}

/// Output of [`oscillate`].
#[derive(Debug, Clone)]
pub struct Oscillation {
    pub map: PiecewiseAffineMap,
    pub omega_a: Vec<usize>,
    pub omega_b: Vec<usize>,
    pub aux: Vec<usize>,
    /// Geometry per convex part (one part for convex domains).
    pub geometry: Vec<SawtoothGeometry>,
}

/// Parts a construction runs on: the polygon itself when convex, else the
/// triangles of the domain.
fn convex_parts(domain: &Domain) -> Vec<Vec<Point>> {
    if domain.is_convex() {
        vec![domain.boundary().to_vec()]
    } else {
        domain.cells().map(|t| t.to_vec()).collect()
    }
}

/// Sawtooth map with `Du ∈ {A, B} ∪ {Dφ + a ⊗ b_i}`, `u = φ` on `∂Ω`.
pub fn oscillate(spec: &OscillationSpec, domain: &Domain) -> Result<Oscillation, SolveError> {
    spec.validate()?;
    let total = domain.area();
    let mut pieces = Vec::new();
    let mut geometry = Vec::new();
    for part in convex_parts(domain) {
        let normals: Vec<[f64; 2]> = edge_normals(&simplify(&part));
        let (_, bv, _) = rank_one_factor(&(spec.a - spec.b));
        let mut dirs = vec![bv, [-bv[0], -bv[1]]];
        dirs.extend(normals.iter().map(|n| [-n[0], -n[1]]));
        if !zero_in_interior(&dirs) && spec.t > 0.0 && spec.t < 1.0 {
            return Err(SolveError::Auxiliary);
        }
        let meas = spec.eps * total.min(1.0) * polygon_area(&part) / total;
        if let Some(g) = oscillate_poly(&part, &spec.a, &spec.b, spec.t, &spec.phi, spec.eps, meas, spec.aux, DEFAULT_MAX_CELLS, &mut pieces)? {
            geometry.push(g);
        }
    }
    let (map, ranges) = assemble(domain.boundary(), &pieces)?;
    let (mut omega_a, mut omega_b, mut aux) = (Vec::new(), Vec::new(), Vec::new());
    for (p, r) in pieces.iter().zip(ranges) {
        let dst = match p.label {
            Label::A => &mut omega_a,
            Label::B => &mut omega_b,
            Label::Aux(_) => &mut aux,
        };
        dst.extend(r);
    }
    Ok(Oscillation { map, omega_a, omega_b, aux, geometry })
}

fn edge_normals(poly: &[Point]) -> Vec<[f64; 2]> {
    let m = poly.len();
    (0..m)
        .map(|k| {
            let (p, q) = (poly[k], poly[(k + 1) % m]);
            let l = dist(p, q);
            [(q[1] - p[1]) / l, -(q[0] - p[0]) / l]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// laminate realization

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split { x: usize, y: usize, t: f64 },
}

struct Tree {
    nodes: Vec<Node>,
    matrix: Vec<Matrix>,
    root: usize,
}

fn build_tree(chain: &LaminateChain, witness: &MergeWitness) -> Result<Tree, SolveError> {
    let atoms = chain.atoms();
    let mut nodes: Vec<Node> = (0..atoms.len()).map(Node::Leaf).collect();
    let mut matrix: Vec<Matrix> = atoms.iter().map(|a| a.matrix).collect();
    let mut weight: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
    let mut cur: Vec<usize> = (0..atoms.len()).collect();
    for s in &witness.steps {
        if !(s.i < s.j && s.j < cur.len()) {
            return Err(SolveError::Witness("merge index out of range"));
        }
        let (x, y) = (cur[s.i], cur[s.j]);
        let w = weight[x] + weight[y];
        let t = weight[x] / w;
        nodes.push(Node::Split { x, y, t });
        matrix.push(matrix[x].scale(t) + matrix[y].scale(1.0 - t));
        weight.push(w);
        cur[s.i] = nodes.len() - 1;
        cur.remove(s.j);
    }
    if cur.len() != 1 {
        return Err(SolveError::Witness("more than one atom remains"));
    }
    Ok(Tree { nodes, matrix, root: cur[0] })
}

/// Largest auxiliary size `≤ cap` (halving) whose frame gradients all lie
/// in `U`.
fn admissible_aux(phi: &Matrix, a_mat: &Matrix, b_mat: &Matrix, normals: &[[f64; 2]], u: &OpenSet, cap: f64) -> Option<f64> {
    let (a, _, _) = rank_one_factor(&(*a_mat - *b_mat));
    let na = dot(a, a).sqrt();
    if na == 0.0 {
        return Some(cap);
    }
    let mut r = cap;
    for _ in 0..40 {
        let s = r / na;
        if normals.iter().all(|n| u.contains(&(*phi + dyad(a, [-s * n[0], -s * n[1]])))) {
            return Some(r);
        }
        r *= 0.5;
    }
    None
}

/// A piece and the atom it realizes (`None` for frame pieces).
type Tagged = (Piece, Option<usize>);

struct Realizer<'a> {
    tree: &'a Tree,
    u: &'a OpenSet,
    max_cells: usize,
    aux_cap: f64,
}

impl Realizer<'_> {
    /// Realizes `node` on a convex polygon with boundary data `phi`.
    /// `eps` is this level's sup budget, `rel` its relative measure budget.
    fn run(&self, node: usize, poly: Vec<Point>, phi: Affine, eps: f64, rel: f64, out: &mut Vec<Tagged>) -> Result<(), SolveError> {
        match self.tree.nodes[node] {
            Node::Leaf(i) => {
                out.push((Piece { poly, map: phi, label: Label::A }, Some(i)));
                Ok(())
            }
            Node::Split { x, y, t } => {
                let (am, bm) = (self.tree.matrix[x], self.tree.matrix[y]);
                let normals = edge_normals(&simplify(&poly));
                let cap = self.aux_cap.min((am - bm).norm());
                let aux = admissible_aux(&phi.gradient, &am, &bm, &normals, self.u, cap).ok_or(SolveError::OutsideU(phi.gradient))?;
                let mut local = Vec::new();
                let area = polygon_area(&poly);
                oscillate_poly(&poly, &am, &bm, t, &phi, eps / 2.0, rel / 2.0 * area, aux, self.max_cells.saturating_sub(out.len()), &mut local)?;
                for p in local {
                    match p.label {
                        Label::A => self.run(x, p.poly, p.map, eps / 2.0, rel / 2.0, out)?,
                        Label::B => self.run(y, p.poly, p.map, eps / 2.0, rel / 2.0, out)?,
                        Label::Aux(_) => out.push((p, None)),
                    }
                    if out.len() > self.max_cells {
                        return Err(SolveError::CellCap(self.max_cells));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Output of [`realize_laminate`].
#[derive(Debug, Clone)]
pub struct Realization {
    pub map: PiecewiseAffineMap,
    /// Cells carrying atom `i`'s gradient.
    pub omega: Vec<Vec<usize>>,
    /// Frame cells.
    pub aux: Vec<usize>,
    /// Depth of the merge tree.
    pub depth: usize,
}

/// Realizes a certified chain on `Ω` with boundary data
/// `u_ξ(x) = ξ x + offset`, `ξ` the barycenter. Each tree level spends
/// half of the remaining budget.
pub fn realize_laminate(
    chain: &LaminateChain,
    witness: &MergeWitness,
    u: &OpenSet,
    domain: &Domain,
    offset: [f64; 2],
    eps: f64,
) -> Result<Realization, SolveError> {
    realize_with(chain, witness, u, domain, offset, eps, f64::INFINITY, DEFAULT_MAX_CELLS)
}

#[allow(clippy::too_many_arguments)]
fn realize_pieces(
    chain: &LaminateChain,
    witness: &MergeWitness,
    u: &OpenSet,
    parts: Vec<Vec<Point>>,
    total: f64,
    phi: Affine,
    eps: f64,
    aux_cap: f64,
    max_cells: usize,
) -> Result<(Vec<Tagged>, usize), SolveError> {
    if !(eps > 0.0) {
        return Err(SolveError::BadTolerance(eps));
    }
    if chain.n() != 2 {
        return Err(SolveError::Precondition("realization needs 2x2 matrices"));
    }
    let tree = build_tree(chain, witness)?;
    if !tree.matrix[tree.root].approx_eq(&phi.gradient, 1e-9 * phi.gradient.norm().max(1.0)) {
        return Err(SolveError::Witness("tree root differs from the boundary gradient"));
    }
    let r = Realizer { tree: &tree, u, max_cells, aux_cap };
    let rel = eps * total.min(1.0) / total;
    let mut out = Vec::new();
    let root_phi = Affine::new(tree.matrix[tree.root], phi.offset);
    for part in parts {
        r.run(tree.root, part, root_phi, eps, rel, &mut out)?;
    }
    Ok((out, depth(&tree, tree.root)))
}

#[allow(clippy::too_many_arguments)]
fn realize_with(
    chain: &LaminateChain,
    witness: &MergeWitness,
    u: &OpenSet,
    domain: &Domain,
    offset: [f64; 2],
    eps: f64,
    aux_cap: f64,
    max_cells: usize,
) -> Result<Realization, SolveError> {
    let phi = Affine::new(chain.barycenter(), offset);
    let (out, depth) = realize_pieces(chain, witness, u, convex_parts(domain), domain.area(), phi, eps, aux_cap, max_cells)?;
    let pieces: Vec<Piece> = out.iter().map(|p| p.0.clone()).collect();
    let (map, ranges) = assemble(domain.boundary(), &pieces)?;
    let mut omega = vec![Vec::new(); chain.len()];
    let mut aux = Vec::new();
    for ((_, atom), r) in out.iter().zip(ranges) {
        match atom {
            Some(i) => omega[*i].extend(r),
            None => aux.extend(r),
        }
    }
    Ok(Realization { map, omega, aux, depth })
}

fn depth(tree: &Tree, node: usize) -> usize {
    match tree.nodes[node] {
        Node::Leaf(_) => 0,
        Node::Split { x, y, .. } => 1 + depth(tree, x).max(depth(tree, y)),
    }
}

// ---------------------------------------------------------------------------
// relaxation step

/// `1.1 · max dist(η, E)` over random `η ∈ int K`, drawn uniformly from the
/// cube `[-R, R]^{n²}` (`R` the radius of `int K`) by rejection. Returns the
/// estimate and the number of accepted samples.
pub fn estimate_c(e: &dyn Distance, int_k: &OpenSet, n: usize, samples: usize, seed: u64) -> Result<(f64, usize), SolveError> {
    let mut r = rng::seeded(seed);
    let radius = int_k.radius();
    if !radius.is_finite() {
        return Err(SolveError::Precondition("int K needs a finite radius"));
    }
    let mut best = 0.0f64;
    let mut accepted = 0;
    let mut tries = 0usize;
    while accepted < samples && tries < samples.saturating_mul(1000) {
        tries += 1;
        let m = rng::uniform_matrix(&mut r, n, -radius, radius);
        if int_k.contains(&m) {
            accepted += 1;
            best = best.max(e.distance_to(&m)?);
        }
    }
    if accepted == 0 {
        return Err(SolveError::Precondition("no sample landed in int K"));
    }
    Ok((1.1 * best, accepted))
}

/// Chain and merge order for a gradient.
pub trait Decomposer {
    /// Decomposes `xi` into atoms within `delta` of the targets.
    fn decompose(&mut self, xi: &Matrix, delta: f64) -> Result<(LaminateChain, MergeWitness), SolveError>;
}

/// Walker-backed decomposition toward `E_δ` (or `E` itself when no family
/// is given), certified by the `H_I(U)` search.
pub struct WalkerDecomposer<'a> {
    pub family: Option<&'a dyn Fn(f64) -> Result<TargetSet, SolveError>>,
    pub e: TargetSet,
    pub int_k: OpenSet,
    pub proposer: &'a mut dyn Proposer,
    pub budget: CertificateBudget,
}

impl Decomposer for WalkerDecomposer<'_> {
    fn decompose(&mut self, xi: &Matrix, delta: f64) -> Result<(LaminateChain, MergeWitness), SolveError> {
        let target = match self.family {
            Some(f) => f(delta)?,
            None => self.e.clone(),
        };
        let chain = rcof_certificate(xi, &target, &self.int_k, delta, self.proposer, &self.budget)?;
        let witness = check_hi(&chain, &self.int_k, REL_TOL)?;
        Ok((chain, witness))
    }
}

#[derive(Debug, Clone)]
pub struct RelaxReport {
    pub map: PiecewiseAffineMap,
    pub chain: LaminateChain,
    pub delta: f64,
    /// Sampled `c = 1.1 · sup_{int K} dist(·, E)`.
    pub c: f64,
    pub dist_integral: f64,
    /// `ε (meas Ω + 3c · max(1, meas Ω))`.
    pub bound: f64,
    /// Cells whose gradient is not in `int K`.
    pub outside_k: usize,
    /// `‖u - u_ξ‖_∞`.
    pub sup_diff: f64,
}

/// One relaxation step: decompose `ξ` toward `E_δ` and realize the chain
/// on `Ω` with `u = u_ξ` on `∂Ω`.
#[allow(clippy::too_many_arguments)]
pub fn relaxation_step(
    xi: &Matrix,
    delta: f64,
    e: &dyn Distance,
    int_k: &OpenSet,
    domain: &Domain,
    eps: f64,
    c: f64,
    decomposer: &mut dyn Decomposer,
) -> Result<RelaxReport, SolveError> {
    if !(eps > 0.0) || !(delta > 0.0 && delta < eps) {
        return Err(SolveError::BadTolerance(eps));
    }
    let phi = Affine::linear(*xi);
    if e.distance_to(xi)? == 0.0 {
        let map = PiecewiseAffineMap::affine(domain.clone(), phi)?;
        let area = domain.area();
        return Ok(RelaxReport {
            map,
            chain: LaminateChain::singleton(*xi),
            delta,
            c,
            dist_integral: 0.0,
            bound: eps * (area + 3.0 * c * area.max(1.0)),
            outside_k: 0,
            sup_diff: 0.0,
        });
    }
    if !int_k.contains(xi) {
        return Err(SolveError::Precondition("ξ is not in int K"));
    }
    let (chain, witness) = decomposer.decompose(xi, delta)?;
    let real = realize_with(&chain, &witness, int_k, domain, [0.0; 2], eps, eps, DEFAULT_MAX_CELLS)?;
    let map = real.map;
    let dist_integral = map.dist_integral(e)?;
    let outside_k = map.pieces().iter().filter(|p| !int_k.contains(&p.gradient)).count();
    let sup_diff = map.sup_norm_diff_affine(&phi);
    let area = domain.area();
    Ok(RelaxReport { map, chain, delta, c, dist_integral, bound: eps * (area + 3.0 * c * area.max(1.0)), outside_k, sup_diff })
}

// ---------------------------------------------------------------------------
// refinement loop

#[derive(Debug, Clone, Copy)]
pub struct RefinementConfig {
    /// First tolerance of the geometric schedule `ε_k = eps0 · ratio^k`.
    pub eps0: f64,
    pub ratio: f64,
    /// `δ_k = delta_ratio · ε_k`.
    pub delta_ratio: f64,
    pub rounds: usize,
    /// Stop once `∫ dist(Du, E) ≤ target`.
    pub target: f64,
    pub max_cells: usize,
    /// Stall when the integral drops by less than `stall_drop` (relative)
    /// over `stall_rounds` rounds.
    pub stall_rounds: usize,
    pub stall_drop: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self { eps0: 0.1, ratio: 0.5, delta_ratio: 0.5, rounds: 8, target: 1e-2, max_cells: DEFAULT_MAX_CELLS, stall_rounds: 3, stall_drop: 0.01 }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let ok = self.eps0 > 0.0
            && self.ratio > 0.0
            && self.ratio < 1.0
            && self.delta_ratio > 0.0
            && self.delta_ratio < 1.0
            && self.target > 0.0
            && self.stall_rounds > 0;
        if ok {
            Ok(())
        } else {
            Err(SolveError::Schedule)
        }
    }

    pub fn epsilon(&self, round: usize) -> f64 {
        self.eps0 * self.ratio.powi(round as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub epsilon: f64,
    pub delta: f64,
    /// Triangles of the assembled map.
    pub cells: usize,
    /// Control cells (the refined coarse mesh).
    pub control_cells: usize,
    pub dist_integral: f64,
    pub sup_grad: f64,
    /// Control cells rebuilt this round.
    pub rebuilt: usize,
    /// Control cells whose decomposition failed.
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnosis {
    /// Some gradients could not be decomposed.
    WalkerFailure,
    /// Decompositions succeed but the frame mass no longer shrinks.
    SlackFloor,
    /// The cell cap stopped refinement.
    CellCap,
    /// The round limit was reached while still decreasing.
    RoundLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub initial: f64,
    pub rounds: Vec<RoundLog>,
    pub converged: bool,
    pub diagnosis: Option<Diagnosis>,
}

impl SolveReport {
    pub fn final_integral(&self) -> f64 {
        self.rounds.last().map_or(self.initial, |r| r.dist_integral)
    }
}

#[derive(Debug, Clone)]
struct Control {
    tri: [Point; 3],
    phi: Affine,
    pieces: Vec<([Point; 3], Affine)>,
    dist: f64,
    frozen: bool,
}

fn gradient_key(m: &Matrix) -> [u64; 4] {
    [m.get(0, 0).to_bits(), m.get(0, 1).to_bits(), m.get(1, 0).to_bits(), m.get(1, 1).to_bits()]
}

/// Iterated relaxation of piecewise-affine boundary data `φ`.
///
/// Each cell of `φ`'s mesh is a control cell. A round rebuilds every
/// control cell whose mean distance exceeds the target: the cell is split
/// into four, and each child gets a fresh realization of the decomposition
/// of `Dφ` with the round's `ε`. Children keep `φ` on their boundary, so the
/// assembled map stays continuous with `u = φ` on `∂Ω`. A rebuild is kept
/// only if it lowers the cell's integral. Cells with `Dφ ∈ E` are never
/// touched.
pub fn solve(
    phi: &PiecewiseAffineMap,
    e: &dyn Distance,
    int_k: &OpenSet,
    decomposer: &mut dyn Decomposer,
    config: &RefinementConfig,
) -> Result<(PiecewiseAffineMap, SolveReport), SolveError> {
    config.validate()?;
    let dom = phi.domain();
    let mut controls = Vec::with_capacity(dom.len());
    for (i, p) in phi.pieces().iter().enumerate() {
        let tri = dom.cell(i);
        let d = e.distance_to(&p.gradient)?;
        let frozen = d == 0.0;
        if !frozen && !int_k.contains(&p.gradient) {
            return Err(SolveError::Precondition("a gradient of φ is neither in E nor in int K"));
        }
        let area = crate::pam::triangle_area(&tri);
        controls.push(Control { tri, phi: p.affine(), pieces: vec![(tri, p.affine())], dist: area * d, frozen });
    }
    let boundary = dom.boundary().to_vec();
    let total_area = dom.area();
    let initial: f64 = controls.iter().map(|c| c.dist).sum();
    let mut report = SolveReport { initial, rounds: Vec::new(), converged: initial <= config.target, diagnosis: None };
    let mut current = phi.clone();
    for k in 0..config.rounds {
        if report.converged {
            break;
        }
        let eps = config.epsilon(k);
        let delta = config.delta_ratio * eps;
        let mut cache: BTreeMap<[u64; 4], Option<(LaminateChain, MergeWitness)>> = BTreeMap::new();
        let mut next = Vec::with_capacity(controls.len() * 4);
        let (mut rebuilt, mut failures) = (0, 0);
        let mut cells: usize = controls.iter().map(|c| c.pieces.len()).sum();
        let mut capped = false;
        for c in &controls {
            let area = crate::pam::triangle_area(&c.tri);
            if c.frozen || c.dist <= config.target * area / total_area.max(1.0) || capped {
                next.push(c.clone());
                continue;
            }
            let key = gradient_key(&c.phi.gradient);
            let dec = cache.entry(key).or_insert_with(|| decomposer.decompose(&c.phi.gradient, delta).ok());
            let Some((chain, witness)) = dec.as_ref() else {
                failures += 1;
                next.push(c.clone());
                continue;
            };
            let mut children = Vec::with_capacity(4);
            let mut ok = true;
            for child in crate::pam::split4(&c.tri) {
                let phi_child = Affine::new(chain.barycenter(), c.phi.offset);
                let budget = config.max_cells.saturating_sub(cells);
                match realize_pieces(chain, witness, int_k, vec![child.to_vec()], area / 4.0, phi_child, eps, eps, budget) {
                    Ok((out, _)) => {
                        let mut pieces = Vec::new();
                        for (p, _) in out {
                            for tri in fan(&p.poly) {
                                if crate::pam::triangle_area(&tri) > 0.0 {
                                    pieces.push((tri, p.map));
                                }
                            }
                        }
                        let mut d = 0.0;
                        for (tri, m) in &pieces {
                            d += crate::pam::triangle_area(tri) * e.distance_to(&m.gradient)?;
                        }
                        cells += pieces.len();
                        children.push(Control { tri: child, phi: c.phi, pieces, dist: d, frozen: false });
                    }
                    Err(SolveError::CellCap(_)) => {
                        capped = true;
                        ok = false;
                        break;
                    }
                    Err(_) => {
                        failures += 1;
                        ok = false;
                        break;
                    }
                }
            }
            let new_dist: f64 = children.iter().map(|c| c.dist).sum();
            if ok && new_dist < c.dist {
                cells -= c.pieces.len();
                rebuilt += 1;
                next.extend(children);
            } else {
                if ok {
                    cells -= children.iter().map(|c| c.pieces.len()).sum::<usize>();
                }
                next.push(c.clone());
            }
        }
        controls = next;
        let all: Vec<([Point; 3], Affine)> = controls.iter().flat_map(|c| c.pieces.iter().copied()).collect();
        current = PiecewiseAffineMap::from_cells(boundary.clone(), &all)?;
        let dist_integral = current.dist_integral(e)?;
        report.rounds.push(RoundLog {
            epsilon: eps,
            delta,
            cells: current.len(),
            control_cells: controls.len(),
            dist_integral,
            sup_grad: current.max_gradient_norm(),
            rebuilt,
            failures,
        });
        if dist_integral <= config.target {
            report.converged = true;
            break;
        }
        if capped {
            report.diagnosis = Some(Diagnosis::CellCap);
            break;
        }
        let n = report.rounds.len();
        if n >= config.stall_rounds {
            let before = if n == config.stall_rounds { initial } else { report.rounds[n - 1 - config.stall_rounds].dist_integral };
            if dist_integral > (1.0 - config.stall_drop) * before {
                report.diagnosis = Some(if failures > 0 { Diagnosis::WalkerFailure } else { Diagnosis::SlackFloor });
                break;
            }
        }
    }
    if !report.converged && report.diagnosis.is_none() {
        report.diagnosis = Some(Diagnosis::RoundLimit);
    }
    Ok((current, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1e1() -> Matrix {
        Matrix::new2([[1.0, 0.0], [0.0, 0.0]])
    }

    #[test]
    fn clipping_square() {
        let sq = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let half = clip(&sq, [1.0, 0.0], 0.25);
        assert!((polygon_area(&half) - 0.25).abs() < 1e-15);
        assert!(clip(&sq, [1.0, 0.0], -1.0).is_empty());
        assert_eq!(simplify(&[[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, 1.0]]).len(), 3);
    }

    #[test]
    fn factor_and_interior() {
        let d = Matrix::new2([[2.0, 4.0], [1.0, 2.0]]);
        let (a, b, defect) = rank_one_factor(&d);
        assert!(defect < 1e-12);
        assert!(dyad(a, b).approx_eq(&d, 1e-12));
        assert!((dot(a, a) - dot(b, b)).abs() < 1e-12);
        assert!(zero_in_interior(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]));
        assert!(!zero_in_interior(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]));
        assert!(!zero_in_interior(&[[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]]));
        assert!(zero_in_interior(&[[1.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]]));
    }

    #[test]
    fn spec_checks() {
        let a = e1e1();
        assert!(matches!(OscillationSpec::new(a, -a, 1.5, 0.1, [0.0; 2]), Err(SolveError::BadWeight(_))));
        assert!(matches!(OscillationSpec::new(a, Matrix::identity(2).scale(-1.0), 0.5, 0.1, [0.0; 2]), Err(SolveError::NotRankOne(_))));
        let mut s = OscillationSpec::new(a, -a, 0.5, 0.1, [0.0; 2]).unwrap();
        s.phi.gradient = a;
        assert!(matches!(s.validate(), Err(SolveError::BaseGradient(_))));
    }

    #[test]
    fn sawtooth_on_square() {
        let a = e1e1();
        let spec = OscillationSpec::new(a, -a, 0.5, 0.1, [0.0; 2]).unwrap();
        let o = oscillate(&spec, &Domain::unit_square(1)).unwrap();
        let u = &o.map;
        assert!(u.check_boundary(&spec.phi));
        assert!(u.is_continuous());
        assert!(u.sup_norm_diff_affine(&spec.phi) <= 0.1);
        assert!((u.measure_of(&o.omega_a) - 0.5).abs() <= 0.1);
        assert!((u.measure_of(&o.omega_b) - 0.5).abs() <= 0.1);
        assert!(o.omega_a.iter().all(|&i| *u.gradient(i) == a));
        assert!(o.omega_b.iter().all(|&i| *u.gradient(i) == -a));
        assert!(o.geometry[0].period <= 0.2);
        for &i in &o.aux {
            assert!((*u.gradient(i) - spec.phi.gradient).norm() <= 0.1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn endpoint_weight() {
        let a = e1e1();
        let spec = OscillationSpec::new(a, -a, 1.0, 0.1, [0.3, 0.0]).unwrap();
        let o = oscillate(&spec, &Domain::unit_square(1)).unwrap();
        assert!((o.map.measure_of(&o.omega_a) - 1.0).abs() < 1e-12);
        assert!(o.omega_b.is_empty());
        assert!(o.map.check_boundary(&spec.phi));
    }

    #[test]
    fn nonconvex_domain() {
        let a = Matrix::new2([[0.0, 1.0], [0.0, 1.0]]);
        let spec = OscillationSpec::new(a, Matrix::zeros(2), 0.3, 0.2, [1.0, -1.0]).unwrap();
        let l = Domain::polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]).unwrap();
        let o = oscillate(&spec, &l).unwrap();
        assert!(o.map.check_boundary(&spec.phi));
        assert!(o.map.is_continuous());
        assert!((o.map.measure_of(&o.omega_a) - 0.3 * 3.0).abs() <= 0.2);
    }

    #[test]
    fn singleton_and_pair_realization() {
        let a = e1e1();
        let u = OpenSet::ball(Matrix::zeros(2), 2.0);
        let single = LaminateChain::singleton(a);
        let r = realize_laminate(&single, &MergeWitness::default(), &u, &Domain::unit_square(1), [0.0; 2], 0.1).unwrap();
        assert_eq!(r.map.measure_of(&r.omega[0]), 1.0);
        let pair = LaminateChain::new(vec![(0.5, a), (0.5, -a)]).unwrap();
        let w = check_hi(&pair, &u, REL_TOL).unwrap();
        let r = realize_laminate(&pair, &w, &u, &Domain::unit_square(1), [0.0; 2], 0.1).unwrap();
        assert!(r.map.check_boundary(&Affine::linear(Matrix::zeros(2))));
        assert!((r.map.measure_of(&r.omega[0]) - 0.5).abs() <= 0.1);
        assert_eq!(r.depth, 1);
    }
}
