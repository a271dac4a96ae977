//! Piecewise-affine maps `u: Ω → R²` on triangulated polygonal domains.
//!
//! A [`Domain`] is a simple polygon together with a triangulation. The
//! triangulation is stored as a vertex table plus index triples; vertices
//! need not be shared between triangles, so maps built by cutting cells
//! ("triangle soups") are represented without a global conformity step.
//! Continuity is then a checked property ([`PiecewiseAffineMap::continuity_defect`])
//! rather than a structural one.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use thiserror::Error;

use crate::matcore::Matrix;
use crate::sets::{Distance, SetError};

pub type Point = [f64; 2];

/// Relative tolerance for area bookkeeping.
pub const AREA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PamError {
    #[error("point ({0}, {1}) lies outside the domain")]
    Outside(f64, f64),
    #[error("invalid mesh: {0}")]
    BadMesh(&'static str),
    #[error("cell areas sum to {cells}, polygon area is {polygon}")]
    AreaMismatch { cells: f64, polygon: f64 },
    #[error("maps live on different domains")]
    Incompatible,
    #[error("expected {expected} pieces, got {got}")]
    PieceCount { expected: usize, got: usize },
    #[error("non-finite affine piece")]
    NonFinite,
    #[error("cannot parse vertex list: line {0}")]
    Parse(usize),
    #[error(transparent)]
    Set(#[from] SetError),
}

pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed area (positive for counterclockwise loops).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * cross(t[0], t[1], t[2])
}

pub fn is_convex(poly: &[Point]) -> bool {
    let n = poly.len();
    n >= 3 && (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) >= 0.0)
}

fn point_on_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len == 0.0 {
        return (p[0] - a[0]).abs() <= tol && (p[1] - a[1]).abs() <= tol;
    }
    let d = cross(a, b, p).abs() / len;
    let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
    d <= tol && t >= -tol / len && t <= 1.0 + tol / len
}

/// Barycentric containment with a small slack so shared edges belong to
/// every adjacent cell.
fn in_triangle(t: &[Point; 3], p: Point, slack: f64) -> bool {
    let a = cross(t[0], t[1], t[2]);
    if a <= 0.0 {
        return false;
    }
    let l0 = cross(t[1], t[2], p) / a;
    let l1 = cross(t[2], t[0], p) / a;
    let l2 = cross(t[0], t[1], p) / a;
    l0 >= -slack && l1 >= -slack && l2 >= -slack
}

/// Ear-clipping triangulation of a simple counterclockwise polygon.
fn ear_clip(poly: &[Point]) -> Result<Vec<[usize; 3]>, PamError> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len().saturating_sub(2));
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&k| {
            let (a, b, c) = (poly[idx[(k + m - 1) % m]], poly[idx[k]], poly[idx[(k + 1) % m]]);
            if cross(a, b, c) <= 0.0 {
                return false;
            }
            let tri = [a, b, c];
            idx.iter().all(|&j| {
                let p = poly[j];
                p == a || p == b || p == c || !in_triangle(&tri, p, 0.0)
            })
        });
        let k = ear.ok_or(PamError::BadMesh("polygon is not simple"))?;
        out.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    out.push([idx[0], idx[1], idx[2]]);
    Ok(out)
}

/// Uniform bucket grid over cell bounding boxes.
#[derive(Debug, Clone)]
struct GridIndex {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl GridIndex {
    fn build(tris: &[[Point; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for t in tris {
            for p in t {
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        let w = (hi[0] - lo[0]).max(1e-300);
        let h = (hi[1] - lo[1]).max(1e-300);
        let target = (tris.len() as f64).max(1.0);
        let mut cell = (w * h / target).sqrt().max(w.max(h) / 2048.0);
        // Long thin cells would land in many buckets; coarsen until the
        // number of insertions stays proportional to the cell count.
        let extents: Vec<(f64, f64)> = tris
            .iter()
            .map(|t| {
                let ex = t[0][0].max(t[1][0]).max(t[2][0]) - t[0][0].min(t[1][0]).min(t[2][0]);
                let ey = t[0][1].max(t[1][1]).max(t[2][1]) - t[0][1].min(t[1][1]).min(t[2][1]);
                (ex, ey)
            })
            .collect();
        while extents.iter().map(|(ex, ey)| (ex / cell + 2.0) * (ey / cell + 2.0)).sum::<f64>() > 16.0 * target {
            cell *= 1.5;
        }
        let nx = ((w / cell).ceil() as usize).clamp(1, 2048);
        let ny = ((h / cell).ceil() as usize).clamp(1, 2048);
        let mut g = Self { lo, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] };
        for (i, t) in tris.iter().enumerate() {
            let (x0, y0) = g.bucket_of([t[0][0].min(t[1][0]).min(t[2][0]), t[0][1].min(t[1][1]).min(t[2][1])]);
            let (x1, y1) = g.bucket_of([t[0][0].max(t[1][0]).max(t[2][0]), t[0][1].max(t[1][1]).max(t[2][1])]);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    g.buckets[y * nx + x].push(i as u32);
                }
            }
        }
        g
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p[0] - self.lo[0]) / self.cell).floor();
        let fy = ((p[1] - self.lo[1]) / self.cell).floor();
        let x = if fx < 0.0 { 0 } else { (fx as usize).min(self.nx - 1) };
        let y = if fy < 0.0 { 0 } else { (fy as usize).min(self.ny - 1) };
        (x, y)
    }

    fn candidates(&self, p: Point) -> &[u32] {
        let (x, y) = self.bucket_of(p);
        &self.buckets[y * self.nx + x]
    }
}

/// Bounded polygonal domain with a triangulation.
#[derive(Debug, Clone)]
pub struct Domain {
    polygon: Vec<Point>,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    index: GridIndex,
    scale: f64,
}

impl Domain {
    /// Checks orientation of every triangle and the area identity.
    pub fn new(polygon: Vec<Point>, vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, PamError> {
        if polygon.len() < 3 || triangles.is_empty() {
            return Err(PamError::BadMesh("need a polygon with at least 3 vertices and one triangle"));
        }
        if polygon.iter().chain(vertices.iter()).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(PamError::BadMesh("non-finite coordinate"));
        }
        let pa = polygon_area(&polygon);
        if pa <= 0.0 {
            return Err(PamError::BadMesh("polygon must be counterclockwise with positive area"));
        }
        let mut total = 0.0;
        let mut tris = Vec::with_capacity(triangles.len());
        for t in &triangles {
            if t.iter().any(|&i| i >= vertices.len()) {
                return Err(PamError::BadMesh("vertex index out of range"));
            }
            let tri = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            let a = triangle_area(&tri);
            if a <= 0.0 {
                return Err(PamError::BadMesh("triangle with non-positive orientation"));
            }
            total += a;
            tris.push(tri);
        }
        if (total - pa).abs() > AREA_TOL * pa.max(1.0) * (1.0 + (triangles.len() as f64).sqrt() * 1e-2) {
            return Err(PamError::AreaMismatch { cells: total, polygon: pa });
        }
        let scale = polygon.iter().fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        let index = GridIndex::build(&tris);
        Ok(Self { polygon, vertices, triangles, index, scale })
    }

    /// Polygon triangulated by ear clipping. Clockwise input is reversed.
    pub fn polygon(mut boundary: Vec<Point>) -> Result<Self, PamError> {
        if boundary.len() >= 2 && boundary.first() == boundary.last() {
            boundary.pop();
        }
        if boundary.len() < 3 {
            return Err(PamError::BadMesh("need at least 3 vertices"));
        }
        if polygon_area(&boundary) < 0.0 {
            boundary.reverse();
        }
        let tris = ear_clip(&boundary)?;
        Self::new(boundary.clone(), boundary, tris)
    }

    /// Rectangle `[x0,x1]×[y0,y1]` cut into `k×k` squares, each split along
    /// its diagonal.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, k: usize) -> Result<Self, PamError> {
        if !(x1 > x0 && y1 > y0) || k == 0 {
            return Err(PamError::BadMesh("empty rectangle or zero subdivisions"));
        }
        let mut vertices = Vec::with_capacity((k + 1) * (k + 1));
        for j in 0..=k {
            for i in 0..=k {
                let fx = i as f64 / k as f64;
                let fy = j as f64 / k as f64;
                let x = if i == k { x1 } else { x0 + (x1 - x0) * fx };
                let y = if j == k { y1 } else { y0 + (y1 - y0) * fy };
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (k + 1) + i;
        let mut tris = Vec::with_capacity(2 * k * k);
        for j in 0..k {
            for i in 0..k {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], vertices, tris)
    }

    pub fn unit_square(k: usize) -> Self {
        Self::rectangle(0.0, 0.0, 1.0, 1.0, k).expect("unit square is valid")
    }

    /// Polygon from a plain-text vertex list: one `x y` (or `x,y`) pair per
    /// line; blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, PamError> {
        let mut pts = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
            let x = it.next().and_then(|s| s.parse::<f64>().ok());
            let y = it.next().and_then(|s| s.parse::<f64>().ok());
            match (x, y, it.next()) {
                (Some(x), Some(y), None) => pts.push([x, y]),
                _ => return Err(PamError::Parse(no + 1)),
            }
        }
        Self::polygon(pts)
    }

    /// Triangles given by coordinates, inside the polygon `boundary`.
    pub fn from_triangles(boundary: Vec<Point>, tris: &[[Point; 3]]) -> Result<Self, PamError> {
        let mut vertices = Vec::with_capacity(3 * tris.len());
        let mut idx = Vec::with_capacity(tris.len());
        for t in tris {
            let b = vertices.len();
            vertices.extend_from_slice(t);
            idx.push([b, b + 1, b + 2]);
        }
        Self::new(boundary, vertices, idx)
    }

    /// Every triangle split into four through its edge midpoints.
    pub fn refine4(&self) -> Self {
        let tris: Vec<[Point; 3]> = self.cells().flat_map(|t| split4(&t)).collect();
        Self::from_triangles(self.polygon.clone(), &tris).expect("refinement keeps a valid mesh")
    }

    pub fn boundary(&self) -> &[Point] {
        &self.polygon
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn cell(&self, i: usize) -> [Point; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn cells(&self) -> impl Iterator<Item = [Point; 3]> + '_ {
        (0..self.len()).map(|i| self.cell(i))
    }

    pub fn cell_area(&self, i: usize) -> f64 {
        triangle_area(&self.cell(i))
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }

    /// Largest absolute coordinate (at least 1); tolerances scale with it.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_convex(&self) -> bool {
        is_convex(&self.polygon)
    }

    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        let n = self.polygon.len();
        (0..n).any(|i| point_on_segment(p, self.polygon[i], self.polygon[(i + 1) % n], tol))
    }

    /// Lowest-index cell containing `p` (edges and vertices count as inside).
    pub fn locate(&self, p: Point) -> Option<usize> {
        let slack = 1e-12;
        self.index
            .candidates(p)
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| in_triangle(&self.cell(i), p, slack))
            .min()
    }

    /// All cells containing `p`.
    pub fn locate_all(&self, p: Point, slack: f64) -> Vec<usize> {
        self.index.candidates(p).iter().map(|&i| i as usize).filter(|&i| in_triangle(&self.cell(i), p, slack)).collect()
    }
}

/// Midpoint subdivision of a triangle; children keep the orientation.
pub fn split4(t: &[Point; 3]) -> [[Point; 3]; 4] {
    let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let (m01, m12, m20) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[2], t[0]));
    [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]]
}

/// Affine map `x ↦ Gx + c` on R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub gradient: Matrix,
    pub offset: [f64; 2],
}

impl Affine {
    pub fn new(gradient: Matrix, offset: [f64; 2]) -> Self {
        Self { gradient, offset }
    }

    pub fn linear(gradient: Matrix) -> Self {
        Self { gradient, offset: [0.0; 2] }
    }

    pub fn eval(&self, x: Point) -> [f64; 2] {
        let g = &self.gradient;
        [g.get(0, 0) * x[0] + g.get(0, 1) * x[1] + self.offset[0], g.get(1, 0) * x[0] + g.get(1, 1) * x[1] + self.offset[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.gradient.is_finite() && self.offset.iter().all(|v| v.is_finite())
    }
}

/// The affine piece of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePiece {
    pub cell: usize,
    pub gradient: Matrix,
    pub offset: [f64; 2],
}

impl AffinePiece {
    pub fn affine(&self) -> Affine {
        Affine { gradient: self.gradient, offset: self.offset }
    }
}

/// One CSV row of a mesh export.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshRow {
    pub cell_id: usize,
    pub vertices: [Point; 3],
    pub gradient: [f64; 4],
    pub dist_to_e: f64,
}

impl MeshRow {
    pub const HEADER: [&'static str; 12] =
        ["cell_id", "v0x", "v0y", "v1x", "v1y", "v2x", "v2y", "g11", "g12", "g21", "g22", "dist_to_E"];

    pub fn fields(&self) -> Vec<String> {
        use alloc::string::ToString;
        let mut f = vec![self.cell_id.to_string()];
        for v in &self.vertices {
            f.push(v[0].to_string());
            f.push(v[1].to_string());
        }
        f.extend(self.gradient.iter().map(|g| g.to_string()));
        f.push(self.dist_to_e.to_string());
        f
    }
}

#[derive(Debug, Clone)]
pub struct PiecewiseAffineMap {
    domain: Domain,
    pieces: Vec<AffinePiece>,
}

impl PiecewiseAffineMap {
    pub fn new(domain: Domain, maps: Vec<Affine>) -> Result<Self, PamError> {
        if maps.len() != domain.len() {
            return Err(PamError::PieceCount { expected: domain.len(), got: maps.len() });
        }
        if maps.iter().any(|m| !m.is_finite() || m.gradient.n() != 2) {
            return Err(PamError::NonFinite);
        }
        let pieces = maps.into_iter().enumerate().map(|(cell, m)| AffinePiece { cell, gradient: m.gradient, offset: m.offset }).collect();
        Ok(Self { domain, pieces })
    }

    /// The same affine map on every cell.
    pub fn affine(domain: Domain, a: Affine) -> Result<Self, PamError> {
        let n = domain.len();
        Self::new(domain, vec![a; n])
    }

    /// Map given as a list of triangles with their affine pieces.
    pub fn from_cells(boundary: Vec<Point>, cells: &[([Point; 3], Affine)]) -> Result<Self, PamError> {
        let tris: Vec<[Point; 3]> = cells.iter().map(|c| c.0).collect();
        let domain = Domain::from_triangles(boundary, &tris)?;
        Self::new(domain, cells.iter().map(|c| c.1).collect())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn gradient(&self, cell: usize) -> &Matrix {
        &self.pieces[cell].gradient
    }

    pub fn evaluate(&self, x: Point) -> Result<[f64; 2], PamError> {
        let c = self.domain.locate(x).ok_or(PamError::Outside(x[0], x[1]))?;
        Ok(self.pieces[c].affine().eval(x))
    }

    /// `∫_Ω dist(Du, E)`, exact for piecewise-affine maps.
    pub fn dist_integral(&self, e: &dyn Distance) -> Result<f64, PamError> {
        let mut s = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            s += self.domain.cell_area(i) * e.distance_to(&p.gradient)?;
        }
        Ok(s)
    }

    /// Total area of the cells whose gradient satisfies `pred`.
    pub fn measure_where(&self, mut pred: impl FnMut(&Matrix) -> bool) -> f64 {
        (0..self.len()).filter(|&i| pred(&self.pieces[i].gradient)).map(|i| self.domain.cell_area(i)).sum()
    }

    pub fn measure_of(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&i| self.domain.cell_area(i)).sum()
    }

    /// Largest `|u − φ|` over cell vertices lying on `∂Ω`.
    pub fn boundary_defect(&self, phi: &Affine) -> f64 {
        let tol = 1e-12 * self.domain.scale();
        let mut worst = 0.0f64;
        for (i, p) in self.pieces.iter().enumerate() {
            for v in self.domain.cell(i) {
                if self.domain.on_boundary(v, tol) {
                    let (a, b) = (p.affine().eval(v), phi.eval(v));
                    worst = worst.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                }
            }
        }
        worst
    }

    /// `u = φ` at every boundary vertex, up to rounding of the affine
    /// evaluation (`1e-9` relative to the domain and gradient scale).
    pub fn check_boundary(&self, phi: &Affine) -> bool {
        self.boundary_defect(phi) <= 1e-9 * self.value_scale()
    }

    fn value_scale(&self) -> f64 {
        let g = self.pieces.iter().fold(1.0f64, |m, p| m.max(p.gradient.max_abs()));
        let c = self.pieces.iter().fold(0.0f64, |m, p| m.max(p.offset[0].abs()).max(p.offset[1].abs()));
        g * self.domain.scale() + c
    }

    /// `max |u − v|` over the vertices of both meshes. Exact when one of the
    /// maps is affine on every cell of the other (for instance when either
    /// map is globally affine or the meshes coincide).
    pub fn sup_norm_diff(&self, other: &PiecewiseAffineMap) -> Result<f64, PamError> {
        let (a, b) = (self.domain.area(), other.domain.area());
        if (a - b).abs() > 1e-9 * a.max(1.0) {
            return Err(PamError::Incompatible);
        }
        let mut worst = 0.0f64;
        for (m1, m2) in [(self, other), (other, self)] {
            for (i, p) in m1.pieces.iter().enumerate() {
                for v in m1.domain.cell(i) {
                    let w = m2.evaluate(v).map_err(|_| PamError::Incompatible)?;
                    let u = p.affine().eval(v);
                    worst = worst.max((u[0] - w[0]).abs().max((u[1] - w[1]).abs()));
                }
            }
        }
        Ok(worst)
    }

    /// `max |u − φ|` over all cell vertices, for an affine `φ`.
    pub fn sup_norm_diff_affine(&self, phi: &Affine) -> f64 {
        let mut worst = 0.0f64;
        for (i, p) in self.pieces.iter().enumerate() {
            for v in self.domain.cell(i) {
                let (u, w) = (p.affine().eval(v), phi.eval(v));
                worst = worst.max((u[0] - w[0]).abs().max((u[1] - w[1]).abs()));
            }
        }
        worst
    }

    /// Largest disagreement between the pieces of cells sharing a vertex
    /// (vertices of one cell lying on the closure of another count too).
    pub fn continuity_defect(&self) -> f64 {
        let slack = 1e-9;
        let mut worst = 0.0f64;
        for (i, p) in self.pieces.iter().enumerate() {
            for v in self.domain.cell(i) {
                let u = p.affine().eval(v);
                for j in self.domain.locate_all(v, slack) {
                    if j != i {
                        let w = self.pieces[j].affine().eval(v);
                        worst = worst.max((u[0] - w[0]).abs().max((u[1] - w[1]).abs()));
                    }
                }
            }
        }
        worst
    }

    /// Continuity within `1e-9` of the value scale.
    pub fn is_continuous(&self) -> bool {
        self.continuity_defect() <= 1e-9 * self.value_scale()
    }

    /// `max_cells |Du|` (Frobenius).
    pub fn max_gradient_norm(&self) -> f64 {
        self.pieces.iter().fold(0.0, |m, p| m.max(p.gradient.norm()))
    }

    pub fn rows(&self, e: &dyn Distance) -> Result<Vec<MeshRow>, PamError> {
        let mut out = Vec::with_capacity(self.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let g = &p.gradient;
            out.push(MeshRow {
                cell_id: i,
                vertices: self.domain.cell(i),
                gradient: [g.get(0, 0), g.get(0, 1), g.get(1, 0), g.get(1, 1)],
                dist_to_e: e.distance_to(g)?,
            });
        }
        Ok(out)
    }
}
