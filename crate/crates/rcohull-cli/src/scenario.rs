//! Scenario files: JSON with a `schema` version, matrices as row-major
//! nested arrays.

use rcohull::hulls::{
    fiber_rco_predicate, ftheta_predicate, segment_delta_family_2d, segment_delta_family_3d, segment_k_predicate_2d, segment_k_predicate_3d,
    twopoint_delta_family, twopoint_predicate, HullPredicate,
};
use rcohull::laminate::{LaminateChain, OpenSet};
use rcohull::pam::{Affine, Domain};
use rcohull::solver::RefinementConfig;
use rcohull::walker::KirchheimInput;
use rcohull::{DetConstraint, Matrix, MatrixSetSpec, SingularValueSet, TargetSet};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: u32 = 1;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    pub set: SetSpec,
    #[serde(default)]
    pub hull: Option<HullSpec>,
    /// Query points for `hull check`, start points for `walk`.
    #[serde(default)]
    pub points: Vec<Rows>,
    /// Weighted atoms for `laminate verify`.
    #[serde(default)]
    pub chain: Vec<AtomSpec>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub boundary: Option<BoundarySpec>,
    #[serde(default)]
    pub refinement: RefinementSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub walk: WalkSpec,
    #[serde(default)]
    pub oscillation: Option<OscillationSpecFile>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetSpec {
    #[default]
    Any,
    NonNegative,
    Positive,
}

impl From<DetSpec> for DetConstraint {
    fn from(d: DetSpec) -> Self {
        match d {
            DetSpec::Any => DetConstraint::None,
            DetSpec::NonNegative => DetConstraint::NonNegative,
            DetSpec::Positive => DetConstraint::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// Finitely many singular-value tuples.
    SingularValues {
        n: usize,
        points: Vec<Vec<f64>>,
        #[serde(default)]
        det: DetSpec,
    },
    /// The segment of tuples between `a` and `b`.
    Segment {
        n: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default)]
        det: DetSpec,
    },
    Matrices { matrices: Vec<Rows> },
    /// Kirchheim data `(E, M_ξ)`; `E` is the target set.
    Kirchheim { e: Vec<Rows>, m: Vec<Vec<Rows>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HullSpec {
    Ftheta,
    Twopoint,
    Fiber { alpha: [f64; 2] },
    Segment,
    /// `K_δ` of the two-point or segment family.
    Delta { delta: f64 },
    /// Open tube of the given radius around the polyline through the listed
    /// matrices.
    Tube { radius: f64 },
    Kirchheim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: f64,
    pub matrix: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    UnitSquare {
        #[serde(default = "one")]
        k: usize,
    },
    Rectangle {
        min: [f64; 2],
        max: [f64; 2],
        #[serde(default = "one")]
        k: usize,
    },
    Polygon { vertices: Vec<[f64; 2]> },
}

fn one() -> usize {
    1
}

/// Affine boundary data `x ↦ gradient·x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub gradient: Rows,
    #[serde(default)]
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementSpec {
    pub eps0: f64,
    pub ratio: f64,
    pub delta_ratio: f64,
    pub rounds: usize,
    pub target: f64,
    pub max_cells: usize,
    pub stall_rounds: usize,
    pub stall_drop: f64,
}

impl Default for RefinementSpec {
    fn default() -> Self {
        let c = RefinementConfig::default();
        Self {
            eps0: c.eps0,
            ratio: c.ratio,
            delta_ratio: c.delta_ratio,
            rounds: c.rounds,
            target: c.target,
            max_cells: c.max_cells,
            stall_rounds: c.stall_rounds,
            stall_drop: c.stall_drop,
        }
    }
}

impl RefinementSpec {
    pub fn config(&self) -> RefinementConfig {
        RefinementConfig {
            eps0: self.eps0,
            ratio: self.ratio,
            delta_ratio: self.delta_ratio,
            rounds: self.rounds,
            target: self.target,
            max_cells: self.max_cells,
            stall_rounds: self.stall_rounds,
            stall_drop: self.stall_drop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub h: f64,
    pub box_half: f64,
    pub max_iter: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { h: 0.25, box_half: 4.0, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSpec {
    /// Walks stop inside `B_δ(E)`; also the `ε` of the outside mass.
    pub delta: f64,
    pub proposer: ProposerSpec,
    pub max_steps: usize,
}

impl Default for WalkSpec {
    fn default() -> Self {
        Self { delta: 0.05, proposer: ProposerSpec::Generic, max_steps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposerSpec {
    #[default]
    Generic,
    /// Steps toward the fibers of the listed singular-value pairs.
    Fiber { targets: Vec<[f64; 2]> },
    Kirchheim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationSpecFile {
    pub a: Rows,
    pub b: Rows,
    pub t: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub report: String,
    pub mesh: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { report: "report.json".into(), mesh: "mesh.csv".into() }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn matrix(rows: &Rows) -> Result<Matrix, CliError> {
    let n = rows.len();
    if !(n == 2 || n == 3) || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("matrix must be 2×2 or 3×3, got {n} rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Matrix::from_slice(n, &flat).map_err(|e| invalid(e.to_string()))
}

pub fn rows(m: &Matrix) -> Rows {
    (0..m.n()).map(|i| m.row(i).to_vec()).collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Self = serde_json::from_str(text).map_err(|e| invalid(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// Schema version, matrix shapes and cross references.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(invalid(format!("unsupported schema {} (expected {SCHEMA})", self.schema)));
        }
        let n = self.n()?;
        let same = |m: &Rows, what: &str| -> Result<(), CliError> {
            if matrix(m)?.n() == n {
                Ok(())
            } else {
                Err(invalid(format!("{what} has the wrong dimension")))
            }
        };
        for p in &self.points {
            same(p, "a point")?;
        }
        for a in &self.chain {
            same(&a.matrix, "a chain atom")?;
        }
        if let Some(b) = &self.boundary {
            same(&b.gradient, "the boundary gradient")?;
        }
        if let Some(o) = &self.oscillation {
            same(&o.a, "oscillation A")?;
            same(&o.b, "oscillation B")?;
        }
        match (&self.hull, &self.set) {
            (Some(HullSpec::Tube { .. }), SetSpec::Matrices { .. }) | (Some(HullSpec::Kirchheim), SetSpec::Kirchheim { .. }) => {}
            (Some(HullSpec::Tube { .. }), _) => return Err(invalid("a tube hull needs a matrix-list set")),
            (Some(HullSpec::Kirchheim), _) => return Err(invalid("a kirchheim hull needs a kirchheim set")),
            _ => {}
        }
        if self.walk.proposer == ProposerSpec::Kirchheim && !matches!(self.set, SetSpec::Kirchheim { .. }) {
            return Err(invalid("the kirchheim proposer needs a kirchheim set"));
        }
        if !(self.walk.delta > 0.0) {
            return Err(invalid("walk.delta must be positive"));
        }
        self.refinement.config().validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Matrix dimension.
    pub fn n(&self) -> Result<usize, CliError> {
        match &self.set {
            SetSpec::SingularValues { n, .. } | SetSpec::Segment { n, .. } => Ok(*n),
            SetSpec::Matrices { matrices } => matrices.first().map(|m| m.len()).ok_or_else(|| invalid("empty matrix list")),
            SetSpec::Kirchheim { e, .. } => e.first().map(|m| m.len()).ok_or_else(|| invalid("empty kirchheim set")),
        }
    }

    /// The set as a singular-value specification, when it is one.
    pub fn spec(&self) -> Result<Option<MatrixSetSpec>, CliError> {
        let s = match &self.set {
            SetSpec::SingularValues { n, points, det } => {
                MatrixSetSpec::new(*n, SingularValueSet::FinitePoints(points.clone()), (*det).into())
            }
            SetSpec::Segment { n, a, b, det } => MatrixSetSpec::new(*n, SingularValueSet::segment(a, b), (*det).into()),
            _ => return Ok(None),
        };
        s.map(Some).map_err(|e| invalid(e.to_string()))
    }

    pub fn target(&self) -> Result<TargetSet, CliError> {
        if let Some(s) = self.spec()? {
            return Ok(s.into());
        }
        match &self.set {
            SetSpec::Matrices { matrices } => Ok(TargetSet::Finite(matrices.iter().map(matrix).collect::<Result<_, _>>()?)),
            SetSpec::Kirchheim { e, .. } => Ok(TargetSet::Finite(e.iter().map(matrix).collect::<Result<_, _>>()?)),
            _ => unreachable!("singular-value sets handled above"),
        }
    }

    pub fn kirchheim(&self) -> Result<KirchheimInput, CliError> {
        match &self.set {
            SetSpec::Kirchheim { e, m } => Ok(KirchheimInput {
                e: e.iter().map(matrix).collect::<Result<_, _>>()?,
                m: m.iter().map(|ms| ms.iter().map(matrix).collect::<Result<_, _>>()).collect::<Result<_, _>>()?,
            }),
            _ => Err(invalid("not a kirchheim set")),
        }
    }

    fn two_points(&self) -> Result<(f64, f64, f64, f64), CliError> {
        match &self.set {
            SetSpec::SingularValues { n: 2, points, .. } if points.len() == 2 && points.iter().all(|p| p.len() == 2) => {
                let (a, b) = if points[0][0] <= points[1][0] { (&points[0], &points[1]) } else { (&points[1], &points[0]) };
                Ok((a[0], a[1], b[0], b[1]))
            }
            _ => Err(invalid("this hull needs two singular-value pairs")),
        }
    }

    /// The closure predicate of the chosen hull, when it has one.
    pub fn predicate(&self) -> Result<HullPredicate, CliError> {
        let hull = self.hull.as_ref().ok_or_else(|| invalid("scenario has no hull"))?;
        let p = match hull {
            HullSpec::Ftheta => match &self.set {
                SetSpec::SingularValues { points, .. } => ftheta_predicate(&SingularValueSet::FinitePoints(points.clone()), false),
                SetSpec::Segment { a, b, .. } => ftheta_predicate(&SingularValueSet::segment(a, b), false),
                _ => return Err(invalid("the f_theta hull needs a singular-value set")),
            },
            HullSpec::Twopoint => {
                let (a1, a2, b1, b2) = self.two_points()?;
                twopoint_predicate(a1, a2, b1, b2, false)
            }
            HullSpec::Fiber { alpha } => fiber_rco_predicate(alpha[0], alpha[1], false),
            HullSpec::Segment => match &self.set {
                SetSpec::Segment { n: 2, a, b, .. } => segment_k_predicate_2d([a[0], a[1]], [b[0], b[1]]),
                SetSpec::Segment { n: 3, a, b, .. } => segment_k_predicate_3d([a[0], a[1], a[2]], [b[0], b[1], b[2]]),
                _ => return Err(invalid("the segment hull needs a segment set")),
            },
            HullSpec::Delta { delta } => match &self.set {
                SetSpec::SingularValues { .. } => {
                    let (a1, a2, b1, b2) = self.two_points()?;
                    twopoint_delta_family(a1, a2, b1, b2, *delta).map(|f| f.k)
                }
                SetSpec::Segment { n: 2, a, b, .. } => segment_delta_family_2d([a[0], a[1]], [b[0], b[1]], *delta).map(|f| f.k),
                SetSpec::Segment { n: 3, a, b, .. } => segment_delta_family_3d([a[0], a[1], a[2]], [b[0], b[1], b[2]], *delta).map(|f| f.k),
                _ => return Err(invalid("the delta hull needs a two-point or segment set")),
            },
            HullSpec::Tube { .. } | HullSpec::Kirchheim => return Err(invalid("this hull is an open set without a closed-form predicate")),
        };
        p.map_err(|e| invalid(e.to_string()))
    }

    /// `int K` for walks and solves.
    pub fn interior(&self) -> Result<OpenSet, CliError> {
        match &self.hull {
            Some(HullSpec::Tube { radius }) => {
                let SetSpec::Matrices { matrices } = &self.set else { unreachable!("validated") };
                let nodes: Vec<Matrix> = matrices.iter().map(matrix).collect::<Result<_, _>>()?;
                let r = *radius;
                let bound = nodes.iter().map(Matrix::norm).fold(0.0, f64::max) + r;
                Ok(OpenSet::new(bound, move |m| r - polyline_distance(&nodes, m)))
            }
            Some(HullSpec::Kirchheim) => Ok(self.kirchheim()?.k_set()),
            Some(_) => self.predicate()?.interior().open_set().ok_or_else(|| invalid("hull has no interior")),
            None => Err(invalid("scenario has no hull")),
        }
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        let d = match self.domain.as_ref().ok_or_else(|| invalid("scenario has no domain"))? {
            DomainSpec::UnitSquare { k } => Ok(Domain::unit_square(*k)),
            DomainSpec::Rectangle { min, max, k } => Domain::rectangle(min[0], min[1], max[0], max[1], *k),
            DomainSpec::Polygon { vertices } => Domain::polygon(vertices.clone()),
        };
        d.map_err(|e| invalid(e.to_string()))
    }

    pub fn boundary(&self) -> Result<Affine, CliError> {
        let b = self.boundary.as_ref().ok_or_else(|| invalid("scenario has no boundary data"))?;
        let g = matrix(&b.gradient)?;
        if g.n() != 2 {
            return Err(invalid("maps on planar domains need 2×2 gradients"));
        }
        Ok(Affine::new(g, b.offset))
    }

    pub fn points(&self) -> Result<Vec<Matrix>, CliError> {
        self.points.iter().map(matrix).collect()
    }

    pub fn chain(&self) -> Result<LaminateChain, CliError> {
        let atoms = self.chain.iter().map(|a| Ok((a.weight, matrix(&a.matrix)?))).collect::<Result<Vec<_>, CliError>>()?;
        LaminateChain::new(atoms).map_err(|e| invalid(e.to_string()))
    }
}

fn polyline_distance(nodes: &[Matrix], m: &Matrix) -> f64 {
    if nodes.len() == 1 {
        return (*m - nodes[0]).norm();
    }
    nodes
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            let t = if d.norm_sq() > 0.0 { ((*m - w[0]).dot(&d) / d.norm_sq()).clamp(0.0, 1.0) } else { 0.0 };
            (*m - (w[0] + d.scale(t))).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
