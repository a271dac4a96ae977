//! Scenario-driven front end for `rcohull`.
//!
//! Exit codes: 0 success, 2 invalid scenario or arguments, 3 inconclusive
//! (a search budget ran out, a walk stalled or a check did not hold), 1
//! anything else. Diagnostics go to stderr, results to stdout and `--out`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rcohull::hulls::{rco_oracle, LatticeSet};
use rcohull::laminate::{check_hi, CertificateBudget, LaminateError, OpenSet};
use rcohull::matcore::singular_values;
use rcohull::pam::PiecewiseAffineMap;
use rcohull::solver::{oscillate, solve, OscillationSpec, SolveError, WalkerDecomposer};
use rcohull::tol::REL_TOL;
use rcohull::walker::{path_to_chain, walk, FiberProposer, GenericProposer, KirchheimProposer, Proposer, WalkCaps};
use thiserror::Error;

use output::{
    emit, write_json, write_mesh, CheckRecord, ExportRecord, LaminateRecord, MergeRecord, OracleRecord, SolveRecord, VerdictRecord, WalkRecord,
};
use scenario::{rows, ProposerSpec, Scenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Inconclusive(_) => 3,
            Self::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rcohull", version, about = "Rank-one convex hulls, laminates and piecewise-affine relaxation")]
pub struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Relative tolerance of predicates and rank-one tests.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Progress on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hull queries.
    #[command(subcommand)]
    Hull(HullCommand),
    /// Laminate chains.
    #[command(subcommand)]
    Laminate(LaminateCommand),
    /// Rank-one walks from the scenario points into `B_δ(E)`.
    Walk,
    /// Iterative refinement from the boundary data; writes report and mesh.
    Solve,
    /// Mesh CSV of the oscillation (or of the boundary map) on the domain.
    Export,
}

#[derive(Debug, Subcommand)]
pub enum HullCommand {
    /// Closure and strict verdicts with margins for the scenario points.
    Check,
    /// Lattice closure against the closed form.
    Oracle,
}

#[derive(Debug, Subcommand)]
pub enum LaminateCommand {
    /// H_I witness and outside mass of the scenario chain.
    Verify,
}

struct Ctx {
    scenario: Scenario,
    out: Option<PathBuf>,
    seed: u64,
    tol: f64,
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self.out.as_deref().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rcohull: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.scenario.as_ref().ok_or_else(|| CliError::Validation("--scenario is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::parse(&text)?;
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Validation("--tol must lie in (0, 1)".into()));
        }
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    let ctx = Ctx { seed: cli.seed.unwrap_or(scenario.seed), scenario, out: cli.out.clone(), tol: cli.tol.unwrap_or(REL_TOL), verbose: cli.verbose };
    ctx.log(format!("scenario {} (seed {})", ctx.scenario.name, ctx.seed));
    match &cli.command {
        Command::Hull(HullCommand::Check) => hull_check(&ctx),
        Command::Hull(HullCommand::Oracle) => hull_oracle(&ctx),
        Command::Laminate(LaminateCommand::Verify) => laminate_verify(&ctx),
        Command::Walk => walk_points(&ctx),
        Command::Solve => run_solve(&ctx),
        Command::Export => export(&ctx),
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn verdict(v: rcohull::Verdict) -> VerdictRecord {
    VerdictRecord { accepted: v.accepted, margin: v.margin, binding: v.binding.to_string() }
}

fn hull_check(ctx: &Ctx) -> Result<(), CliError> {
    let closure = ctx.scenario.predicate()?.with_tol(ctx.tol);
    let strict = closure.interior();
    let mut records = Vec::new();
    for p in ctx.scenario.points()? {
        let c = closure.evaluate(&p).map_err(|e| CliError::Validation(e.to_string()))?;
        let s = strict.evaluate(&p).map_err(|e| CliError::Validation(e.to_string()))?;
        records.push(CheckRecord { point: rows(&p), singular_values: singular_values(&p).values().to_vec(), closure: verdict(c), strict: verdict(s) });
    }
    emit(&records, ctx.out.as_deref(), "hull_check.json")
}

fn hull_oracle(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.scenario.spec()?.ok_or_else(|| CliError::Validation("the oracle needs a singular-value set".into()))?;
    let closed = ctx.scenario.predicate()?.with_tol(ctx.tol);
    let o = &ctx.scenario.oracle;
    let lattice = LatticeSet::from_spec(&spec, o.h, o.box_half).map_err(|e| CliError::Validation(e.to_string()))?;
    ctx.log(format!("lattice seed set: {} points", lattice.len()));
    let hull = rco_oracle(&lattice, o.max_iter);
    let mut rejected = Vec::new();
    for m in hull.matrices() {
        if !closed.accepts(&m).map_err(internal)? {
            rejected.push(m);
        }
    }
    let record = OracleRecord {
        h: o.h,
        box_half: o.box_half,
        lattice_points: lattice.len(),
        oracle_points: hull.len(),
        converged: hull.converged(),
        truncated: hull.truncated(),
        rejected_by_closed_form: rejected.len(),
        examples: rejected.iter().take(5).map(rows).collect(),
    };
    emit(&record, ctx.out.as_deref(), "hull_oracle.json")?;
    if !record.converged {
        return Err(CliError::Inconclusive(format!("oracle did not converge in {} rounds", o.max_iter)));
    }
    if record.rejected_by_closed_form > 0 {
        return Err(CliError::Inconclusive(format!("{} oracle points outside the closed form", record.rejected_by_closed_form)));
    }
    Ok(())
}

fn open_set_or_everything(ctx: &Ctx) -> Result<OpenSet, CliError> {
    if ctx.scenario.hull.is_some() {
        ctx.scenario.interior()
    } else {
        Ok(OpenSet::everything())
    }
}

fn laminate_verify(ctx: &Ctx) -> Result<(), CliError> {
    let chain = ctx.scenario.chain()?;
    let u = open_set_or_everything(ctx)?;
    let e = ctx.scenario.target()?;
    let eps = ctx.scenario.walk.delta;
    let outside = chain.outside_mass(&e, eps).map_err(internal)?;
    let (witness, failure) = match check_hi(&chain, &u, ctx.tol) {
        Ok(w) => (Some(w.steps.iter().map(|s| MergeRecord { i: s.i, j: s.j, weight: s.weight, matrix: rows(&s.matrix) }).collect()), None),
        Err(e @ (LaminateError::NoWitness | LaminateError::CapExceeded { .. } | LaminateError::BudgetExceeded(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(internal(e)),
    };
    let record = LaminateRecord { barycenter: rows(&chain.barycenter()), atoms: chain.len(), witness, failure: failure.clone(), eps, outside_mass: outside };
    emit(&record, ctx.out.as_deref(), "laminate_verify.json")?;
    match failure {
        Some(f) => Err(CliError::Inconclusive(f)),
        None => Ok(()),
    }
}

fn proposer(ctx: &Ctx, n: usize) -> Result<Box<dyn Proposer>, CliError> {
    Ok(match &ctx.scenario.walk.proposer {
        ProposerSpec::Generic => Box::new(GenericProposer::new(n, ctx.seed)),
        ProposerSpec::Fiber { targets } => Box::new(FiberProposer::new(targets)),
        ProposerSpec::Kirchheim => Box::new(KirchheimProposer::new(ctx.scenario.kirchheim()?).with_delta(ctx.scenario.walk.delta)),
    })
}

fn walk_points(ctx: &Ctx) -> Result<(), CliError> {
    let e = ctx.scenario.target()?;
    let int_k = ctx.scenario.interior()?;
    let n = ctx.scenario.n()?;
    let caps = WalkCaps { max_steps: ctx.scenario.walk.max_steps, rank_tol: ctx.tol, ..WalkCaps::default() };
    let mut records = Vec::new();
    let mut failed = 0;
    for xi in ctx.scenario.points()? {
        let mut prop = proposer(ctx, n)?;
        let rec = match walk(&xi, &int_k, &e, ctx.scenario.walk.delta, prop.as_mut(), &caps) {
            Ok(path) => WalkRecord {
                start: rows(&xi),
                steps: path.steps.iter().map(rows).collect(),
                end: Some(rows(&path.end())),
                final_distance: Some(path.final_distance),
                weights: path_to_chain(&path).atoms().iter().map(|a| a.weight).collect(),
                failure: None,
            },
            Err(err) => {
                failed += 1;
                WalkRecord { start: rows(&xi), steps: Vec::new(), end: None, final_distance: None, weights: Vec::new(), failure: Some(err.to_string()) }
            }
        };
        ctx.log(format!("walk from point {}: {} steps", records.len(), rec.steps.len()));
        records.push(rec);
    }
    emit(&records, ctx.out.as_deref(), "walk.json")?;
    if failed > 0 {
        return Err(CliError::Inconclusive(format!("{failed} of {} walks failed", records.len())));
    }
    Ok(())
}

fn solve_error(e: SolveError) -> CliError {
    match e {
        SolveError::Precondition(_)
        | SolveError::Schedule
        | SolveError::BadTolerance(_)
        | SolveError::OutsideU(_)
        | SolveError::NotRankOne(_)
        | SolveError::BadWeight(_)
        | SolveError::BaseGradient(_)
        | SolveError::Auxiliary => CliError::Validation(e.to_string()),
        SolveError::CellCap(_) | SolveError::Decomposition(_) | SolveError::Witness(_) => CliError::Inconclusive(e.to_string()),
        _ => internal(e),
    }
}

fn run_solve(ctx: &Ctx) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let phi = s.boundary()?;
    let start = PiecewiseAffineMap::affine(s.domain()?, phi).map_err(|e| CliError::Validation(e.to_string()))?;
    let e = s.target()?;
    let int_k = s.interior()?;
    let mut prop = proposer(ctx, 2)?;
    let mut dec = WalkerDecomposer { family: None, e: e.clone(), int_k: int_k.clone(), proposer: prop.as_mut(), budget: CertificateBudget::default() };
    let (u, report) = solve(&start, &e, &int_k, &mut dec, &s.refinement.config()).map_err(solve_error)?;
    for (k, r) in report.rounds.iter().enumerate() {
        ctx.log(format!("round {k}: eps {:.3e} integral {:.4e} cells {}", r.epsilon, r.dist_integral, r.cells));
    }
    let dir = ctx.out_dir()?;
    let record = SolveRecord::new(&s.name, ctx.seed, &report, u.boundary_defect(&phi), u.len());
    write_json(&dir.join(&s.outputs.report), &record)?;
    write_mesh(&dir.join(&s.outputs.mesh), &u.rows(&e).map_err(internal)?)?;
    emit(&record, None, "")?;
    if !report.converged {
        return Err(CliError::Inconclusive(format!("no convergence: {}", record.diagnosis.as_deref().unwrap_or("unknown"))));
    }
    Ok(())
}

fn export(ctx: &Ctx) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let domain = s.domain()?;
    let e = s.target()?;
    let (u, phi) = match &s.oscillation {
        Some(o) => {
            let spec = OscillationSpec::new(scenario::matrix(&o.a)?, scenario::matrix(&o.b)?, o.t, o.eps, s.boundary.as_ref().map_or([0.0; 2], |b| b.offset))
                .map_err(solve_error)?;
            (oscillate(&spec, &domain).map_err(solve_error)?.map, spec.phi)
        }
        None => {
            let phi = s.boundary()?;
            (PiecewiseAffineMap::affine(domain, phi).map_err(|e| CliError::Validation(e.to_string()))?, phi)
        }
    };
    let dir = ctx.out_dir()?;
    let record = ExportRecord {
        scenario: s.name.clone(),
        cells: u.len(),
        area: u.domain().area(),
        dist_integral: u.dist_integral(&e).map_err(internal)?,
        sup_grad: u.max_gradient_norm(),
        boundary_defect: u.boundary_defect(&phi),
    };
    write_json(&dir.join(&s.outputs.report), &record)?;
    write_mesh(&dir.join(&s.outputs.mesh), &u.rows(&e).map_err(internal)?)?;
    emit(&record, None, "")
}
