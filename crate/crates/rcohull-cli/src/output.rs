//! Output records and their readers. Floats are written in Rust's shortest
//! round-trip form, so reading a file back gives the same values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rcohull::pam::MeshRow;
use rcohull::solver::{Diagnosis, RoundLog, SolveReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::scenario::Rows;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub accepted: bool,
    pub margin: f64,
    pub binding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub point: Rows,
    pub singular_values: Vec<f64>,
    pub closure: VerdictRecord,
    pub strict: VerdictRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub h: f64,
    pub box_half: f64,
    pub lattice_points: usize,
    pub oracle_points: usize,
    pub converged: bool,
    pub truncated: bool,
    /// Oracle points the closed form rejects (should be empty).
    pub rejected_by_closed_form: usize,
    pub examples: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub matrix: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateRecord {
    pub barycenter: Rows,
    pub atoms: usize,
    pub witness: Option<Vec<MergeRecord>>,
    pub failure: Option<String>,
    pub eps: f64,
    pub outside_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkRecord {
    pub start: Rows,
    pub steps: Vec<Rows>,
    pub end: Option<Rows>,
    pub final_distance: Option<f64>,
    /// Weights of the chain built from the walk.
    pub weights: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub epsilon: f64,
    pub delta: f64,
    pub cells: usize,
    pub control_cells: usize,
    pub dist_integral: f64,
    pub sup_grad: f64,
    pub rebuilt: usize,
    pub failures: usize,
}

impl From<&RoundLog> for RoundRecord {
    fn from(r: &RoundLog) -> Self {
        Self {
            epsilon: r.epsilon,
            delta: r.delta,
            cells: r.cells,
            control_cells: r.control_cells,
            dist_integral: r.dist_integral,
            sup_grad: r.sup_grad,
            rebuilt: r.rebuilt,
            failures: r.failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub scenario: String,
    pub seed: u64,
    pub initial: f64,
    pub final_integral: f64,
    pub converged: bool,
    pub diagnosis: Option<String>,
    pub boundary_defect: f64,
    pub cells: usize,
    pub rounds: Vec<RoundRecord>,
}

impl SolveRecord {
    pub fn new(scenario: &str, seed: u64, r: &SolveReport, boundary_defect: f64, cells: usize) -> Self {
        Self {
            scenario: scenario.into(),
            seed,
            initial: r.initial,
            final_integral: r.final_integral(),
            converged: r.converged,
            diagnosis: r.diagnosis.map(|d| {
                match d {
                    Diagnosis::WalkerFailure => "walker_failure",
                    Diagnosis::SlackFloor => "slack_floor",
                    Diagnosis::CellCap => "cell_cap",
                    Diagnosis::RoundLimit => "round_limit",
                }
                .to_string()
            }),
            boundary_defect,
            cells,
            rounds: r.rounds.iter().map(RoundRecord::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub scenario: String,
    pub cells: usize,
    pub area: f64,
    pub dist_integral: f64,
    pub sup_grad: f64,
    pub boundary_defect: f64,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(|e| io(path, e))?;
    serde_json::from_str(&text).map_err(|e| io(path, e))
}

pub fn write_mesh(path: &Path, rows: &[MeshRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(MeshRow::HEADER).map_err(|e| io(path, e))?;
    for r in rows {
        w.write_record(r.fields()).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn read_mesh(path: &Path) -> Result<Vec<MeshRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    let header = r.headers().map_err(|e| io(path, e))?.clone();
    if header.iter().ne(MeshRow::HEADER) {
        return Err(io(path, "unexpected header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io(path, e))?;
        let f = |i: usize| -> Result<f64, CliError> { rec[i].parse().map_err(|e| io(path, e)) };
        out.push(MeshRow {
            cell_id: rec[0].parse().map_err(|e| io(path, e))?,
            vertices: [[f(1)?, f(2)?], [f(3)?, f(4)?], [f(5)?, f(6)?]],
            gradient: [f(7)?, f(8)?, f(9)?, f(10)?],
            dist_to_e: f(11)?,
        });
    }
    Ok(out)
}

/// JSON to stdout, and to `<out>/<name>` when an output directory is set.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>, name: &str) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        // a closed reader (`| head`) is not an error
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(CliError::Internal(e.to_string())),
        _ => {}
    }
    if let Some(dir) = out {
        write_json(&dir.join(name), value)?;
    }
    Ok(())
}
