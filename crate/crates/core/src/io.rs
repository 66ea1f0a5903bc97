//! JSON file formats: problems, hidden parameters, gains, reports.
//!
//! Matrices are arrays of row arrays. Written numbers use scientific
//! notation with 17 significant digits, which round-trips every `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lfr::{
    build_example_plant, BasePlant, ControllerGain, Interval, LfrError, LfrPlant, Matrix, PlantBlocks, Problem,
    UncertaintyBox, UncertaintyStructure,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{context}: line {line}, column {column}: {message}")]
    Syntax { context: String, line: usize, column: usize, message: String },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("{location}: {source}")]
    Model { location: String, source: LfrError },
}

impl IoError {
    fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        IoError::Invalid { location: location.into(), message: message.into() }
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct PlantRows {
    pub A: Option<Rows>,
    pub B1: Option<Rows>,
    pub B2: Option<Rows>,
    pub B3: Option<Rows>,
    pub C1: Option<Rows>,
    pub D11: Option<Rows>,
    pub D12: Option<Rows>,
    pub D13: Option<Rows>,
    pub C2: Option<Rows>,
    pub D21: Option<Rows>,
    pub D22: Option<Rows>,
    pub D23: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyBlock {
    pub size: usize,
    pub interval: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_plant: Option<PlantRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<Vec<UncertaintyBlock>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecretFile {
    pub delta0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GainFile {
    pub F: Rows,
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, context: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Syntax {
        context: context.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Builds a matrix from rows, rejecting ragged or non-finite data.
fn matrix(rows: &Rows, location: &str) -> Result<Matrix, IoError> {
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(IoError::invalid(location, format!("row {i} has {} entries, expected {ncols}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(IoError::invalid(location, format!("entry ({i}, {j}) is not finite")));
        }
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

struct Dims {
    nx: usize,
    nw: usize,
    nd: usize,
    nu: usize,
    nz: usize,
    ne: usize,
}

/// Block dimensions implied by the given blocks; missing sizes are zero.
fn infer_dims(p: &PlantRows, q: usize) -> Result<Dims, IoError> {
    let shape = |r: &Option<Rows>| r.as_ref().map(|r| (r.len(), r.first().map_or(0, Vec::len)));
    let a = shape(&p.A).ok_or_else(|| IoError::invalid("plant.A", "missing"))?;
    let first = |cands: &[Option<usize>]| cands.iter().flatten().next().copied().unwrap_or(0);
    let nd = first(&[shape(&p.B2).map(|s| s.1), shape(&p.D12).map(|s| s.1), shape(&p.D22).map(|s| s.1)]);
    let nu = first(&[shape(&p.B3).map(|s| s.1), shape(&p.D13).map(|s| s.1), shape(&p.D23).map(|s| s.1)]);
    let ne = first(&[
        shape(&p.C2).map(|s| s.0),
        shape(&p.D21).map(|s| s.0),
        shape(&p.D22).map(|s| s.0),
        shape(&p.D23).map(|s| s.0),
    ]);
    Ok(Dims { nx: a.0, nw: q, nd, nu, nz: q, ne })
}

fn block(r: &Option<Rows>, name: &str, rows: usize, cols: usize, prefix: &str) -> Result<Matrix, IoError> {
    let location = format!("{prefix}.{name}");
    match r {
        None => Ok(Matrix::zeros(rows, cols)),
        Some(v) => {
            let m = matrix(v, &location)?;
            let empty_ok = v.is_empty() && (rows == 0 || cols == 0);
            if m.shape() != (rows, cols) && !empty_ok {
                return Err(IoError::invalid(
                    location,
                    format!("expected {rows}x{cols}, got {}x{}", m.nrows(), m.ncols()),
                ));
            }
            Ok(if empty_ok { Matrix::zeros(rows, cols) } else { m })
        }
    }
}

fn structure_and_box(blocks: &[UncertaintyBlock]) -> Result<(UncertaintyStructure, UncertaintyBox), IoError> {
    let mut sizes = Vec::new();
    let mut intervals = Vec::new();
    for (k, b) in blocks.iter().enumerate() {
        let location = format!("uncertainty[{k}]");
        if b.size == 0 {
            return Err(IoError::invalid(location, "size must be positive"));
        }
        let iv = Interval::new(b.interval[0], b.interval[1]).map_err(|source| IoError::Model { location, source })?;
        sizes.push(b.size);
        intervals.push(iv);
    }
    let structure =
        UncertaintyStructure::new(sizes).map_err(|source| IoError::Model { location: "uncertainty".into(), source })?;
    let bbox =
        UncertaintyBox::new(intervals).map_err(|source| IoError::Model { location: "uncertainty".into(), source })?;
    Ok((structure, bbox))
}

/// Parses and validates a problem description.
pub fn parse_problem(text: &str) -> Result<Problem, IoError> {
    let file: ProblemFile = parse(text, "problem")?;
    match (&file.plant, &file.base_plant) {
        (Some(_), Some(_)) => Err(IoError::invalid("problem", "give either `plant` or `base_plant`, not both")),
        (None, None) => Err(IoError::invalid("problem", "missing `plant` or `base_plant`")),
        (Some(p), None) => {
            let blocks = file.uncertainty.clone().unwrap_or_default();
            let (structure, bbox) = structure_and_box(&blocks)?;
            let d = infer_dims(p, structure.total())?;
            let pre = "plant";
            let plant = LfrPlant::new(PlantBlocks {
                A: block(&p.A, "A", d.nx, d.nx, pre)?,
                B1: block(&p.B1, "B1", d.nx, d.nw, pre)?,
                B2: block(&p.B2, "B2", d.nx, d.nd, pre)?,
                B3: block(&p.B3, "B3", d.nx, d.nu, pre)?,
                C1: block(&p.C1, "C1", d.nz, d.nx, pre)?,
                D11: block(&p.D11, "D11", d.nz, d.nw, pre)?,
                D12: block(&p.D12, "D12", d.nz, d.nd, pre)?,
                D13: block(&p.D13, "D13", d.nz, d.nu, pre)?,
                C2: block(&p.C2, "C2", d.ne, d.nx, pre)?,
                D21: block(&p.D21, "D21", d.ne, d.nw, pre)?,
                D22: block(&p.D22, "D22", d.ne, d.nd, pre)?,
                D23: block(&p.D23, "D23", d.ne, d.nu, pre)?,
            })
            .map_err(|source| IoError::Model { location: pre.into(), source })?;
            Problem::new(plant, structure, bbox).map_err(|source| IoError::Model { location: "problem".into(), source })
        }
        (None, Some(p)) => {
            let pre = "base_plant";
            for (name, present) in
                [("B1", &p.B1), ("C1", &p.C1), ("D11", &p.D11), ("D12", &p.D12), ("D13", &p.D13), ("D21", &p.D21)]
            {
                if present.is_some() {
                    return Err(IoError::invalid(format!("{pre}.{name}"), "not allowed in base-plant mode"));
                }
            }
            let d = infer_dims(p, 0)?;
            let base = BasePlant {
                A: block(&p.A, "A", d.nx, d.nx, pre)?,
                B2: block(&p.B2, "B2", d.nx, d.nd, pre)?,
                B3: block(&p.B3, "B3", d.nx, d.nu, pre)?,
                C2: block(&p.C2, "C2", d.ne, d.nx, pre)?,
                D22: block(&p.D22, "D22", d.ne, d.nd, pre)?,
                D23: block(&p.D23, "D23", d.ne, d.nu, pre)?,
            };
            let problem =
                build_example_plant(base).map_err(|source| IoError::Model { location: pre.into(), source })?;
            match &file.uncertainty {
                None => Ok(problem),
                Some(blocks) => {
                    let (structure, bbox) = structure_and_box(blocks)?;
                    if &structure != problem.structure() {
                        return Err(IoError::invalid("uncertainty", "base-plant mode uses three scalar blocks"));
                    }
                    problem.with_box(bbox).map_err(|source| IoError::Model { location: "uncertainty".into(), source })
                }
            }
        }
    }
}

pub fn load_problem(path: &Path) -> Result<Problem, IoError> {
    parse_problem(&read(path)?).map_err(|e| match e {
        IoError::Syntax { line, column, message, .. } => {
            IoError::Syntax { context: path.display().to_string(), line, column, message }
        }
        other => other,
    })
}

/// The problem in full-plant form.
pub fn problem_file(problem: &Problem) -> ProblemFile {
    let b = problem.plant().blocks();
    let uncertainty = problem
        .structure()
        .sizes()
        .iter()
        .zip(problem.uncertainty_box().intervals())
        .map(|(&size, iv)| UncertaintyBlock { size, interval: [iv.lo, iv.hi] })
        .collect();
    ProblemFile {
        plant: Some(PlantRows {
            A: Some(rows_of(&b.A)),
            B1: Some(rows_of(&b.B1)),
            B2: Some(rows_of(&b.B2)),
            B3: Some(rows_of(&b.B3)),
            C1: Some(rows_of(&b.C1)),
            D11: Some(rows_of(&b.D11)),
            D12: Some(rows_of(&b.D12)),
            D13: Some(rows_of(&b.D13)),
            C2: Some(rows_of(&b.C2)),
            D21: Some(rows_of(&b.D21)),
            D22: Some(rows_of(&b.D22)),
            D23: Some(rows_of(&b.D23)),
        }),
        base_plant: None,
        uncertainty: Some(uncertainty),
    }
}

pub fn parse_secret(text: &str, problem: &Problem) -> Result<Vec<f64>, IoError> {
    let s: SecretFile = parse(text, "secret")?;
    let m = problem.uncertainty_box().dim();
    if s.delta0.len() != m {
        return Err(IoError::invalid("secret.delta0", format!("expected {m} values, got {}", s.delta0.len())));
    }
    if !problem.uncertainty_box().contains(&s.delta0) {
        return Err(IoError::invalid("secret.delta0", "outside the declared uncertainty box"));
    }
    Ok(s.delta0)
}

pub fn load_secret(path: &Path, problem: &Problem) -> Result<Vec<f64>, IoError> {
    parse_secret(&read(path)?, problem)
}

pub fn parse_gain(text: &str) -> Result<ControllerGain, IoError> {
    let g: GainFile = parse(text, "gain")?;
    Ok(ControllerGain::new(matrix(&g.F, "gain.F")?))
}

pub fn load_gain(path: &Path) -> Result<ControllerGain, IoError> {
    parse_gain(&read(path)?)
}

pub fn gain_file(gain: &ControllerGain) -> GainFile {
    GainFile { F: rows_of(gain.matrix()) }
}

/// Serializes `value` as indented JSON with bit-exact numbers.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFormatter::default());
    value.serialize(&mut ser).expect("in-memory write");
    String::from_utf8(out).expect("utf-8")
}

/// Pretty printer that emits floats with 17 significant digits.
#[derive(Default)]
struct ExactFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for ExactFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    fs::write(path, to_json(value) + "\n").map_err(|source| IoError::Read { path: path.display().to_string(), source })
}
