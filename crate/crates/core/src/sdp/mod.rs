//! Linear semidefinite programs in LMI form.
//!
//! A problem is a linear objective over scalar decisions together with a
//! list of blocks `F_i(x) - m_i I ⪰ 0`, where each `F_i` is an affine
//! symmetric matrix expression. Structured matrix variables (symmetric,
//! skew-symmetric, full) are registered through [`SdpProblem::add_variable`]
//! and expand into their free scalar components, so no equality
//! constraints are needed.
//!
//! The numerical backend is the Clarabel interior-point solver; every
//! optimal point is re-audited against the original blocks.

mod backend;
mod expr;

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::AffineExpr;

use crate::lfr::Matrix;

/// Relative tolerance of the post-solve eigenvalue audit.
pub const AUDIT_TOL: f64 = 1e-7;
/// Relative strictness margin used when strict LMIs are realized numerically.
pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("LMI block '{name}' is not square ({rows}x{cols})")]
    NotSquare { name: String, rows: usize, cols: usize },
    #[error("LMI block '{name}' is not symmetric (asymmetry {asymmetry:e})")]
    Asymmetric { name: String, asymmetry: f64 },
    #[error("objective must be a 1x1 expression")]
    ObjectiveShape,
    #[error("problem has no constraints")]
    Empty,
    #[error("solver setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Scalar,
    Symmetric(usize),
    Skew(usize),
    Full(usize, usize),
}

impl VarKind {
    pub fn free_components(&self) -> usize {
        match *self {
            VarKind::Scalar => 1,
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Skew(n) => n * n.saturating_sub(1) / 2,
            VarKind::Full(m, n) => m * n,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Scalar => (1, 1),
            VarKind::Symmetric(n) | VarKind::Skew(n) => (n, n),
            VarKind::Full(m, n) => (m, n),
        }
    }
}

/// Handle to a registered (possibly structured) variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variable {
    id: usize,
    kind: VarKind,
    offset: usize,
}

impl Variable {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn kind(&self) -> VarKind {
        self.kind
    }

    /// The variable as an affine expression.
    pub fn expr(&self) -> AffineExpr {
        let (r, c) = self.kind.shape();
        let mut terms = BTreeMap::new();
        let mut idx = self.offset;
        let mut push = |entries: &[(usize, usize, f64)]| {
            let mut m = Matrix::zeros(r, c);
            for &(i, j, v) in entries {
                m[(i, j)] = v;
            }
            terms.insert(idx, m);
            idx += 1;
        };
        match self.kind {
            VarKind::Scalar => push(&[(0, 0, 1.0)]),
            VarKind::Symmetric(n) => {
                for j in 0..n {
                    for i in 0..=j {
                        if i == j {
                            push(&[(i, i, 1.0)]);
                        } else {
                            push(&[(i, j, 1.0), (j, i, 1.0)]);
                        }
                    }
                }
            }
            VarKind::Skew(n) => {
                for j in 0..n {
                    for i in 0..j {
                        push(&[(i, j, 1.0), (j, i, -1.0)]);
                    }
                }
            }
            VarKind::Full(m, n) => {
                for i in 0..m {
                    for j in 0..n {
                        push(&[(i, j, 1.0)]);
                    }
                }
            }
        }
        AffineExpr::from_terms(r, c, terms)
    }
}

#[derive(Debug, Clone)]
struct VariableInfo {
    name: String,
    var: Variable,
}

#[derive(Debug, Clone)]
pub(crate) struct LmiBlock {
    pub(crate) name: String,
    pub(crate) expr: AffineExpr,
    pub(crate) margin: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    n_scalars: usize,
    variables: Vec<VariableInfo>,
    blocks: Vec<LmiBlock>,
    objective: BTreeMap<usize, f64>,
    objective_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8 }
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, kind: VarKind) -> Variable {
        let var = Variable { id: self.variables.len(), kind, offset: self.n_scalars };
        self.n_scalars += kind.free_components();
        self.variables.push(VariableInfo { name: name.into(), var });
        var
    }

    pub fn num_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Records `expr - margin·I ⪰ 0`. Returns the block index.
    pub fn add_lmi(&mut self, name: impl Into<String>, expr: AffineExpr, margin: f64) -> Result<usize, SdpError> {
        let name = name.into();
        let (rows, cols) = expr.shape();
        if rows != cols {
            return Err(SdpError::NotSquare { name, rows, cols });
        }
        let asymmetry = expr.max_asymmetry();
        if asymmetry > 1e-10 * (1.0 + expr.data_scale()) {
            return Err(SdpError::Asymmetric { name, asymmetry });
        }
        if rows == 0 {
            return Ok(self.blocks.len());
        }
        self.blocks.push(LmiBlock { name, expr: expr.symmetrized(), margin });
        Ok(self.blocks.len() - 1)
    }

    /// Sets the objective `min expr` for a 1x1 expression.
    pub fn minimize(&mut self, expr: &AffineExpr) -> Result<(), SdpError> {
        if expr.shape() != (1, 1) {
            return Err(SdpError::ObjectiveShape);
        }
        self.objective = expr.terms().map(|(i, m)| (i, m[(0, 0)])).collect();
        self.objective_offset = expr.constant_part()[(0, 0)];
        Ok(())
    }

    pub fn solve(&self) -> Result<SdpSolution, SdpError> {
        self.solve_with(&SdpOptions::default())
    }

    pub fn solve_with(&self, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::Empty);
        }
        let raw = backend::solve(self, opts)?;
        Ok(self.finish(raw))
    }

    fn finish(&self, raw: backend::RawSolution) -> SdpSolution {
        let audit: Vec<BlockAudit> = self
            .blocks
            .iter()
            .map(|b| {
                let v = b.expr.evaluate(&raw.x);
                let n = v.nrows();
                let shifted = &v - Matrix::identity(n, n) * b.margin;
                let min_eig = shifted.symmetric_eigenvalues().min();
                BlockAudit { name: b.name.clone(), min_eigenvalue: min_eig, scale: v.amax() }
            })
            .collect();
        let objective = self.objective_offset + self.objective.iter().map(|(&i, &c)| c * raw.x[i]).sum::<f64>();
        let status = match raw.status {
            backend::RawStatus::Solved => match audit.iter().find(|a| !a.passes()) {
                None => SdpStatus::Optimal,
                Some(a) => SdpStatus::NumericalFailure(format!(
                    "block '{}' fails audit: min eigenvalue {:e} (scale {:e})",
                    a.name, a.min_eigenvalue, a.scale
                )),
            },
            backend::RawStatus::Infeasible => SdpStatus::Infeasible,
            backend::RawStatus::Unbounded => SdpStatus::Unbounded,
            backend::RawStatus::Failed(msg) => SdpStatus::NumericalFailure(msg),
        };
        SdpSolution { status, objective, x: raw.x, audit, iterations: raw.iterations, solve_time: raw.solve_time }
    }

    /// Writes the problem as sparse triplets, one line per nonzero of the
    /// upper triangle: `block row col var coefficient`. Constants use
    /// variable id 0; scalar decision `k` uses id `k + 1`. Objective lines
    /// use block id `obj`.
    pub fn write_triplets<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# scalars {} blocks {}", self.n_scalars, self.blocks.len())?;
        for info in &self.variables {
            writeln!(
                w,
                "# variable {} {:?} scalars {}..{}",
                info.name,
                info.var.kind,
                info.var.offset + 1,
                info.var.offset + info.var.kind.free_components()
            )?;
        }
        for (&i, &c) in &self.objective {
            writeln!(w, "obj 0 0 {} {:.17e}", i + 1, c)?;
        }
        for (k, b) in self.blocks.iter().enumerate() {
            let n = b.expr.nrows();
            writeln!(w, "# block {} '{}' size {} margin {:.17e}", k, b.name, n, b.margin)?;
            let mut emit = |var: usize, m: &Matrix| -> io::Result<()> {
                for j in 0..n {
                    for i in 0..=j {
                        let v = m[(i, j)];
                        if v != 0.0 {
                            writeln!(w, "{k} {i} {j} {var} {v:.17e}")?;
                        }
                    }
                }
                Ok(())
            };
            emit(0, b.expr.constant_part())?;
            for (i, m) in b.expr.terms() {
                emit(i + 1, m)?;
            }
        }
        Ok(())
    }

    pub(crate) fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub(crate) fn objective_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_scalars];
        for (&i, &v) in &self.objective {
            c[i] = v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAudit {
    pub name: String,
    /// Smallest eigenvalue of `F_i(x) - m_i I`.
    pub min_eigenvalue: f64,
    /// Largest absolute entry of `F_i(x)`.
    pub scale: f64,
}

impl BlockAudit {
    pub fn tolerance(&self) -> f64 {
        AUDIT_TOL * (1.0 + self.scale)
    }

    pub fn passes(&self) -> bool {
        self.min_eigenvalue >= -self.tolerance()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub objective: f64,
    x: Vec<f64>,
    pub audit: Vec<BlockAudit>,
    pub iterations: u32,
    pub solve_time: f64,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    pub fn scalars(&self) -> &[f64] {
        &self.x
    }

    pub fn value(&self, v: &Variable) -> Matrix {
        v.expr().evaluate(&self.x)
    }

    pub fn scalar(&self, v: &Variable) -> f64 {
        self.value(v)[(0, 0)]
    }

    pub fn eval(&self, e: &AffineExpr) -> Matrix {
        e.evaluate(&self.x)
    }
}
