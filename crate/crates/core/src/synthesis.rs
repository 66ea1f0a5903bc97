//! Controller synthesis by LMIs.
//!
//! All conditions are written in the dual (state-feedback) form with
//! `Y ≻ 0`, `M = F Y` and the closed-loop products `Ā = AY + B3 M`,
//! `C̄1 = C1 Y + D13 M`, `C̄2 = C2 Y + D23 M`. For an interconnection with
//! closed-loop data `(Ā, C̄, B, D)` and a multiplier `Q` the generic block is
//!
//! ```text
//! [ Ā + Āᵀ  C̄ᵀ ]   [ 0   B ]     [ 0   B ]ᵀ
//! [ C̄       0  ] + [ -I  D ] Q   [ -I  D ]   ≺ 0
//! ```
//!
//! where `Q` is positive on the transposed graph `[-Δᵀ; I]` of the
//! uncertainty it covers. Robust stability uses the uncertainty multiplier
//! on the full box; worst-case performance augments the multiplier on a
//! cell with the performance block `diag(-g I, I)`, `g = γ²`.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lfr::{ControllerGain, LfrError, LfrPlant, Matrix, Problem, UncertaintyBox, UncertaintyStructure};
use crate::sdp::{AffineExpr, BlockAudit, SdpError, SdpProblem, SdpSolution, SdpStatus, VarKind, Variable};

/// Lower bound enforced on the `D` part of every multiplier.
pub const D_FLOOR: f64 = 1e-6;
/// Relative strictness margin of the synthesis LMIs.
pub const LMI_MARGIN: f64 = 1e-6;
/// `Y` condition numbers above this value are reported.
pub const Y_CONDITION_WARN: f64 = 1e10;
/// Bound `Y ⪯ κ·m·I`, relative to the strictness margin `m`, imposed on a
/// second solve when the first returns a numerically indefinite `Y`.
pub const Y_CAP_RATIO: f64 = 1e8;
const Y_NOT_POSITIVE_DEFINITE: &str = "Y is not numerically positive definite";

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Lfr(#[from] LfrError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("invalid synthesis request: {0}")]
    Invalid(String),
}

/// A D/G multiplier for repeated real scalar blocks on the box with
/// centers `c` and radii `r`:
/// `P = [[-D, G - CD], [Gᵀ - DC, (R² - C²) D]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgScaling {
    pub d: Vec<Matrix>,
    pub g: Vec<Matrix>,
    pub c: Vec<f64>,
    pub r: Vec<f64>,
}

impl DgScaling {
    /// `D = I`, `G = 0` on the given box.
    pub fn identity(structure: &UncertaintyStructure, bbox: &UncertaintyBox) -> Self {
        let sizes = structure.sizes();
        Self {
            d: sizes.iter().map(|&q| Matrix::identity(q, q)).collect(),
            g: sizes.iter().map(|&q| Matrix::zeros(q, q)).collect(),
            c: bbox.center(),
            r: bbox.radius(),
        }
    }

    pub fn total(&self) -> usize {
        self.d.iter().map(Matrix::nrows).sum()
    }

    fn diag_of(parts: &[Matrix]) -> Matrix {
        let n = parts.iter().map(Matrix::nrows).sum();
        let mut out = Matrix::zeros(n, n);
        let mut o = 0;
        for p in parts {
            out.view_mut((o, o), p.shape()).copy_from(p);
            o += p.nrows();
        }
        out
    }

    fn scalar_diag(&self, vals: impl Fn(usize) -> f64) -> Matrix {
        let n = self.total();
        let mut out = Matrix::zeros(n, n);
        let mut o = 0;
        for (k, dk) in self.d.iter().enumerate() {
            for i in 0..dk.nrows() {
                out[(o + i, o + i)] = vals(k);
            }
            o += dk.nrows();
        }
        out
    }

    /// The assembled `2q × 2q` multiplier.
    pub fn assemble(&self) -> Matrix {
        let q = self.total();
        let d = Self::diag_of(&self.d);
        let g = Self::diag_of(&self.g);
        let c = self.scalar_diag(|k| self.c[k]);
        let rc = self.scalar_diag(|k| self.r[k] * self.r[k] - self.c[k] * self.c[k]);
        let mut p = Matrix::zeros(2 * q, 2 * q);
        p.view_mut((0, 0), (q, q)).copy_from(&(-&d));
        p.view_mut((0, q), (q, q)).copy_from(&(&g - &c * &d));
        p.view_mut((q, 0), (q, q)).copy_from(&(g.transpose() - &d * &c));
        p.view_mut((q, q), (q, q)).copy_from(&(&rc * &d));
        p
    }

    /// `[-Δᵀ; I]ᵀ P [-Δᵀ; I]` at `Δ = Δ(δ)`.
    pub fn multiplier_quadratic(&self, delta: &[f64]) -> Matrix {
        let q = self.total();
        let dl = self.scalar_diag(|k| delta[k]);
        let mut t = Matrix::zeros(2 * q, q);
        t.view_mut((0, 0), (q, q)).copy_from(&(-dl.transpose()));
        t.view_mut((q, 0), (q, q)).copy_from(&Matrix::identity(q, q));
        t.transpose() * self.assemble() * t
    }
}

/// The cell on which worst-case performance is certified.
#[derive(Debug, Clone, PartialEq)]
pub enum PerfCell {
    Box(UncertaintyBox),
    Point(Vec<f64>),
}

impl PerfCell {
    /// Boxes whose axes are all singletons are treated as points.
    pub fn from_box(bbox: UncertaintyBox) -> Self {
        if bbox.is_singleton() && bbox.dim() > 0 {
            PerfCell::Point(bbox.center())
        } else {
            PerfCell::Box(bbox)
        }
    }

    pub fn contains(&self, delta: &[f64]) -> bool {
        match self {
            PerfCell::Box(b) => b.contains(delta),
            PerfCell::Point(p) => p.iter().zip(delta).all(|(a, b)| a == b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub gain: ControllerGain,
    pub y: Matrix,
    pub m: Matrix,
    pub stability: Option<DgScaling>,
    pub performance: Option<DgScaling>,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisDiagnostics {
    pub status: String,
    pub iterations: u32,
    pub solve_time: f64,
    pub scalars: usize,
    pub blocks: usize,
    /// Smallest audited eigenvalue over all LMI blocks.
    pub min_audit_eigenvalue: f64,
    /// Whether every block passed the solver-side eigenvalue audit.
    pub audit_passed: bool,
    pub y_condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOutcome {
    /// `+∞` when the LMIs are infeasible.
    pub gamma: f64,
    pub gamma_eps: f64,
    pub certificate: Option<Certificate>,
    pub diagnostics: SynthesisDiagnostics,
}

impl SynthesisOutcome {
    pub fn is_feasible(&self) -> bool {
        self.certificate.is_some()
    }

    pub fn gain(&self) -> Option<&ControllerGain> {
        self.certificate.as_ref().map(|c| &c.gain)
    }
}

struct DgVars {
    d: Vec<Variable>,
    g: Vec<Variable>,
    c: Vec<f64>,
    r: Vec<f64>,
    sizes: Vec<usize>,
}

impl DgVars {
    fn new(sdp: &mut SdpProblem, tag: &str, structure: &UncertaintyStructure, bbox: &UncertaintyBox) -> Self {
        let sizes = structure.sizes().to_vec();
        let d = sizes
            .iter()
            .enumerate()
            .map(|(k, &q)| sdp.add_variable(format!("{tag}.D{k}"), VarKind::Symmetric(q)))
            .collect();
        let g =
            sizes.iter().enumerate().map(|(k, &q)| sdp.add_variable(format!("{tag}.G{k}"), VarKind::Skew(q))).collect();
        Self { d, g, c: bbox.center(), r: bbox.radius(), sizes }
    }

    fn add_floor(&self, sdp: &mut SdpProblem, tag: &str) -> Result<(), SdpError> {
        for (k, d) in self.d.iter().enumerate() {
            sdp.add_lmi(format!("{tag}.D{k} floor"), d.expr(), D_FLOOR)?;
        }
        Ok(())
    }

    fn scalar_diag(&self, vals: impl Fn(usize) -> f64) -> Matrix {
        let n: usize = self.sizes.iter().sum();
        let mut out = Matrix::zeros(n, n);
        let mut o = 0;
        for (k, &q) in self.sizes.iter().enumerate() {
            for i in 0..q {
                out[(o + i, o + i)] = vals(k);
            }
            o += q;
        }
        out
    }

    /// `(Q11, Q12, Q21, Q22)`.
    fn quadrants(&self) -> [AffineExpr; 4] {
        let d = AffineExpr::diag(&self.d.iter().map(Variable::expr).collect::<Vec<_>>());
        let g = AffineExpr::diag(&self.g.iter().map(Variable::expr).collect::<Vec<_>>());
        let c = self.scalar_diag(|k| self.c[k]);
        let rc = self.scalar_diag(|k| self.r[k] * self.r[k] - self.c[k] * self.c[k]);
        [-d.clone(), &g - &d.lmul(&c), g.transpose() - d.rmul(&c), d.lmul(&rc)]
    }

    fn expr(&self) -> AffineExpr {
        let [a, b, c, d] = self.quadrants();
        AffineExpr::blocks(&[vec![a, b], vec![c, d]])
    }

    fn value(&self, sol: &SdpSolution) -> DgScaling {
        DgScaling {
            d: self.d.iter().map(|v| sol.value(v)).collect(),
            g: self.g.iter().map(|v| sol.value(v)).collect(),
            c: self.c.clone(),
            r: self.r.clone(),
        }
    }
}

fn scalar_identity(e: &AffineExpr, n: usize) -> AffineExpr {
    let eye = Matrix::identity(n, n);
    let mut out = AffineExpr::constant(&eye * e.constant_part()[(0, 0)]);
    let terms: BTreeMap<usize, Matrix> = e.terms().map(|(i, m)| (i, &eye * m[(0, 0)])).collect();
    out = out + AffineExpr::from_terms(n, n, terms);
    out
}

/// The generic dual block; `q` is ordered as `[outputs | inputs]`.
fn dual_block(ay: &AffineExpr, cy: &AffineExpr, b: &Matrix, d: &Matrix, q: &AffineExpr) -> AffineExpr {
    let nx = ay.nrows();
    let p = cy.nrows();
    let k = b.ncols();
    let first = AffineExpr::blocks(&[vec![ay.herm(), cy.transpose()], vec![cy.clone(), AffineExpr::zeros(p, p)]]);
    let mut outer = Matrix::zeros(nx + p, p + k);
    outer.view_mut((0, p), (nx, k)).copy_from(b);
    outer.view_mut((nx, 0), (p, p)).copy_from(&(-Matrix::identity(p, p)));
    outer.view_mut((nx, p), (p, k)).copy_from(d);
    first + q.congruence(&outer.transpose())
}

/// Numeric counterpart of [`dual_block`].
fn dual_block_value(ay: &Matrix, cy: &Matrix, b: &Matrix, d: &Matrix, q: &Matrix) -> Matrix {
    let nx = ay.nrows();
    let p = cy.nrows();
    let k = b.ncols();
    let mut first = Matrix::zeros(nx + p, nx + p);
    first.view_mut((0, 0), (nx, nx)).copy_from(&(ay + ay.transpose()));
    first.view_mut((0, nx), (nx, p)).copy_from(&cy.transpose());
    first.view_mut((nx, 0), (p, nx)).copy_from(cy);
    let mut outer = Matrix::zeros(nx + p, p + k);
    outer.view_mut((0, p), (nx, k)).copy_from(b);
    outer.view_mut((nx, 0), (p, p)).copy_from(&(-Matrix::identity(p, p)));
    outer.view_mut((nx, p), (p, k)).copy_from(d);
    first + &outer * q * outer.transpose()
}

fn perf_multiplier(unc: Option<[AffineExpr; 4]>, g: &AffineExpr, ne: usize, nd: usize) -> AffineExpr {
    let neg_g = -scalar_identity(g, ne);
    let eye = AffineExpr::identity(nd);
    match unc {
        None => AffineExpr::diag(&[neg_g, eye]),
        Some([a, b, c, d]) => {
            let (qz, qw) = (a.nrows(), d.nrows());
            AffineExpr::blocks(&[
                vec![a, AffineExpr::zeros(qz, ne), b, AffineExpr::zeros(qz, nd)],
                vec![AffineExpr::zeros(ne, qz), neg_g, AffineExpr::zeros(ne, qw), AffineExpr::zeros(ne, nd)],
                vec![c, AffineExpr::zeros(qw, ne), d, AffineExpr::zeros(qw, nd)],
                vec![AffineExpr::zeros(nd, qz), AffineExpr::zeros(nd, ne), AffineExpr::zeros(nd, qw), eye],
            ])
        }
    }
}

fn perf_multiplier_value(unc: Option<&DgScaling>, g: f64, ne: usize, nd: usize) -> Matrix {
    let q = unc.map_or(0, DgScaling::total);
    let n = 2 * q + ne + nd;
    let mut out = Matrix::zeros(n, n);
    if let Some(s) = unc {
        let p = s.assemble();
        let idx = |i: usize| if i < q { i } else { i + ne };
        for i in 0..2 * q {
            for j in 0..2 * q {
                out[(idx(i), idx(j))] = p[(i, j)];
            }
        }
    }
    for i in 0..ne {
        out[(q + i, q + i)] = -g;
    }
    for i in 0..nd {
        out[(2 * q + ne + i, 2 * q + ne + i)] = 1.0;
    }
    out
}

fn stack(top: &Matrix, bottom: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

fn side_by_side(left: &Matrix, right: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

fn plant_scale(plant: &LfrPlant) -> f64 {
    let b = plant.blocks();
    let s = [&b.A, &b.B1, &b.B2, &b.B3, &b.C1, &b.D11, &b.D12, &b.D13, &b.C2, &b.D21, &b.D22, &b.D23]
        .iter()
        .map(|m| m.amax())
        .fold(0.0, f64::max);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Which LMI family to assemble.
#[derive(Clone, Copy)]
enum Kind<'a> {
    Robust { full_box: &'a UncertaintyBox, perf: &'a PerfCell },
    Nominal { delta: &'a [f64] },
}

struct Assembly {
    sdp: SdpProblem,
    y: Variable,
    m: Variable,
    g: Variable,
    stability: Option<DgVars>,
    performance: Option<DgVars>,
}

fn check_channels(plant: &LfrPlant) -> Result<(), SynthesisError> {
    if plant.nd() == 0 || plant.ne() == 0 {
        return Err(SynthesisError::Invalid("performance channel d -> e must be nonempty".into()));
    }
    if plant.nx() == 0 {
        return Err(SynthesisError::Invalid("plant has no states".into()));
    }
    Ok(())
}

fn assemble(problem: &Problem, kind: Kind<'_>, y_cap: Option<f64>) -> Result<Assembly, SynthesisError> {
    let plant = problem.plant();
    let structure = problem.structure();
    check_channels(plant)?;
    let margin = LMI_MARGIN * plant_scale(plant);
    let (nx, nu, ne, nd) = (plant.nx(), plant.nu(), plant.ne(), plant.nd());
    let mut sdp = SdpProblem::new();
    let y = sdp.add_variable("Y", VarKind::Symmetric(nx));
    let m = sdp.add_variable("M", VarKind::Full(nu, nx));
    let g = sdp.add_variable("g", VarKind::Scalar);
    sdp.add_lmi("Y", y.expr(), margin)?;
    if let Some(ratio) = y_cap {
        sdp.add_lmi("Y cap", AffineExpr::identity(nx).scale(ratio * margin) - y.expr(), 0.0)?;
    }
    sdp.minimize(&g.expr())?;
    let (ye, me) = (y.expr(), m.expr());
    let mut stability = None;
    let mut performance = None;
    let perf_point = match kind {
        Kind::Nominal { delta } => Some(delta.to_vec()),
        Kind::Robust { full_box, perf } => {
            structure.check_box(full_box)?;
            let ay = ye.lmul(plant.a()) + me.lmul(plant.b3());
            let c1y = ye.lmul(plant.c1()) + me.lmul(plant.d13());
            let stab = DgVars::new(&mut sdp, "stab", structure, full_box);
            stab.add_floor(&mut sdp, "stab")?;
            let lmi = dual_block(&ay, &c1y, plant.b1(), plant.d11(), &stab.expr());
            sdp.add_lmi("robust stability", -lmi, margin)?;
            stability = Some(stab);
            match perf {
                PerfCell::Point(p) => {
                    if !full_box.contains(p) {
                        return Err(SynthesisError::Invalid("performance point outside the full box".into()));
                    }
                    Some(p.clone())
                }
                PerfCell::Box(cell) => {
                    structure.check_box(cell)?;
                    if !cell.is_subset_of(full_box) {
                        return Err(SynthesisError::Invalid("performance cell not inside the full box".into()));
                    }
                    let pv = DgVars::new(&mut sdp, "perf", structure, cell);
                    pv.add_floor(&mut sdp, "perf")?;
                    let c2y = ye.lmul(plant.c2()) + me.lmul(plant.d23());
                    let cy = AffineExpr::blocks(&[vec![c1y], vec![c2y]]);
                    let b = side_by_side(plant.b1(), plant.b2());
                    let d = stack(&side_by_side(plant.d11(), plant.d12()), &side_by_side(plant.d21(), plant.d22()));
                    let q = perf_multiplier(Some(pv.quadrants()), &g.expr(), ne, nd);
                    sdp.add_lmi("robust performance", -dual_block(&ay, &cy, &b, &d, &q), margin)?;
                    performance = Some(pv);
                    None
                }
            }
        }
    };
    if let Some(p) = perf_point {
        let closed = problem.close_at(&p)?;
        let ay = ye.lmul(closed.a()) + me.lmul(closed.b3());
        let c2y = ye.lmul(closed.c2()) + me.lmul(closed.d23());
        let q = perf_multiplier(None, &g.expr(), ne, nd);
        sdp.add_lmi("nominal performance", -dual_block(&ay, &c2y, closed.b2(), closed.d22(), &q), margin)?;
    }
    Ok(Assembly { sdp, y, m, g, stability, performance })
}

fn infeasible_outcome(sdp: &SdpProblem, sol: Option<&SdpSolution>, status: &str) -> SynthesisOutcome {
    SynthesisOutcome {
        gamma: f64::INFINITY,
        gamma_eps: f64::INFINITY,
        certificate: None,
        diagnostics: SynthesisDiagnostics {
            status: status.into(),
            iterations: sol.map_or(0, |s| s.iterations),
            solve_time: sol.map_or(0.0, |s| s.solve_time),
            scalars: sdp.num_scalars(),
            blocks: sdp.num_blocks(),
            min_audit_eigenvalue: f64::NAN,
            audit_passed: false,
            y_condition: f64::NAN,
        },
    }
}

fn solve_assembly(asm: Assembly, eps: f64) -> Result<SynthesisOutcome, SynthesisError> {
    let sol = asm.sdp.solve()?;
    match &sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Ok(infeasible_outcome(&asm.sdp, Some(&sol), "infeasible")),
        SdpStatus::Unbounded => {
            return Err(SynthesisError::SolverFailure("dual infeasible (unbounded objective)".into()))
        }
        SdpStatus::NumericalFailure(msg) => return Err(SynthesisError::SolverFailure(msg.clone())),
    }
    let y = sol.value(&asm.y);
    let m = sol.value(&asm.m);
    let g = sol.scalar(&asm.g).max(0.0);
    let eig = y.symmetric_eigenvalues();
    let y_condition = eig.max() / eig.min();
    if !(y_condition < Y_CONDITION_WARN) {
        warn!("Lyapunov certificate is ill conditioned (cond(Y) = {y_condition:e})");
    }
    let chol = y.clone().cholesky().ok_or_else(|| SynthesisError::SolverFailure(Y_NOT_POSITIVE_DEFINITE.into()))?;
    let f = chol.solve(&m.transpose()).transpose();
    let gamma = g.sqrt();
    let min_audit_eigenvalue = sol.audit.iter().map(|a| a.min_eigenvalue).fold(f64::INFINITY, f64::min);
    Ok(SynthesisOutcome {
        gamma,
        gamma_eps: (1.0 + eps) * gamma,
        certificate: Some(Certificate {
            gain: ControllerGain::new(f),
            y,
            m,
            stability: asm.stability.as_ref().map(|s| s.value(&sol)),
            performance: asm.performance.as_ref().map(|s| s.value(&sol)),
            g,
        }),
        diagnostics: SynthesisDiagnostics {
            status: "optimal".into(),
            iterations: sol.iterations,
            solve_time: sol.solve_time,
            scalars: asm.sdp.num_scalars(),
            blocks: asm.sdp.num_blocks(),
            min_audit_eigenvalue,
            audit_passed: sol.audit.iter().all(BlockAudit::passes),
            y_condition,
        },
    })
}

/// Solves the LMI family, retrying once with `Y ⪯ κ·m·I` when the optimal
/// `Y` is numerically indefinite.
fn solve(problem: &Problem, kind: Kind<'_>, eps: f64) -> Result<SynthesisOutcome, SynthesisError> {
    match solve_assembly(assemble(problem, kind, None)?, eps) {
        Err(SynthesisError::SolverFailure(msg)) if msg == Y_NOT_POSITIVE_DEFINITE => {
            warn!("{msg}; solving again with Y bounded by {Y_CAP_RATIO:e} times the margin");
            solve_assembly(assemble(problem, kind, Some(Y_CAP_RATIO))?, eps)
        }
        other => other,
    }
}

/// The SDP behind [`robust_synthesis`], for inspection or export.
pub fn robust_sdp(problem: &Problem, full_box: &UncertaintyBox, perf: &PerfCell) -> Result<SdpProblem, SynthesisError> {
    Ok(assemble(problem, Kind::Robust { full_box, perf }, None)?.sdp)
}

/// Robust stability on `full_box` with worst-case performance on `perf`.
/// A point cell uses nominal performance at that point.
pub fn robust_synthesis(
    problem: &Problem,
    full_box: &UncertaintyBox,
    perf: &PerfCell,
    eps: f64,
) -> Result<SynthesisOutcome, SynthesisError> {
    solve(problem, Kind::Robust { full_box, perf }, eps)
}

/// Robust performance over the problem's whole box.
pub fn robust_performance_bound(problem: &Problem, eps: f64) -> Result<SynthesisOutcome, SynthesisError> {
    let bbox = problem.uncertainty_box();
    robust_synthesis(problem, bbox, &PerfCell::from_box(bbox.clone()), eps)
}

/// Best nominal H∞ level of `Δ(δ) ⋆ P` by state feedback.
pub fn nominal_synthesis(problem: &Problem, delta: &[f64]) -> Result<SynthesisOutcome, SynthesisError> {
    solve(problem, Kind::Nominal { delta }, 0.0)
}

/// Smallest nominal level over a grid of `cell` (endpoints and center).
/// Points where nominal synthesis is infeasible or fails are skipped.
pub fn cell_lower_bound(problem: &Problem, cell: &UncertaintyBox, grid_per_axis: usize) -> Result<f64, SynthesisError> {
    problem.structure().check_box(cell)?;
    let mut points = cell.grid(grid_per_axis.max(2));
    points.push(cell.center());
    let values: Vec<f64> = points
        .par_iter()
        .map(|p| match nominal_synthesis(problem, p) {
            Ok(o) if o.is_feasible() => o.gamma,
            Ok(_) => {
                warn!("nominal synthesis infeasible at {p:?}; excluded from lower bound");
                f64::INFINITY
            }
            Err(e) => {
                warn!("nominal synthesis failed at {p:?}: {e}; excluded from lower bound");
                f64::INFINITY
            }
        })
        .collect();
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// [`robust_synthesis`] for every cell, in parallel.
pub fn synthesize_cells(
    problem: &Problem,
    full_box: &UncertaintyBox,
    cells: &[UncertaintyBox],
    eps: f64,
) -> Vec<Result<SynthesisOutcome, SynthesisError>> {
    cells.par_iter().map(|c| robust_synthesis(problem, full_box, &PerfCell::from_box(c.clone()), eps)).collect()
}

/// Re-evaluates the LMIs of a certificate from plain matrices, without
/// going through the symbolic assembly.
pub fn certificate_residuals(
    problem: &Problem,
    perf: &PerfCell,
    cert: &Certificate,
) -> Result<CertificateResiduals, SynthesisError> {
    let plant = problem.plant();
    let (y, m) = (&cert.y, &cert.m);
    let ay = plant.a() * y + plant.b3() * m;
    let c1y = plant.c1() * y + plant.d13() * m;
    let stability =
        cert.stability.as_ref().map(|s| dual_block_value(&ay, &c1y, plant.b1(), plant.d11(), &s.assemble()));
    let (ne, nd) = (plant.ne(), plant.nd());
    let performance = match (perf, &cert.performance) {
        (PerfCell::Box(_), Some(pk)) => {
            let cy = stack(&c1y, &(plant.c2() * y + plant.d23() * m));
            let b = side_by_side(plant.b1(), plant.b2());
            let d = stack(&side_by_side(plant.d11(), plant.d12()), &side_by_side(plant.d21(), plant.d22()));
            dual_block_value(&ay, &cy, &b, &d, &perf_multiplier_value(Some(pk), cert.g, ne, nd))
        }
        (PerfCell::Point(_), _) | (PerfCell::Box(_), None) => {
            let p = match perf {
                PerfCell::Point(p) => p.clone(),
                PerfCell::Box(b) => b.center(),
            };
            let closed = problem.close_at(&p)?;
            let ay = closed.a() * y + closed.b3() * m;
            let c2y = closed.c2() * y + closed.d23() * m;
            dual_block_value(&ay, &c2y, closed.b2(), closed.d22(), &perf_multiplier_value(None, cert.g, ne, nd))
        }
    };
    Ok(CertificateResiduals {
        y_min: y.symmetric_eigenvalues().min(),
        y_scale: y.amax(),
        stability: stability.as_ref().map_or(f64::NEG_INFINITY, |s| s.symmetric_eigenvalues().max()),
        stability_scale: stability.as_ref().map_or(0.0, |s| s.amax()),
        performance: performance.symmetric_eigenvalues().max(),
        performance_scale: performance.amax(),
    })
}

/// Extreme eigenvalues of the re-evaluated certificate blocks together with
/// their largest absolute entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateResiduals {
    /// Smallest eigenvalue of `Y`.
    pub y_min: f64,
    pub y_scale: f64,
    /// Largest eigenvalue of the robust stability block, `-∞` when the
    /// certificate has none.
    pub stability: f64,
    pub stability_scale: f64,
    /// Largest eigenvalue of the performance block.
    pub performance: f64,
    pub performance_scale: f64,
}

impl CertificateResiduals {
    /// Whether every block has the required sign up to `tol · (1 + scale)`.
    pub fn within(&self, tol: f64) -> bool {
        self.y_min >= -tol * (1.0 + self.y_scale)
            && self.stability <= tol * (1.0 + self.stability_scale)
            && self.performance <= tol * (1.0 + self.performance_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{hinf_norm, is_hurwitz, DEFAULT_RTOL};
    use crate::lfr::{Interval, PlantBlocks};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn scalar_problem() -> Problem {
        let plant = LfrPlant::new(PlantBlocks {
            A: m(1, 1, &[0.0]),
            B1: m(1, 1, &[1.0]),
            B2: m(1, 1, &[1.0]),
            B3: m(1, 1, &[1.0]),
            C1: m(1, 1, &[1.0]),
            D11: m(1, 1, &[0.0]),
            D12: m(1, 1, &[0.0]),
            D13: m(1, 1, &[0.0]),
            C2: m(2, 1, &[1.0, 0.0]),
            D21: m(2, 1, &[0.0, 0.0]),
            D22: m(2, 1, &[0.0, 0.0]),
            D23: m(2, 1, &[0.0, 0.1]),
        })
        .unwrap();
        Problem::new(plant, UncertaintyStructure::scalars(1), UncertaintyBox::unit(1)).unwrap()
    }

    fn random_dg(rng: &mut ChaCha8Rng, sizes: &[usize], bbox: &UncertaintyBox) -> DgScaling {
        let d = sizes
            .iter()
            .map(|&q| {
                let l = Matrix::from_fn(q, q, |_, _| rng.gen_range(-1.0..1.0));
                &l * l.transpose() + Matrix::identity(q, q) * 1e-3
            })
            .collect();
        let g = sizes
            .iter()
            .map(|&q| {
                let a = Matrix::from_fn(q, q, |_, _| rng.gen_range(-2.0..2.0));
                &a - a.transpose()
            })
            .collect();
        DgScaling { d, g, c: bbox.center(), r: bbox.radius() }
    }

    #[test]
    fn quadratic_vanishes_on_unit_box_boundary() {
        let s = DgScaling::identity(&UncertaintyStructure::scalars(2), &UncertaintyBox::unit(2));
        for v in [[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]] {
            assert!(s.multiplier_quadratic(&v).amax() < 1e-15);
        }
    }

    #[test]
    fn quadratic_at_center_is_squared_radius() {
        let bbox = UncertaintyBox::new(vec![Interval::new(0.0, 0.5).unwrap()]).unwrap();
        let s = DgScaling::identity(&UncertaintyStructure::scalars(1), &bbox);
        assert_relative_eq!(s.multiplier_quadratic(&[0.25])[(0, 0)], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_is_nonnegative_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sizes = [2, 1, 3];
        let structure = UncertaintyStructure::new(sizes.to_vec()).unwrap();
        let bbox = UncertaintyBox::new(vec![
            Interval::new(-0.3, 0.9).unwrap(),
            Interval::point(0.4),
            Interval::new(-2.0, -1.0).unwrap(),
        ])
        .unwrap();
        for _ in 0..1000 {
            let s = random_dg(&mut rng, &sizes, &bbox);
            let p = s.assemble();
            assert!((&p - p.transpose()).amax() < 1e-14);
            let delta = bbox.sample(&mut rng);
            let q = s.multiplier_quadratic(&delta);
            assert!(q.symmetric_eigenvalues().min() >= -1e-10);
            // closed form: diag((r² - (δ - c)²) D)
            let mut expect = Matrix::zeros(structure.total(), structure.total());
            for (k, o) in structure.offsets().into_iter().enumerate() {
                let w = s.r[k] * s.r[k] - (delta[k] - s.c[k]).powi(2);
                expect.view_mut((o, o), (sizes[k], sizes[k])).copy_from(&(&s.d[k] * w));
            }
            assert!((&q - expect).amax() < 1e-10);
        }
    }

    #[test]
    fn scalar_plant_robust_design_is_safe() {
        let problem = scalar_problem();
        let out = robust_performance_bound(&problem, 0.05).unwrap();
        assert!(out.is_feasible());
        let f = out.gain().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut points = vec![vec![-1.0], vec![1.0]];
        points.extend((0..20).map(|_| vec![rng.gen_range(-1.0..1.0)]));
        for p in points {
            let cl = problem.closed_loop(&p, f).unwrap();
            assert!(is_hurwitz(&cl.a).unwrap(), "unstable at {p:?}");
            let n = hinf_norm(&cl, DEFAULT_RTOL).unwrap().value;
            assert!(n <= out.gamma * (1.0 + 1e-6), "{n} > {}", out.gamma);
        }
        let cert = out.certificate.as_ref().unwrap();
        let recon = &cert.m * cert.y.clone().try_inverse().unwrap();
        assert!((recon - f.matrix()).amax() <= 1e-8 * (1.0 + f.matrix().amax()));
    }

    #[test]
    fn certificate_resubstitution() {
        let problem = scalar_problem();
        let cell = PerfCell::Box(UncertaintyBox::new(vec![Interval::new(0.0, 0.5).unwrap()]).unwrap());
        let out = robust_synthesis(&problem, problem.uncertainty_box(), &cell, 0.05).unwrap();
        let res = certificate_residuals(&problem, &cell, out.certificate.as_ref().unwrap()).unwrap();
        assert!(res.y_min > 0.0);
        assert!(res.stability < 1e-7);
        assert!(res.performance < 1e-7);
        assert!(out.diagnostics.min_audit_eigenvalue >= -1e-7);
    }

    #[test]
    fn nested_cells_are_monotone() {
        let problem = scalar_problem();
        let full = problem.uncertainty_box().clone();
        let cells = [
            UncertaintyBox::new(vec![Interval::new(0.2, 0.3).unwrap()]).unwrap(),
            UncertaintyBox::new(vec![Interval::new(0.0, 0.5).unwrap()]).unwrap(),
            UncertaintyBox::new(vec![Interval::new(-0.5, 1.0).unwrap()]).unwrap(),
            full.clone(),
        ];
        let gammas: Vec<f64> =
            synthesize_cells(&problem, &full, &cells, 0.0).into_iter().map(|o| o.unwrap().gamma).collect();
        for w in gammas.windows(2) {
            assert!(w[0] <= w[1] * (1.0 + 1e-5), "{gammas:?}");
        }
    }

    #[test]
    fn point_cell_uses_nominal_performance() {
        let problem = scalar_problem();
        let full = problem.uncertainty_box().clone();
        let point = robust_synthesis(&problem, &full, &PerfCell::Point(vec![0.3]), 0.05).unwrap();
        let cert = point.certificate.as_ref().unwrap();
        assert!(cert.performance.is_none());
        let n = hinf_norm(&problem.closed_loop(&[0.3], &cert.gain).unwrap(), DEFAULT_RTOL).unwrap().value;
        assert!(n <= point.gamma * (1.0 + 1e-6));
        let nominal = nominal_synthesis(&problem, &[0.3]).unwrap();
        assert!(nominal.gamma <= point.gamma * (1.0 + 1e-6));
        let singleton = PerfCell::from_box(UncertaintyBox::point(&[0.3]));
        assert_eq!(singleton, PerfCell::Point(vec![0.3]));
    }

    #[test]
    fn no_control_authority_gives_open_loop_norm() {
        let plant = LfrPlant::nominal(
            m(2, 2, &[-1.0, 2.0, 0.0, -3.0]),
            m(2, 1, &[1.0, 1.0]),
            m(2, 1, &[0.0, 0.0]),
            m(1, 2, &[1.0, 0.5]),
            m(1, 1, &[0.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let problem =
            Problem::new(plant, UncertaintyStructure::new(vec![]).unwrap(), UncertaintyBox::new(vec![]).unwrap())
                .unwrap();
        let nom = nominal_synthesis(&problem, &[]).unwrap();
        let open =
            hinf_norm(&problem.close_at(&[]).unwrap().performance_channel().unwrap(), DEFAULT_RTOL).unwrap().value;
        assert_relative_eq!(nom.gamma, open, max_relative = 1e-4);
        let rp = robust_performance_bound(&problem, 0.0).unwrap();
        assert_relative_eq!(rp.gamma, nom.gamma, max_relative = 0.05);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let problem = scalar_problem();
        let full = UncertaintyBox::new(vec![Interval::new(-0.5, 0.5).unwrap()]).unwrap();
        let cell = PerfCell::Box(UncertaintyBox::unit(1));
        assert!(matches!(robust_synthesis(&problem, &full, &cell, 0.0), Err(SynthesisError::Invalid(_))));
        assert!(matches!(
            robust_synthesis(&problem, &full, &PerfCell::Point(vec![0.9]), 0.0),
            Err(SynthesisError::Invalid(_))
        ));
    }
}
