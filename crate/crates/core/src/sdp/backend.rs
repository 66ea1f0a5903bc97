use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{SdpError, SdpOptions, SdpProblem};
use crate::lfr::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RawStatus {
    Solved,
    Infeasible,
    Unbounded,
    Failed(String),
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub(crate) status: RawStatus,
    pub(crate) x: Vec<f64>,
    pub(crate) iterations: u32,
    pub(crate) solve_time: f64,
}

/// Upper triangle, column by column, off-diagonals scaled by sqrt(2).
fn svec_entries(m: &Matrix, mut emit: impl FnMut(usize, f64)) {
    let n = m.nrows();
    let s2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            let v = if i == j { m[(i, i)] } else { s2 * m[(i, j)] };
            if v != 0.0 {
                emit(k, v);
            }
            k += 1;
        }
    }
}

pub(crate) fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<RawSolution, SdpError> {
    let nvar = p.num_scalars();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row0 = 0;
    for blk in p.blocks() {
        let n = blk.expr.nrows();
        let dim = n * (n + 1) / 2;
        let mut shifted = blk.expr.constant_part().clone();
        for i in 0..n {
            shifted[(i, i)] -= blk.margin;
        }
        let mut rhs = vec![0.0; dim];
        svec_entries(&shifted, |k, v| rhs[k] = v);
        b.extend(rhs);
        for (var, m) in blk.expr.terms() {
            svec_entries(m, |k, v| {
                rows.push(row0 + k);
                cols.push(var);
                vals.push(-v);
            });
        }
        cones.push(SupportedConeT::PSDTriangleConeT(n));
        row0 += dim;
    }
    let a = CscMatrix::new_from_triplets(row0, nvar, rows, cols, vals);
    let q = p.objective_vector();
    let pmat = CscMatrix::zeros((nvar, nvar));
    let settings = DefaultSettings {
        verbose: false,
        max_iter: opts.max_iter,
        tol_gap_abs: opts.tol,
        tol_gap_rel: opts.tol,
        tol_feas: opts.tol,
        ..DefaultSettings::default()
    };
    let mut solver =
        DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings).map_err(|e| SdpError::Setup(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => RawStatus::Solved,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => RawStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => RawStatus::Unbounded,
        other => RawStatus::Failed(format!("solver stopped with status {other:?}")),
    };
    Ok(RawSolution { status, x: sol.x.clone(), iterations: sol.iterations, solve_time: sol.solve_time })
}
