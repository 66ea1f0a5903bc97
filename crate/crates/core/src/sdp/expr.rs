//! Affine matrix-valued expressions over scalar decision variables.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::lfr::Matrix;

/// `constant + Σ_i x_i · terms[i]` where `x_i` are the scalar decisions of a
/// problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub(crate) constant: Matrix,
    pub(crate) terms: BTreeMap<usize, Matrix>,
}

impl AffineExpr {
    pub fn constant(m: Matrix) -> Self {
        Self { constant: m, terms: BTreeMap::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Matrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Matrix::identity(n, n))
    }

    pub(crate) fn from_terms(rows: usize, cols: usize, terms: BTreeMap<usize, Matrix>) -> Self {
        Self { constant: Matrix::zeros(rows, cols), terms }
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &Matrix {
        &self.constant
    }

    /// `(scalar index, coefficient)` pairs.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &Matrix)> {
        self.terms.iter().map(|(&i, m)| (i, m))
    }

    fn map(&self, f: impl Fn(&Matrix) -> Matrix) -> Self {
        Self { constant: f(&self.constant), terms: self.terms.iter().map(|(&i, m)| (i, f(m))).collect() }
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    /// `l * self`
    pub fn lmul(&self, l: &Matrix) -> Self {
        self.map(|m| l * m)
    }

    /// `self * r`
    pub fn rmul(&self, r: &Matrix) -> Self {
        self.map(|m| m * r)
    }

    /// `t^T * self * t`
    pub fn congruence(&self, t: &Matrix) -> Self {
        let tt = t.transpose();
        self.map(|m| &tt * m * t)
    }

    /// `self + self^T`
    pub fn herm(&self) -> Self {
        self.map(|m| m + m.transpose())
    }

    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        let mut out = self.constant.clone();
        for (&i, m) in &self.terms {
            out += m * x[i];
        }
        out
    }

    /// Largest absolute entry of the data.
    pub fn data_scale(&self) -> f64 {
        self.terms.values().chain(std::iter::once(&self.constant)).map(|m| m.amax()).fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        if self.nrows() != self.ncols() {
            return f64::INFINITY;
        }
        self.terms
            .values()
            .chain(std::iter::once(&self.constant))
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }

    pub(crate) fn symmetrized(&self) -> Self {
        self.map(|m| (m + m.transpose()) * 0.5)
    }

    /// Assembles a block matrix. Every row of `grid` must have the same
    /// number of entries and consistent block dimensions.
    pub fn blocks(grid: &[Vec<AffineExpr>]) -> Self {
        if grid.is_empty() || grid[0].is_empty() {
            return AffineExpr::zeros(0, 0);
        }
        let row_heights: Vec<usize> = grid.iter().map(|r| r[0].nrows()).collect();
        let col_widths: Vec<usize> = grid[0].iter().map(AffineExpr::ncols).collect();
        let rows = row_heights.iter().sum();
        let cols = col_widths.iter().sum();
        let mut out = AffineExpr::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), col_widths.len(), "ragged block row {bi}");
            let mut c0 = 0;
            for (bj, e) in row.iter().enumerate() {
                assert_eq!(e.shape(), (row_heights[bi], col_widths[bj]), "block ({bi}, {bj}) has wrong shape");
                out.constant.view_mut((r0, c0), e.shape()).copy_from(&e.constant);
                for (&i, m) in &e.terms {
                    let t = out.terms.entry(i).or_insert_with(|| Matrix::zeros(rows, cols));
                    t.view_mut((r0, c0), e.shape()).copy_from(m);
                }
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        out
    }

    /// Block-diagonal assembly.
    pub fn diag(parts: &[AffineExpr]) -> Self {
        let grid: Vec<Vec<AffineExpr>> = parts
            .iter()
            .enumerate()
            .map(|(i, pi)| {
                parts
                    .iter()
                    .enumerate()
                    .map(|(j, pj)| if i == j { pi.clone() } else { AffineExpr::zeros(pi.nrows(), pj.ncols()) })
                    .collect()
            })
            .collect();
        Self::blocks(&grid)
    }
}

impl From<Matrix> for AffineExpr {
    fn from(m: Matrix) -> Self {
        Self::constant(m)
    }
}

impl Add<&AffineExpr> for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in affine sum");
        let mut out = self.clone();
        out.constant += &rhs.constant;
        for (&i, m) in &rhs.terms {
            match out.terms.get_mut(&i) {
                Some(t) => *t += m,
                None => {
                    out.terms.insert(i, m.clone());
                }
            }
        }
        out
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: AffineExpr) -> AffineExpr {
        &self + &rhs
    }
}

impl Neg for &AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1.0)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1.0)
    }
}

impl Sub<&AffineExpr> for &AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: &AffineExpr) -> AffineExpr {
        self + &(-rhs)
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        &self - &rhs
    }
}

impl Mul<&AffineExpr> for &Matrix {
    type Output = AffineExpr;
    fn mul(self, rhs: &AffineExpr) -> AffineExpr {
        rhs.lmul(self)
    }
}

impl Mul<&Matrix> for &AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: &Matrix) -> AffineExpr {
        self.rmul(rhs)
    }
}
