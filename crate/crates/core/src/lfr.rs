//! Linear fractional representations of partially known plants.
//!
//! A plant `P` is stored with the partitioning
//!
//! ```text
//!   [ xdot ]   [ A   B1  B2  B3  ] [ x ]
//!   [  z   ] = [ C1  D11 D12 D13 ] [ w ]
//!   [  e   ]   [ C2  D21 D22 D23 ] [ d ]
//!                                  [ u ]
//! ```
//!
//! with the measurement `y = x`. The uncertainty closes `w = Δ z`, the
//! controller closes `u = F x`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LfrError {
    #[error("block {block}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Dimension { block: &'static str, expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },
    #[error("interconnection is not well posed: smallest singular value {sigma_min:e} of I - D11*Delta is below {threshold:e}")]
    WellPosedness { sigma_min: f64, threshold: f64 },
    #[error("uncertainty structure has total size {structure} but the plant has nw = {nw}, nz = {nz}")]
    StructureMismatch { structure: usize, nw: usize, nz: usize },
    #[error("uncertainty block sizes must be positive")]
    EmptyBlock,
    #[error("box has {got} intervals, structure has {expected} blocks")]
    BoxDimension { expected: usize, got: usize },
    #[error("interval [{lo}, {hi}] is empty or not finite")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("parameter vector has {got} entries, expected {expected}")]
    DeltaDimension { expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

fn check_dims(block: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<(), LfrError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(LfrError::Dimension {
            block,
            expected_rows: rows,
            expected_cols: cols,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Raw block data used to build an [`LfrPlant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PlantBlocks {
    pub A: Matrix,
    pub B1: Matrix,
    pub B2: Matrix,
    pub B3: Matrix,
    pub C1: Matrix,
    pub D11: Matrix,
    pub D12: Matrix,
    pub D13: Matrix,
    pub C2: Matrix,
    pub D21: Matrix,
    pub D22: Matrix,
    pub D23: Matrix,
}

/// The known part `P` of the plant. Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct LfrPlant {
    m: PlantBlocks,
}

impl LfrPlant {
    pub fn new(m: PlantBlocks) -> Result<Self, LfrError> {
        let nx = m.A.nrows();
        let nw = m.B1.ncols();
        let nd = m.B2.ncols();
        let nu = m.B3.ncols();
        let nz = m.C1.nrows();
        let ne = m.C2.nrows();
        check_dims("A", &m.A, nx, nx)?;
        check_dims("B1", &m.B1, nx, nw)?;
        check_dims("B2", &m.B2, nx, nd)?;
        check_dims("B3", &m.B3, nx, nu)?;
        check_dims("C1", &m.C1, nz, nx)?;
        check_dims("D11", &m.D11, nz, nw)?;
        check_dims("D12", &m.D12, nz, nd)?;
        check_dims("D13", &m.D13, nz, nu)?;
        check_dims("C2", &m.C2, ne, nx)?;
        check_dims("D21", &m.D21, ne, nw)?;
        check_dims("D22", &m.D22, ne, nd)?;
        check_dims("D23", &m.D23, ne, nu)?;
        if m.iter_all().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(LfrError::Invalid("plant data contains non-finite entries".into()));
        }
        Ok(Self { m })
    }

    /// Plant without an uncertainty channel (`nw = nz = 0`).
    pub fn nominal(a: Matrix, b2: Matrix, b3: Matrix, c2: Matrix, d22: Matrix, d23: Matrix) -> Result<Self, LfrError> {
        let nx = a.nrows();
        let (nd, nu, ne) = (b2.ncols(), b3.ncols(), c2.nrows());
        Self::new(PlantBlocks {
            A: a,
            B1: Matrix::zeros(nx, 0),
            B2: b2,
            B3: b3,
            C1: Matrix::zeros(0, nx),
            D11: Matrix::zeros(0, 0),
            D12: Matrix::zeros(0, nd),
            D13: Matrix::zeros(0, nu),
            C2: c2,
            D21: Matrix::zeros(ne, 0),
            D22: d22,
            D23: d23,
        })
    }

    pub fn blocks(&self) -> &PlantBlocks {
        &self.m
    }

    pub fn into_blocks(self) -> PlantBlocks {
        self.m
    }

    pub fn a(&self) -> &Matrix {
        &self.m.A
    }
    pub fn b1(&self) -> &Matrix {
        &self.m.B1
    }
    pub fn b2(&self) -> &Matrix {
        &self.m.B2
    }
    pub fn b3(&self) -> &Matrix {
        &self.m.B3
    }
    pub fn c1(&self) -> &Matrix {
        &self.m.C1
    }
    pub fn d11(&self) -> &Matrix {
        &self.m.D11
    }
    pub fn d12(&self) -> &Matrix {
        &self.m.D12
    }
    pub fn d13(&self) -> &Matrix {
        &self.m.D13
    }
    pub fn c2(&self) -> &Matrix {
        &self.m.C2
    }
    pub fn d21(&self) -> &Matrix {
        &self.m.D21
    }
    pub fn d22(&self) -> &Matrix {
        &self.m.D22
    }
    pub fn d23(&self) -> &Matrix {
        &self.m.D23
    }

    pub fn nx(&self) -> usize {
        self.m.A.nrows()
    }
    pub fn nw(&self) -> usize {
        self.m.B1.ncols()
    }
    pub fn nd(&self) -> usize {
        self.m.B2.ncols()
    }
    pub fn nu(&self) -> usize {
        self.m.B3.ncols()
    }
    pub fn nz(&self) -> usize {
        self.m.C1.nrows()
    }
    pub fn ne(&self) -> usize {
        self.m.C2.nrows()
    }

    /// Closes the uncertainty channel with `w = Δ z`, returning `Δ ⋆ P`
    /// (a plant with `nw = nz = 0`).
    pub fn close_uncertainty(&self, delta: &Matrix) -> Result<LfrPlant, LfrError> {
        check_dims("Delta", delta, self.nw(), self.nz())?;
        let m = &self.m;
        // K = Δ (I - D11 Δ)^{-1}
        let inv = well_posed_inverse(&m.D11, delta)?;
        let k = delta * inv;
        let b1k = &m.B1 * &k;
        let d21k = &m.D21 * &k;
        let (nx, nd, nu, ne) = (self.nx(), self.nd(), self.nu(), self.ne());
        LfrPlant::new(PlantBlocks {
            A: &m.A + &b1k * &m.C1,
            B1: Matrix::zeros(nx, 0),
            B2: &m.B2 + &b1k * &m.D12,
            B3: &m.B3 + &b1k * &m.D13,
            C1: Matrix::zeros(0, nx),
            D11: Matrix::zeros(0, 0),
            D12: Matrix::zeros(0, nd),
            D13: Matrix::zeros(0, nu),
            C2: &m.C2 + &d21k * &m.C1,
            D21: Matrix::zeros(ne, 0),
            D22: &m.D22 + &d21k * &m.D12,
            D23: &m.D23 + &d21k * &m.D13,
        })
    }

    /// Closes the control channel with `u = F x`. The uncertainty channel,
    /// if any, is kept; the result has `nu = 0`.
    pub fn close_state_feedback(&self, gain: &ControllerGain) -> Result<LfrPlant, LfrError> {
        let f = gain.matrix();
        check_dims("F", f, self.nu(), self.nx())?;
        let m = &self.m;
        let (nx, nz, ne) = (self.nx(), self.nz(), self.ne());
        LfrPlant::new(PlantBlocks {
            A: &m.A + &m.B3 * f,
            B1: m.B1.clone(),
            B2: m.B2.clone(),
            B3: Matrix::zeros(nx, 0),
            C1: &m.C1 + &m.D13 * f,
            D11: m.D11.clone(),
            D12: m.D12.clone(),
            D13: Matrix::zeros(nz, 0),
            C2: &m.C2 + &m.D23 * f,
            D21: m.D21.clone(),
            D22: m.D22.clone(),
            D23: Matrix::zeros(ne, 0),
        })
    }

    /// The `d -> e` system of a plant whose uncertainty channel is closed.
    /// Any remaining control input is left open (treated as absent).
    pub fn performance_channel(&self) -> Result<StateSpace, LfrError> {
        if self.nw() != 0 || self.nz() != 0 {
            return Err(LfrError::Invalid("uncertainty channel must be closed before extracting d -> e".into()));
        }
        StateSpace::new(self.m.A.clone(), self.m.B2.clone(), self.m.C2.clone(), self.m.D22.clone())
    }

    /// `Δ ⋆ P ⋆ F` as a state-space system from `d` to `e`.
    pub fn closed_loop(&self, delta: &Matrix, gain: &ControllerGain) -> Result<StateSpace, LfrError> {
        self.close_uncertainty(delta)?.close_state_feedback(gain)?.performance_channel()
    }

    /// Loop transformation mapping `box` onto `[-1, 1]^M`.
    ///
    /// With centers `c` and radii `r`, the returned plant `P'` satisfies
    /// `Δ(δ̂) ⋆ P' = Δ(c + r δ̂) ⋆ P` for every `δ̂` in the unit box.
    pub fn normalize_box(
        &self,
        structure: &UncertaintyStructure,
        bbox: &UncertaintyBox,
    ) -> Result<(LfrPlant, UncertaintyBox), LfrError> {
        structure.check_plant(self)?;
        structure.check_box(bbox)?;
        let c = structure.expand(&bbox.center())?;
        let r = structure.expand(&bbox.radius())?;
        let m = &self.m;
        let q = structure.total();
        // E = (I - D11 C)^{-1}; w = C z + R ŵ
        let e = well_posed_inverse(&m.D11, &c)?;
        let c1 = &e * &m.C1;
        let d11 = &e * &m.D11 * &r;
        let d12 = &e * &m.D12;
        let d13 = &e * &m.D13;
        let w_map = &c * &d11 + &r;
        let out = LfrPlant::new(PlantBlocks {
            A: &m.A + &m.B1 * &c * &c1,
            B1: &m.B1 * &w_map,
            B2: &m.B2 + &m.B1 * &c * &d12,
            B3: &m.B3 + &m.B1 * &c * &d13,
            C1: c1.clone(),
            D11: d11,
            D12: d12.clone(),
            D13: d13.clone(),
            C2: &m.C2 + &m.D21 * &c * &c1,
            D21: &m.D21 * &w_map,
            D22: &m.D22 + &m.D21 * &c * &d12,
            D23: &m.D23 + &m.D21 * &c * &d13,
        })?;
        debug_assert_eq!(out.nw(), q);
        Ok((out, UncertaintyBox::unit(structure.blocks())))
    }
}

impl PlantBlocks {
    fn iter_all(&self) -> impl Iterator<Item = &Matrix> {
        [
            &self.A, &self.B1, &self.B2, &self.B3, &self.C1, &self.D11, &self.D12, &self.D13, &self.C2, &self.D21,
            &self.D22, &self.D23,
        ]
        .into_iter()
    }
}

/// Returns `(I - D11 Δ)^{-1}` after the scale-aware well-posedness test.
pub fn well_posed_inverse(d11: &Matrix, delta: &Matrix) -> Result<Matrix, LfrError> {
    let n = d11.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let prod = d11 * delta;
    let m = Matrix::identity(n, n) - &prod;
    let sigma_min = m.singular_values().min();
    let threshold = 1e-9 * (1.0 + spectral_norm(&prod));
    if !(sigma_min >= threshold) {
        return Err(LfrError::WellPosedness { sigma_min, threshold });
    }
    m.try_inverse().ok_or(LfrError::WellPosedness { sigma_min, threshold })
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Block sizes `q_1..q_M` of `Δ(δ) = diag(δ_1 I_{q_1}, ..., δ_M I_{q_M})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertaintyStructure {
    sizes: Vec<usize>,
}

impl UncertaintyStructure {
    /// An empty list describes a plant without uncertainty channel.
    pub fn new(sizes: Vec<usize>) -> Result<Self, LfrError> {
        if sizes.iter().any(|&s| s == 0) {
            return Err(LfrError::EmptyBlock);
        }
        Ok(Self { sizes })
    }

    pub fn scalars(m: usize) -> Self {
        Self { sizes: vec![1; m] }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of parameters `M`.
    pub fn blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Row offset of each block inside `Δ(δ)`.
    pub fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect()
    }

    /// Expands a parameter vector to `diag(δ_ν I_{q_ν})`.
    pub fn expand(&self, delta: &[f64]) -> Result<Matrix, LfrError> {
        if delta.len() != self.blocks() {
            return Err(LfrError::DeltaDimension { expected: self.blocks(), got: delta.len() });
        }
        let q = self.total();
        let mut m = Matrix::zeros(q, q);
        for ((&d, &s), o) in delta.iter().zip(&self.sizes).zip(self.offsets()) {
            for i in o..o + s {
                m[(i, i)] = d;
            }
        }
        Ok(m)
    }

    pub fn check_plant(&self, plant: &LfrPlant) -> Result<(), LfrError> {
        if plant.nw() != self.total() || plant.nz() != self.total() {
            return Err(LfrError::StructureMismatch { structure: self.total(), nw: plant.nw(), nz: plant.nz() });
        }
        Ok(())
    }

    pub fn check_box(&self, bbox: &UncertaintyBox) -> Result<(), LfrError> {
        if bbox.dim() != self.blocks() {
            return Err(LfrError::BoxDimension { expected: self.blocks(), got: bbox.dim() });
        }
        Ok(())
    }
}

/// Closed interval `[lo, hi]`; `lo == hi` is a singleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, LfrError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(LfrError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

/// Axis-aligned parameter box `I_1 × ... × I_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBox {
    intervals: Vec<Interval>,
}

impl UncertaintyBox {
    pub fn new(intervals: Vec<Interval>) -> Result<Self, LfrError> {
        for iv in &intervals {
            Interval::new(iv.lo, iv.hi)?;
        }
        Ok(Self { intervals })
    }

    pub fn unit(m: usize) -> Self {
        Self { intervals: vec![Interval { lo: -1.0, hi: 1.0 }; m] }
    }

    /// Singleton box at `point`.
    pub fn point(point: &[f64]) -> Self {
        Self { intervals: point.iter().map(|&v| Interval::point(v)).collect() }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn interval(&self, axis: usize) -> Interval {
        self.intervals[axis]
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn with_interval(&self, axis: usize, iv: Interval) -> Self {
        let mut out = self.clone();
        out.intervals[axis] = iv;
        out
    }

    pub fn center(&self) -> Vec<f64> {
        self.intervals.iter().map(Interval::center).collect()
    }

    pub fn radius(&self) -> Vec<f64> {
        self.intervals.iter().map(Interval::radius).collect()
    }

    pub fn contains(&self, delta: &[f64]) -> bool {
        delta.len() == self.dim() && self.intervals.iter().zip(delta).all(|(iv, &d)| iv.contains(d))
    }

    pub fn is_subset_of(&self, other: &UncertaintyBox) -> bool {
        self.dim() == other.dim() && self.intervals.iter().zip(&other.intervals).all(|(a, b)| a.is_subset_of(b))
    }

    pub fn is_singleton(&self) -> bool {
        self.intervals.iter().all(Interval::is_singleton)
    }

    /// All `2^M` vertices (duplicates on singleton axes are kept).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        (0..1usize << m)
            .map(|mask| {
                self.intervals
                    .iter()
                    .enumerate()
                    .map(|(i, iv)| if mask >> i & 1 == 1 { iv.hi } else { iv.lo })
                    .collect()
            })
            .collect()
    }

    /// Tensor grid with `per_axis` points on each non-degenerate axis
    /// (endpoints included when `per_axis >= 2`).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .intervals
            .iter()
            .map(|iv| {
                if iv.is_singleton() || per_axis <= 1 {
                    vec![if per_axis <= 1 { iv.center() } else { iv.lo }]
                } else {
                    (0..per_axis)
                        .map(|k| {
                            if k + 1 == per_axis {
                                iv.hi
                            } else {
                                iv.lo + iv.width() * k as f64 / (per_axis - 1) as f64
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut out = vec![Vec::with_capacity(self.dim())];
        for values in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.intervals.iter().map(|iv| if iv.is_singleton() { iv.lo } else { rng.gen_range(iv.lo..=iv.hi) }).collect()
    }
}

/// Parameter vector `δ ∈ R^M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta(pub Vec<f64>);

impl Delta {
    pub fn expand(&self, structure: &UncertaintyStructure) -> Result<Matrix, LfrError> {
        structure.expand(&self.0)
    }

    pub fn is_in(&self, bbox: &UncertaintyBox) -> bool {
        bbox.contains(&self.0)
    }
}

/// Standard LTI system `(A, B, C, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self, LfrError> {
        let n = a.nrows();
        check_dims("A", &a, n, n)?;
        check_dims("B", &b, n, d.ncols())?;
        check_dims("C", &c, d.nrows(), n)?;
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn scale_output(&self, alpha: f64) -> Self {
        Self { a: self.a.clone(), b: self.b.clone(), c: &self.c * alpha, d: &self.d * alpha }
    }
}

/// State-feedback gain `u = F x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGain(Matrix);

impl ControllerGain {
    pub fn new(f: Matrix) -> Self {
        Self(f)
    }

    pub fn zeros(nu: usize, nx: usize) -> Self {
        Self(Matrix::zeros(nu, nx))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Row-major entries, the coordinates used by gain-space searches.
    pub fn to_vec(&self) -> Vec<f64> {
        let (r, c) = self.0.shape();
        (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|ij| self.0[ij]).collect()
    }

    pub fn from_vec(nu: usize, nx: usize, v: &[f64]) -> Self {
        Self(Matrix::from_row_slice(nu, nx, v))
    }
}

/// Plant, uncertainty structure and box validated together.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    plant: LfrPlant,
    structure: UncertaintyStructure,
    bbox: UncertaintyBox,
}

impl Problem {
    pub fn new(plant: LfrPlant, structure: UncertaintyStructure, bbox: UncertaintyBox) -> Result<Self, LfrError> {
        structure.check_plant(&plant)?;
        structure.check_box(&bbox)?;
        Ok(Self { plant, structure, bbox })
    }

    pub fn plant(&self) -> &LfrPlant {
        &self.plant
    }

    pub fn structure(&self) -> &UncertaintyStructure {
        &self.structure
    }

    pub fn uncertainty_box(&self) -> &UncertaintyBox {
        &self.bbox
    }

    pub fn with_box(&self, bbox: UncertaintyBox) -> Result<Self, LfrError> {
        Self::new(self.plant.clone(), self.structure.clone(), bbox)
    }

    /// `Δ(δ) ⋆ P`.
    pub fn close_at(&self, delta: &[f64]) -> Result<LfrPlant, LfrError> {
        self.plant.close_uncertainty(&self.structure.expand(delta)?)
    }

    /// `Δ(δ) ⋆ P ⋆ F` from `d` to `e`.
    pub fn closed_loop(&self, delta: &[f64], gain: &ControllerGain) -> Result<StateSpace, LfrError> {
        self.plant.closed_loop(&self.structure.expand(delta)?, gain)
    }
}

/// Base data `(A, B2, B3, C2, D22, D23)` for the three-parameter example
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BasePlant {
    pub A: Matrix,
    pub B2: Matrix,
    pub B3: Matrix,
    pub C2: Matrix,
    pub D22: Matrix,
    pub D23: Matrix,
}

/// Attaches the fixed three-parameter uncertainty channel to a base plant:
/// `δ1` and `δ3` enter through state 1, `δ2` through state 2, and `δ3`
/// additionally scales the first control input.
///
/// `D11`, `D12`, `D21` are zero. `B1`, `C1` and `D13` carry the fixed
/// patterns and are padded with zeros to the base dimensions. The bound
/// structure is three scalar blocks on `[-1, 1]^3`.
pub fn build_example_plant(base: BasePlant) -> Result<Problem, LfrError> {
    let nx = base.A.nrows();
    let nu = base.B3.ncols();
    if nx < 2 {
        return Err(LfrError::Invalid(format!("example construction needs nx >= 2, got {nx}")));
    }
    if nu < 1 {
        return Err(LfrError::Invalid("example construction needs nu >= 1".into()));
    }
    let (nd, ne) = (base.B2.ncols(), base.C2.nrows());
    let mut b1 = Matrix::zeros(nx, 3);
    b1[(0, 0)] = 1.0;
    b1[(0, 2)] = 1.0;
    b1[(1, 1)] = 1.0;
    let mut c1 = Matrix::zeros(3, nx);
    c1[(0, 0)] = 1.0;
    c1[(1, 1)] = 1.0;
    c1[(2, 1)] = 1.0;
    let mut d13 = Matrix::zeros(3, nu);
    d13[(2, 0)] = 1.0;
    let plant = LfrPlant::new(PlantBlocks {
        A: base.A,
        B1: b1,
        B2: base.B2,
        B3: base.B3,
        C1: c1,
        D11: Matrix::zeros(3, 3),
        D12: Matrix::zeros(3, nd),
        D13: d13,
        C2: base.C2,
        D21: Matrix::zeros(ne, 3),
        D22: base.D22,
        D23: base.D23,
    })?;
    Problem::new(plant, UncertaintyStructure::scalars(3), UncertaintyBox::unit(3))
}
