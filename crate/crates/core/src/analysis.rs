//! Stability and H∞-norm computations.

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lfr::{ControllerGain, LfrError, LfrPlant, Matrix, StateSpace, UncertaintyBox, UncertaintyStructure};

type CMatrix = DMatrix<Complex<f64>>;

/// Spectral abscissa required before any norm computation.
pub const STABILITY_MARGIN: f64 = 1e-8;
/// Default relative tolerance of [`hinf_norm`].
pub const DEFAULT_RTOL: f64 = 1e-8;
/// Default number of log-spaced points of [`hinf_norm_grid`].
pub const DEFAULT_GRID: usize = 400;

const MAX_LEVEL_ITERATIONS: usize = 200;
/// Relative slack below the level under which a Hamiltonian crossing is discarded.
const CROSSING_RTOL: f64 = 1e-6;
/// Relative half-width of the window searched around each crossing.
const CROSSING_WINDOW: f64 = 0.05;
const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("system is not stable (spectral abscissa {abscissa:e})")]
    Unstable { abscissa: f64 },
    #[error("eigenvalue iteration did not converge on a {n}x{n} matrix")]
    EigenFailure { n: usize },
    #[error("norm computation did not converge after {iterations} level tests")]
    NonConvergence { iterations: usize },
    #[error("closed loop unstable at {} sampled parameter values", .0.len())]
    UnstableSamples(Vec<Vec<f64>>),
    #[error(transparent)]
    Lfr(#[from] LfrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    Bisection,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    /// Frequency (rad/s) where the largest singular value was observed.
    pub peak_frequency: f64,
    pub method: NormMethod,
    pub tolerance: f64,
}

pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>, AnalysisError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(AnalysisError::EigenFailure { n })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the eigenvalues of `a` (`-inf` for an empty matrix).
pub fn spectral_abscissa(a: &Matrix) -> Result<f64, AnalysisError> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &Matrix) -> Result<bool, AnalysisError> {
    Ok(spectral_abscissa(a)? < -STABILITY_MARGIN)
}

fn require_stable(a: &Matrix) -> Result<Vec<Complex<f64>>, AnalysisError> {
    let eig = eigenvalues(a)?;
    let abscissa = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= -STABILITY_MARGIN {
        return Err(AnalysisError::Unstable { abscissa });
    }
    Ok(eig)
}

fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}

/// Largest singular value of `C (jωI - A)^{-1} B + D`.
pub fn sigma_max_at(sys: &StateSpace, omega: f64) -> f64 {
    let n = sys.order();
    let (p, m) = sys.d.shape();
    if p == 0 || m == 0 {
        return 0.0;
    }
    let mut g = to_complex(&sys.d);
    if n > 0 {
        let mut s = to_complex(&(-&sys.a));
        for i in 0..n {
            s[(i, i)] += Complex::new(0.0, omega);
        }
        let x = s.lu().solve(&to_complex(&sys.b));
        match x {
            Some(x) => g += to_complex(&sys.c) * x,
            None => return f64::INFINITY,
        }
    }
    g.singular_values().max()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn spectral_radius(eig: &[Complex<f64>]) -> f64 {
    eig.iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Imaginary-axis frequencies of the Hamiltonian at level `gamma`.
/// Requires `gamma > σmax(D)`.
fn hamiltonian_crossings(sys: &StateSpace, gamma: f64) -> Result<Vec<f64>, AnalysisError> {
    let n = sys.order();
    let (a, b, c, d) = (&sys.a, &sys.b, &sys.c, &sys.d);
    let m = d.ncols();
    let g2 = gamma * gamma;
    let r = Matrix::identity(m, m) * g2 - d.transpose() * d;
    let r_inv = r.try_inverse().ok_or(AnalysisError::NonConvergence { iterations: 0 })?;
    let a_h = a + b * &r_inv * d.transpose() * c;
    let p = d.nrows();
    let outer = Matrix::identity(p, p) + d * &r_inv * d.transpose();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_h);
    h.view_mut((0, n), (n, n)).copy_from(&(b * &r_inv * b.transpose()));
    h.view_mut((n, 0), (n, n)).copy_from(&(-(c.transpose() * outer * c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a_h.transpose()));
    let tol = 1e-7 * (1.0 + h.norm());
    let mut freqs: Vec<f64> = eigenvalues(&h)?.into_iter().filter(|l| l.re.abs() <= tol).map(|l| l.im.abs()).collect();
    freqs.sort_by(|x, y| x.total_cmp(y));
    freqs.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    Ok(freqs)
}

/// H∞ norm by level-set iteration on the Hamiltonian imaginary-axis test.
///
/// Each level `γ` that still has imaginary-axis eigenvalues is a lower
/// bound; the next lower bound is the peak of `σmax` over the crossing
/// frequencies and their midpoints. When these steps stall, the level is
/// chosen by geometric bisection between the bounds instead. The returned
/// value is a level without crossings, so it is an upper bound within
/// `rtol` of the norm.
pub fn hinf_norm(sys: &StateSpace, rtol: f64) -> Result<NormResult, AnalysisError> {
    let eig = require_stable(&sys.a)?;
    let (p, m) = sys.d.shape();
    let d_norm = if p == 0 || m == 0 { 0.0 } else { sys.d.singular_values().max() };
    if sys.order() == 0 || p == 0 || m == 0 {
        return Ok(NormResult {
            value: d_norm,
            peak_frequency: f64::INFINITY,
            method: NormMethod::Bisection,
            tolerance: 0.0,
        });
    }

    let mut lo = d_norm;
    let mut peak = f64::INFINITY;
    let consider = |omega: f64, lo: &mut f64, peak: &mut f64| {
        let s = sigma_max_at(sys, omega);
        if s > *lo {
            *lo = s;
            *peak = omega;
        }
    };
    consider(0.0, &mut lo, &mut peak);
    let scale = spectral_radius(&eig).max(1e-6);
    for w in eig.iter().map(|l| l.im.abs()).filter(|w| *w > 0.0) {
        consider(w, &mut lo, &mut peak);
    }
    for w in logspace(1e-3 * scale, 1e3 * scale, 20) {
        consider(w, &mut lo, &mut peak);
    }
    if lo == 0.0 {
        return Ok(NormResult { value: 0.0, peak_frequency: 0.0, method: NormMethod::Bisection, tolerance: 0.0 });
    }

    let mut hi = f64::INFINITY;
    let mut stalled = false;
    for _ in 0..MAX_LEVEL_ITERATIONS {
        if hi <= lo * (1.0 + rtol) {
            return Ok(NormResult { value: hi, peak_frequency: peak, method: NormMethod::Bisection, tolerance: rtol });
        }
        let gamma = match (stalled, hi.is_finite()) {
            (false, _) => lo * (1.0 + rtol),
            (true, true) => (lo * hi).sqrt().max(lo * (1.0 + rtol)),
            (true, false) => 2.0 * lo,
        };
        let freqs = hamiltonian_crossings(sys, gamma)?;
        let mut candidates = freqs.clone();
        candidates.extend(freqs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let before = lo;
        let mut level_reached = false;
        let mut probe = |w: f64, lo: &mut f64, peak: &mut f64| {
            let s = sigma_max_at(sys, w);
            level_reached |= s > before && s >= gamma * (1.0 - CROSSING_RTOL);
            if s > *lo {
                *lo = s;
                *peak = w;
            }
        };
        for &w in &candidates {
            probe(w, &mut lo, &mut peak);
        }
        for &w in &freqs {
            let (a, b) = if w > 0.0 {
                (w * (1.0 - CROSSING_WINDOW), w * (1.0 + CROSSING_WINDOW))
            } else {
                (0.0, CROSSING_WINDOW * scale)
            };
            let (wl, _) = golden_max(|x| sigma_max_at(sys, x), a, b, 60);
            probe(wl, &mut lo, &mut peak);
        }
        if !level_reached {
            hi = hi.min(gamma);
            continue;
        }
        lo = lo.min(hi);
        stalled = lo <= before * (1.0 + 1e-3);
    }
    Err(AnalysisError::NonConvergence { iterations: MAX_LEVEL_ITERATIONS })
}

/// Frequency-sweep estimate of the H∞ norm.
///
/// `n_grid` log-spaced frequencies over `[1e-4, 1e4]` times the spectral
/// radius of `A`, plus `ω = 0`, followed by golden-section refinement around
/// the largest local maxima of the sweep. Always a lower bound of the norm.
pub fn hinf_norm_grid(sys: &StateSpace, n_grid: usize) -> Result<NormResult, AnalysisError> {
    let eig = require_stable(&sys.a)?;
    let rho = spectral_radius(&eig);
    let scale = if rho > 0.0 { rho } else { 1.0 };
    let mut omegas = vec![0.0];
    omegas.extend(logspace(1e-4 * scale, 1e4 * scale, n_grid.max(2)));
    let values: Vec<f64> = omegas.iter().map(|&w| sigma_max_at(sys, w)).collect();

    let (mut best, mut best_w) = (f64::NEG_INFINITY, 0.0);
    for (&w, &v) in omegas.iter().zip(&values) {
        if v > best {
            best = v;
            best_w = w;
        }
    }
    let mut maxima: Vec<usize> = (1..omegas.len())
        .filter(|&i| values[i] >= values[i - 1] && (i + 1 == omegas.len() || values[i] >= values[i + 1]))
        .collect();
    maxima.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    maxima.truncate(5);
    for i in maxima {
        let left = if i > 1 { omegas[i - 1] } else { omegas[i] * 0.5 };
        let right = if i + 1 < omegas.len() { omegas[i + 1] } else { omegas[i] * 2.0 };
        let (w, v) = golden_max(|lw: f64| sigma_max_at(sys, lw.exp()), left.ln(), right.ln(), 80);
        if v > best {
            best = v;
            best_w = w.exp();
        }
    }
    let (p, m) = sys.d.shape();
    if p > 0 && m > 0 {
        let d_norm = sys.d.singular_values().max();
        if d_norm > best {
            best = d_norm;
            best_w = f64::INFINITY;
        }
    }
    Ok(NormResult { value: best.max(0.0), peak_frequency: best_w, method: NormMethod::Grid, tolerance: f64::NAN })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub samples: usize,
}

/// Largest `‖Δ(δ) ⋆ P ⋆ F‖∞` over a tensor grid of `bbox` that includes
/// every vertex. Unstable samples are reported as an error, never skipped.
pub fn worst_case_grid(
    plant: &LfrPlant,
    structure: &UncertaintyStructure,
    bbox: &UncertaintyBox,
    gain: &ControllerGain,
    samples_per_axis: usize,
) -> Result<WorstCase, AnalysisError> {
    let points = bbox.grid(samples_per_axis.max(2));
    let results: Vec<(Vec<f64>, Result<f64, AnalysisError>)> = points
        .into_par_iter()
        .map(|delta| {
            let r = structure
                .expand(&delta)
                .and_then(|dm| plant.closed_loop(&dm, gain))
                .map_err(AnalysisError::from)
                .and_then(|sys| hinf_norm(&sys, DEFAULT_RTOL).map(|n| n.value));
            (delta, r)
        })
        .collect();
    let mut unstable = Vec::new();
    let mut best = WorstCase { value: f64::NEG_INFINITY, argmax: Vec::new(), samples: results.len() };
    for (delta, r) in results {
        match r {
            Ok(v) if v > best.value => {
                best.value = v;
                best.argmax = delta;
            }
            Ok(_) => {}
            Err(AnalysisError::Unstable { .. }) => unstable.push(delta),
            Err(e) => return Err(e),
        }
    }
    if !unstable.is_empty() {
        return Err(AnalysisError::UnstableSamples(unstable));
    }
    Ok(best)
}
