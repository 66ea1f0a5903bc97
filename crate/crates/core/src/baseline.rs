//! Compass pattern search and the two baselines built on it: direct search
//! over gain entries and search over the performance point of the
//! singleton-cell synthesis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::explore::{Experimenter, ExploreError};
use crate::lfr::{ControllerGain, Problem, UncertaintyBox};
use crate::synthesis::{robust_synthesis, PerfCell, SynthesisError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSearchConfig {
    pub initial: Vec<f64>,
    /// Initial mesh size, relative to `scale`.
    pub mesh: f64,
    /// Per-coordinate step scale; coordinates with zero scale stay fixed.
    pub scale: Vec<f64>,
    pub expansion: f64,
    pub contraction: f64,
    /// Maximum number of distinct points evaluated.
    pub budget: usize,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub min_mesh: f64,
}

impl PatternSearchConfig {
    pub fn new(initial: Vec<f64>, scale: Vec<f64>, budget: usize) -> Self {
        Self { initial, mesh: 0.25, scale, expansion: 2.0, contraction: 0.5, budget, bounds: None, min_mesh: 1e-9 }
    }

    fn validate(&self) {
        assert!(self.budget >= 1, "budget must be at least 1");
        assert!(self.expansion > 1.0 && self.contraction < 1.0 && self.contraction > 0.0, "invalid mesh factors");
        assert_eq!(self.initial.len(), self.scale.len(), "scale length mismatch");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSearchResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Best value after each distinct evaluation.
    pub trajectory: Vec<f64>,
    pub evaluations: usize,
    pub final_mesh: f64,
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Compass search with opportunistic polling. Repeated points are served
/// from a cache and do not consume budget; points outside the bounds are
/// never evaluated.
pub fn pattern_search(mut f: impl FnMut(&[f64]) -> f64, cfg: &PatternSearchConfig) -> PatternSearchResult {
    cfg.validate();
    let n = cfg.initial.len();
    let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut trajectory = Vec::new();
    let inside =
        |x: &[f64]| cfg.bounds.as_ref().map_or(true, |b| x.iter().zip(b).all(|(v, (lo, hi))| lo <= v && v <= hi));
    let mut eval = |x: &[f64], cache: &mut HashMap<Vec<u64>, f64>, trajectory: &mut Vec<f64>| -> Option<f64> {
        if let Some(&v) = cache.get(&key(x)) {
            return Some(v);
        }
        if cache.len() >= cfg.budget {
            return None;
        }
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        cache.insert(key(x), v);
        let best = trajectory.last().map_or(v, |&b: &f64| b.min(v));
        trajectory.push(best);
        Some(v)
    };
    let mut x = cfg.initial.clone();
    let mut fx = eval(&x, &mut cache, &mut trajectory).expect("budget >= 1");
    let mut mesh = cfg.mesh;
    let directions: Vec<(usize, f64)> =
        (0..n).filter(|&i| cfg.scale[i] > 0.0).flat_map(|i| [(i, 1.0), (i, -1.0)]).collect();
    if directions.is_empty() {
        return PatternSearchResult {
            best_point: x,
            best_value: fx,
            trajectory,
            evaluations: cache.len(),
            final_mesh: mesh,
        };
    }
    'outer: while mesh >= cfg.min_mesh {
        let mut improved = false;
        for &(i, s) in &directions {
            let mut y = x.clone();
            y[i] += s * mesh * cfg.scale[i];
            if !inside(&y) {
                continue;
            }
            match eval(&y, &mut cache, &mut trajectory) {
                None => break 'outer,
                Some(fy) if fy < fx => {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
                Some(_) => {}
            }
        }
        mesh *= if improved { cfg.expansion } else { cfg.contraction };
    }
    PatternSearchResult { best_point: x, best_value: fx, trajectory, evaluations: cache.len(), final_mesh: mesh }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSearchResult {
    pub gain: ControllerGain,
    pub cost: f64,
    pub trajectory: Vec<f64>,
    pub evaluations: usize,
    pub unstable_evaluations: usize,
}

fn gain_scale(v: &[f64]) -> Vec<f64> {
    let max = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let floor = if max > 0.0 { 0.1 * max } else { 1.0 };
    v.iter().map(|x| x.abs().max(floor)).collect()
}

/// Pattern search over the entries of the gain, starting at `f0`.
/// Unstable experiments score `+∞`.
pub fn minimize_gain_direct(
    exp: &mut dyn Experimenter,
    f0: &ControllerGain,
    budget: usize,
) -> Result<GainSearchResult, ExploreError> {
    let (nu, nx) = f0.matrix().shape();
    let x0 = f0.to_vec();
    let cfg = PatternSearchConfig::new(x0.clone(), gain_scale(&x0), budget);
    let mut error = None;
    let mut unstable = 0;
    let res = pattern_search(
        |x| {
            if error.is_some() {
                return f64::INFINITY;
            }
            match exp.evaluate(&ControllerGain::from_vec(nu, nx, x)) {
                Ok(m) => m.cost.unwrap_or_else(|| {
                    unstable += 1;
                    f64::INFINITY
                }),
                Err(e) => {
                    error = Some(e);
                    f64::INFINITY
                }
            }
        },
        &cfg,
    );
    if let Some(e) = error {
        return Err(e);
    }
    Ok(GainSearchResult {
        gain: ControllerGain::from_vec(nu, nx, &res.best_point),
        cost: res.best_value,
        trajectory: res.trajectory,
        evaluations: res.evaluations,
        unstable_evaluations: unstable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSearchResult {
    pub delta: Vec<f64>,
    pub gain: Option<ControllerGain>,
    pub cost: f64,
    pub trajectory: Vec<f64>,
    pub evaluations: usize,
    pub sdp_solves: usize,
    pub infeasible_points: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// Pattern search over the performance point `δ` of the singleton-cell
/// synthesis (robust stability on `bbox`, nominal performance at `δ`).
/// Starts at `0` when it lies in the box, otherwise at the box center.
pub fn minimize_over_delta(
    problem: &Problem,
    exp: &mut dyn Experimenter,
    bbox: &UncertaintyBox,
    eps: f64,
    budget: usize,
) -> Result<DeltaSearchResult, BaselineError> {
    let m = bbox.dim();
    let zero = vec![0.0; m];
    let x0 = if bbox.contains(&zero) { zero } else { bbox.center() };
    let mut cfg = PatternSearchConfig::new(x0, bbox.radius(), budget);
    cfg.bounds = Some(bbox.intervals().iter().map(|iv| (iv.lo, iv.hi)).collect());
    let mut gains: HashMap<Vec<u64>, Option<ControllerGain>> = HashMap::new();
    let mut error: Option<BaselineError> = None;
    let mut infeasible = 0;
    let res = pattern_search(
        |d| {
            if error.is_some() {
                return f64::INFINITY;
            }
            let out = match robust_synthesis(problem, bbox, &PerfCell::Point(d.to_vec()), eps) {
                Ok(o) => o,
                Err(SynthesisError::SolverFailure(msg)) => {
                    log::warn!("synthesis failed at {d:?}: {msg}");
                    gains.insert(key(d), None);
                    infeasible += 1;
                    return f64::INFINITY;
                }
                Err(e) => {
                    error = Some(e.into());
                    return f64::INFINITY;
                }
            };
            let Some(cert) = out.certificate else {
                gains.insert(key(d), None);
                infeasible += 1;
                return f64::INFINITY;
            };
            let value = match exp.evaluate(&cert.gain) {
                Ok(meas) => meas.cost.unwrap_or(f64::INFINITY),
                Err(e) => {
                    error = Some(e.into());
                    f64::INFINITY
                }
            };
            gains.insert(key(d), Some(cert.gain));
            value
        },
        &cfg,
    );
    if let Some(e) = error {
        return Err(e);
    }
    let gain = if res.best_value.is_finite() { gains.get(&key(&res.best_point)).cloned().flatten() } else { None };
    Ok(DeltaSearchResult {
        delta: res.best_point,
        gain,
        cost: res.best_value,
        trajectory: res.trajectory,
        evaluations: res.evaluations,
        sdp_solves: res.evaluations,
        infeasible_points: infeasible,
    })
}
