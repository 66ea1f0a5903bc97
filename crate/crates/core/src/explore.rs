//! Closed-loop experiments on the hidden plant and the two-loop
//! coordinate-like descent over the uncertainty box.

use std::cell::Cell;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{hinf_norm, spectral_abscissa, AnalysisError, DEFAULT_RTOL, STABILITY_MARGIN};
use crate::lfr::{ControllerGain, Interval, LfrError, Problem, UncertaintyBox};
use crate::partition::{uniform_split, CellEvidence, PartitionError};
use crate::synthesis::{synthesize_cells, SynthesisOutcome};

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Lfr(#[from] LfrError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("hidden parameter {delta0:?} lies outside the declared box")]
    SecretOutsideBox { delta0: Vec<f64> },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// 1-based experiment ordinal.
    pub ordinal: usize,
    pub stable: bool,
    /// Exact H∞ cost; `None` when the closed loop is unstable.
    pub cost: Option<f64>,
}

/// Anything that can run a closed-loop experiment with a given gain.
pub trait Experimenter {
    fn evaluate(&mut self, gain: &ControllerGain) -> Result<Measurement, ExploreError>;
    fn experiments(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub ordinal: usize,
    pub gain: ControllerGain,
    pub spectral_abscissa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedExperiment {
    pub gain: ControllerGain,
    pub measurement: Measurement,
}

/// Simulated real system `Δ(δ0) ⋆ P` whose parameter is only reachable
/// through [`Experimenter::evaluate`] and the audited accessor.
#[derive(Debug)]
pub struct Harness {
    problem: Problem,
    delta0: Vec<f64>,
    counter: usize,
    violations: Vec<SafetyViolation>,
    log: Vec<LoggedExperiment>,
    audit_reads: Cell<usize>,
}

impl Harness {
    pub fn new(problem: Problem, delta0: Vec<f64>) -> Result<Self, ExploreError> {
        if !problem.uncertainty_box().contains(&delta0) {
            return Err(ExploreError::SecretOutsideBox { delta0 });
        }
        problem.close_at(&delta0)?;
        Ok(Self { problem, delta0, counter: 0, violations: Vec::new(), log: Vec::new(), audit_reads: Cell::new(0) })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn violations(&self) -> &[SafetyViolation] {
        &self.violations
    }

    pub fn log(&self) -> &[LoggedExperiment] {
        &self.log
    }

    /// Ground truth for audits and tests. Every read is counted.
    pub fn audit_delta0(&self) -> &[f64] {
        self.audit_reads.set(self.audit_reads.get() + 1);
        &self.delta0
    }

    pub fn audit_reads(&self) -> usize {
        self.audit_reads.get()
    }
}

impl Experimenter for Harness {
    fn evaluate(&mut self, gain: &ControllerGain) -> Result<Measurement, ExploreError> {
        let sys = self.problem.closed_loop(&self.delta0, gain)?;
        self.counter += 1;
        let abscissa = spectral_abscissa(&sys.a)?;
        let measurement = if abscissa < -STABILITY_MARGIN {
            let cost = hinf_norm(&sys, DEFAULT_RTOL)?.value;
            Measurement { ordinal: self.counter, stable: true, cost: Some(cost) }
        } else {
            warn!("experiment {} destabilized the plant (abscissa {abscissa:e})", self.counter);
            self.violations.push(SafetyViolation {
                ordinal: self.counter,
                gain: gain.clone(),
                spectral_abscissa: abscissa,
            });
            Measurement { ordinal: self.counter, stable: false, cost: None }
        };
        self.log.push(LoggedExperiment { gain: gain.clone(), measurement: measurement.clone() });
        Ok(measurement)
    }

    fn experiments(&self) -> usize {
        self.counter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    /// Cells per split.
    pub n: usize,
    /// Iterations of the shrinking loop.
    pub n1: usize,
    /// Iterations of the refining loop.
    pub n2: usize,
    pub eps: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self { n: 6, n1: 3, n2: 3, eps: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    Feasible,
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub cell_index: usize,
    pub cell: UncertaintyBox,
    pub status: CellStatus,
    pub gain: Option<ControllerGain>,
    pub gamma: f64,
    pub gamma_eps: f64,
    pub measurement: Option<Measurement>,
}

impl ExperimentRecord {
    pub fn cost(&self) -> Option<f64> {
        self.measurement.as_ref().and_then(|m| m.cost)
    }

    pub fn evidence(&self) -> CellEvidence {
        CellEvidence { gamma_eps: self.gamma_eps, cost: self.cost() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Shrink,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub phase: Phase,
    pub iteration: usize,
    pub axis: usize,
    /// Box used for robust stability during this iteration.
    pub full_box: UncertaintyBox,
    pub records: Vec<ExperimentRecord>,
    /// Surviving cell indices (shrinking loop only).
    pub survivors: Vec<usize>,
    pub shrink_fallback: bool,
    pub full_box_after: UncertaintyBox,
    pub best_index: Option<usize>,
    pub pinned_after: UncertaintyBox,
    pub best_cost_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub config: ExplorationConfig,
    pub initial_box: UncertaintyBox,
    pub final_box: UncertaintyBox,
    pub pinned: UncertaintyBox,
    /// Gain with the lowest measured cost over all experiments.
    pub final_gain: Option<ControllerGain>,
    pub final_cost: Option<f64>,
    pub iterations: Vec<IterationLog>,
    pub experiments: usize,
    pub sdp_solves: usize,
    pub skipped_cells: usize,
    pub wall_time: f64,
    pub best_cost_trajectory: Vec<Option<f64>>,
    pub aborted: Option<String>,
}

/// Index of the stable record with the smallest cost; ties go to the
/// lowest index.
pub fn select_best(records: &[ExperimentRecord]) -> Option<usize> {
    select_best_among(records, 0..records.len())
}

fn select_best_among(records: &[ExperimentRecord], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in candidates {
        if let Some(l) = records[k].cost() {
            if best.map_or(true, |(_, b)| l < b) {
                best = Some((k, l));
            }
        }
    }
    best.map(|(k, _)| k)
}

struct Incumbent {
    gain: Option<ControllerGain>,
    cost: Option<f64>,
}

impl Incumbent {
    fn offer(&mut self, records: &[ExperimentRecord]) {
        for r in records {
            if let (Some(l), Some(g)) = (r.cost(), &r.gain) {
                if self.cost.map_or(true, |c| l < c) {
                    self.cost = Some(l);
                    self.gain = Some(g.clone());
                }
            }
        }
    }
}

fn run_cells(
    problem: &Problem,
    full_box: &UncertaintyBox,
    cells: &[UncertaintyBox],
    eps: f64,
    exp: &mut dyn Experimenter,
) -> Result<Vec<ExperimentRecord>, ExploreError> {
    let outcomes = synthesize_cells(problem, full_box, cells, eps);
    let mut records = Vec::with_capacity(cells.len());
    for (k, (cell, out)) in cells.iter().zip(outcomes).enumerate() {
        let record = match out {
            Ok(SynthesisOutcome { gamma, gamma_eps, certificate: Some(cert), .. }) => {
                let measurement = exp.evaluate(&cert.gain)?;
                ExperimentRecord {
                    cell_index: k,
                    cell: cell.clone(),
                    status: CellStatus::Feasible,
                    gain: Some(cert.gain),
                    gamma,
                    gamma_eps,
                    measurement: Some(measurement),
                }
            }
            Ok(_) => ExperimentRecord {
                cell_index: k,
                cell: cell.clone(),
                status: CellStatus::Infeasible,
                gain: None,
                gamma: f64::INFINITY,
                gamma_eps: f64::INFINITY,
                measurement: None,
            },
            Err(e) => {
                warn!("synthesis failed on cell {k}: {e}");
                ExperimentRecord {
                    cell_index: k,
                    cell: cell.clone(),
                    status: CellStatus::SolverFailure,
                    gain: None,
                    gamma: f64::INFINITY,
                    gamma_eps: f64::INFINITY,
                    measurement: None,
                }
            }
        };
        records.push(record);
    }
    Ok(records)
}

/// Runs the shrinking loop `n1` times and the refining loop `n2` times.
/// Robust stability is always certified on the current (shrunk) box, so
/// every implemented gain is safe for the hidden plant.
pub fn run_algorithm1(
    problem: &Problem,
    config: &ExplorationConfig,
    exp: &mut dyn Experimenter,
) -> Result<ExplorationReport, ExploreError> {
    let start = Instant::now();
    let m = problem.structure().blocks();
    if config.n < 1 {
        return Err(ExploreError::Config("number of cells must be at least 1".into()));
    }
    if m == 0 && config.n1 + config.n2 > 0 {
        return Err(ExploreError::Config("no uncertain parameters to explore".into()));
    }
    let initial_box = problem.uncertainty_box().clone();
    let mut full_box = initial_box.clone();
    let mut pinned: Vec<Interval> = initial_box.intervals().to_vec();
    let mut iterations = Vec::new();
    let mut incumbent = Incumbent { gain: None, cost: None };
    let mut trajectory = Vec::new();
    let (mut sdp_solves, mut skipped) = (0, 0);
    let mut aborted = None;

    let mut axis = 0;
    for it in 0..config.n1 {
        let part = uniform_split(&full_box, axis, config.n)?;
        let records = run_cells(problem, &full_box, part.cells(), config.eps, exp)?;
        sdp_solves += records.len();
        skipped += records.iter().filter(|r| r.gain.is_none()).count();
        if records.iter().all(|r| r.gain.is_none()) {
            aborted = Some(format!("all cells infeasible in shrinking iteration {it} on axis {axis}"));
            iterations.push(log_entry(
                Phase::Shrink,
                it,
                axis,
                &full_box,
                records,
                vec![],
                false,
                &full_box,
                None,
                &pinned,
                incumbent.cost,
            ));
            break;
        }
        let evidence: Vec<CellEvidence> = records.iter().map(ExperimentRecord::evidence).collect();
        let shrunk = part.shrink(&evidence)?;
        let best = select_best_among(&records, shrunk.survivors.iter().copied());
        if let Some(j) = best {
            pinned[axis] = part.cells()[j].interval(axis);
        }
        incumbent.offer(&records);
        trajectory.push(incumbent.cost);
        let before = full_box.clone();
        full_box = shrunk.bbox.clone();
        info!("shrinking iteration {it}: axis {axis} -> {:?}", full_box.interval(axis));
        iterations.push(log_entry(
            Phase::Shrink,
            it,
            axis,
            &before,
            records,
            shrunk.survivors,
            shrunk.fallback,
            &full_box,
            best,
            &pinned,
            incumbent.cost,
        ));
        axis = (axis + 1) % m;
    }

    if aborted.is_none() {
        axis = 0;
        for it in 0..config.n2 {
            let pinned_box = UncertaintyBox::new(pinned.clone())?;
            let part = uniform_split(&pinned_box, axis, config.n)?;
            let records = run_cells(problem, &full_box, part.cells(), config.eps, exp)?;
            sdp_solves += records.len();
            skipped += records.iter().filter(|r| r.gain.is_none()).count();
            if records.iter().all(|r| r.gain.is_none()) {
                aborted = Some(format!("all cells infeasible in refining iteration {it} on axis {axis}"));
                iterations.push(log_entry(
                    Phase::Refine,
                    it,
                    axis,
                    &full_box,
                    records,
                    vec![],
                    false,
                    &full_box,
                    None,
                    &pinned,
                    incumbent.cost,
                ));
                break;
            }
            let best = select_best(&records);
            if let Some(j) = best {
                pinned[axis] = part.cells()[j].interval(axis);
            }
            incumbent.offer(&records);
            trajectory.push(incumbent.cost);
            iterations.push(log_entry(
                Phase::Refine,
                it,
                axis,
                &full_box,
                records,
                vec![],
                false,
                &full_box,
                best,
                &pinned,
                incumbent.cost,
            ));
            axis = (axis + 1) % m;
        }
    }

    let pinned = UncertaintyBox::new(pinned)?;
    Ok(ExplorationReport {
        config: *config,
        initial_box,
        final_box: full_box,
        pinned,
        final_gain: incumbent.gain,
        final_cost: incumbent.cost,
        iterations,
        experiments: exp.experiments(),
        sdp_solves,
        skipped_cells: skipped,
        wall_time: start.elapsed().as_secs_f64(),
        best_cost_trajectory: trajectory,
        aborted,
    })
}

#[allow(clippy::too_many_arguments)]
fn log_entry(
    phase: Phase,
    iteration: usize,
    axis: usize,
    full_box: &UncertaintyBox,
    records: Vec<ExperimentRecord>,
    survivors: Vec<usize>,
    shrink_fallback: bool,
    full_box_after: &UncertaintyBox,
    best_index: Option<usize>,
    pinned: &[Interval],
    best_cost_so_far: Option<f64>,
) -> IterationLog {
    IterationLog {
        phase,
        iteration,
        axis,
        full_box: full_box.clone(),
        records,
        survivors,
        shrink_fallback,
        full_box_after: full_box_after.clone(),
        best_index,
        pinned_after: UncertaintyBox::new(pinned.to_vec()).expect("pinned intervals are valid"),
        best_cost_so_far,
    }
}
