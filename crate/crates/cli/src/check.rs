//! Randomized end-to-end campaign on one problem: safety of every
//! implemented gain, the certified bound in the cell of the hidden
//! parameter, and containment of the hidden parameter after shrinking.

use lfrtune::analysis::spectral_abscissa;
use lfrtune::explore::{run_algorithm1, ExplorationConfig, Harness, Phase};
use lfrtune::lfr::{ControllerGain, Problem, UncertaintyBox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;

const SAMPLES: usize = 100;
const CHAIN_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct RunCheck {
    pub delta0: Vec<f64>,
    pub experiments: usize,
    pub skipped_cells: usize,
    pub final_cost: Option<f64>,
    pub hidden_violations: usize,
    pub box_violations: usize,
    pub chain_violations: usize,
    pub shrink_violations: usize,
    pub aborted: Option<String>,
}

impl RunCheck {
    pub fn passed(&self) -> bool {
        self.hidden_violations + self.box_violations + self.chain_violations + self.shrink_violations == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub runs: Vec<RunCheck>,
    pub passed: bool,
}

fn unstable_somewhere(
    problem: &Problem,
    bbox: &UncertaintyBox,
    gain: &ControllerGain,
    rng: &mut ChaCha8Rng,
) -> Result<bool, CliError> {
    let mut points = bbox.vertices();
    points.extend((0..SAMPLES).map(|_| bbox.sample(rng)));
    for p in points {
        let a = problem.closed_loop(&p, gain)?.a;
        if !(spectral_abscissa(&a)? < 0.0) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn check_run(problem: &Problem, config: &ExplorationConfig, delta0: Vec<f64>, seed: u64) -> Result<RunCheck, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut harness = Harness::new(problem.clone(), delta0.clone())?;
    let report = run_algorithm1(problem, config, &mut harness)?;
    let (mut box_violations, mut chain_violations, mut shrink_violations) = (0, 0, 0);
    for it in &report.iterations {
        for r in &it.records {
            if let Some(g) = &r.gain {
                if unstable_somewhere(problem, &it.full_box, g, &mut rng)? {
                    box_violations += 1;
                }
            }
            if let Some(l) = r.cost() {
                if r.cell.contains(&delta0) && l > r.gamma_eps * (1.0 + CHAIN_RTOL) {
                    chain_violations += 1;
                }
            }
        }
        if it.phase == Phase::Shrink && !it.full_box_after.contains(&delta0) {
            shrink_violations += 1;
        }
    }
    Ok(RunCheck {
        delta0,
        experiments: report.experiments,
        skipped_cells: report.skipped_cells,
        final_cost: report.final_cost,
        hidden_violations: harness.violations().len(),
        box_violations,
        chain_violations,
        shrink_violations,
        aborted: report.aborted,
    })
}

/// The first run uses `delta0`; the others draw the hidden parameter
/// uniformly from the box.
pub fn run_campaign(
    problem: &Problem,
    config: &ExplorationConfig,
    delta0: &[f64],
    runs: usize,
    seed: u64,
) -> Result<CheckReport, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bbox = problem.uncertainty_box();
    let jobs: Vec<(Vec<f64>, u64)> = (0..runs)
        .map(|k| {
            let d = if k == 0 { delta0.to_vec() } else { bbox.sample(&mut rng) };
            (d, seed.wrapping_add(k as u64 + 1))
        })
        .collect();
    let runs = jobs.into_par_iter().map(|(d, s)| check_run(problem, config, d, s)).collect::<Result<Vec<_>, _>>()?;
    let passed = runs.iter().all(RunCheck::passed);
    Ok(CheckReport { runs, passed })
}
