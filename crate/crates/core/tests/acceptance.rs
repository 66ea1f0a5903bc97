//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 10 needs external base-plant data. Point `LFRTUNE_AC3_BASE`
//! at a base-plant problem file to enable it; otherwise it is skipped.

use std::process::ExitCode;
use std::time::Instant;

use lfrtune::analysis::{hinf_norm, hinf_norm_grid, spectral_abscissa, DEFAULT_GRID, DEFAULT_RTOL};
use lfrtune::baseline::minimize_over_delta;
use lfrtune::explore::{run_algorithm1, Experimenter, ExplorationConfig, ExplorationReport, Harness, Phase};
use lfrtune::io::load_problem;
use lfrtune::lfr::{ControllerGain, Interval, Problem, UncertaintyBox, UncertaintyStructure};
use lfrtune::partition::uniform_split;
use lfrtune::random::{random_nominal_problem, random_problem, random_stable_system, RandomProblemConfig};
use lfrtune::synthesis::{
    certificate_residuals, nominal_synthesis, robust_performance_bound, synthesize_cells, DgScaling, PerfCell,
    SynthesisOutcome,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const RUNS: usize = 50;
const EXPLORE: ExplorationConfig = ExplorationConfig { n: 4, n1: 2, n2: 2, eps: 0.05 };
const DELTA_BUDGET: usize = 8;
const SAFETY_SAMPLES: usize = 100;
const SANDWICH_TOL: f64 = 1e-4;
const CHAIN_TOL: f64 = 1e-6;
const AUDIT_TOL: f64 = 1e-7;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Run {
    problem: Problem,
    delta0: Vec<f64>,
    gamma_rp: SynthesisOutcome,
    gamma_nom: SynthesisOutcome,
    report: ExplorationReport,
    harness_experiments: usize,
    explore_violations: usize,
    delta_gains: Vec<ControllerGain>,
    delta_violations: usize,
    first_cells: Vec<(PerfCell, SynthesisOutcome)>,
    unsafe_gains: Vec<String>,
}

/// Gains that fail to stabilize `Δ(δ) ⋆ P` at a vertex or sample of `bbox`.
fn unsafe_points(
    problem: &Problem,
    bbox: &UncertaintyBox,
    gain: &ControllerGain,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut points = bbox.vertices();
    points.extend((0..SAFETY_SAMPLES).map(|_| bbox.sample(rng)));
    points
        .into_iter()
        .filter(|p| {
            let a = problem.closed_loop(p, gain).expect("well posed").a;
            !(spectral_abscissa(&a).expect("eigenvalues") < 0.0)
        })
        .collect()
}

fn campaign() -> Vec<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let cfg = RandomProblemConfig::default();
    let mut candidates = Vec::new();
    let mut drawn = 0;
    while candidates.len() < RUNS {
        drawn += 1;
        let inst = random_problem(&mut rng, &cfg);
        match robust_performance_bound(&inst.problem, EXPLORE.eps) {
            Ok(rp) if rp.is_feasible() => candidates.push((inst, rp, rng.gen::<u64>())),
            _ => {}
        }
    }
    println!("campaign: {RUNS} problems with feasible robust performance bound out of {drawn} drawn");
    candidates
        .into_par_iter()
        .map(|(inst, gamma_rp, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let problem = inst.problem;
            let delta0 = inst.delta0;
            let mut harness = Harness::new(problem.clone(), delta0.clone()).expect("secret in box");
            let report = run_algorithm1(&problem, &EXPLORE, &mut harness).expect("exploration");
            let gamma_nom = nominal_synthesis(&problem, harness.audit_delta0()).expect("nominal synthesis");
            let mut delta_harness = Harness::new(problem.clone(), delta0.clone()).expect("secret in box");
            let bbox = problem.uncertainty_box().clone();
            minimize_over_delta(&problem, &mut delta_harness, &bbox, EXPLORE.eps, DELTA_BUDGET).expect("delta search");
            let delta_gains: Vec<ControllerGain> = delta_harness.log().iter().map(|e| e.gain.clone()).collect();

            let mut unsafe_gains = Vec::new();
            for it in &report.iterations {
                for r in &it.records {
                    if let Some(g) = &r.gain {
                        let bad = unsafe_points(&problem, &it.full_box, g, &mut rng);
                        if !bad.is_empty() {
                            unsafe_gains.push(format!("explore gain unstable at {:?}", bad[0]));
                        }
                    }
                }
            }
            for g in &delta_gains {
                let bad = unsafe_points(&problem, &bbox, g, &mut rng);
                if !bad.is_empty() {
                    unsafe_gains.push(format!("delta-search gain unstable at {:?}", bad[0]));
                }
            }

            let cells = uniform_split(&bbox, 0, EXPLORE.n).expect("split").cells().to_vec();
            let first_cells = cells
                .iter()
                .cloned()
                .zip(synthesize_cells(&problem, &bbox, &cells, EXPLORE.eps))
                .filter_map(|(c, o)| o.ok().map(|o| (PerfCell::from_box(c), o)))
                .collect();

            Run {
                harness_experiments: harness.experiments(),
                explore_violations: harness.violations().len(),
                delta_violations: delta_harness.violations().len(),
                problem,
                delta0,
                gamma_rp,
                gamma_nom,
                report,
                delta_gains,
                first_cells,
                unsafe_gains,
            }
        })
        .collect()
}

fn ac1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let nx = rng.gen_range(1..=8);
        let (nin, nout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let sys = random_stable_system(&mut rng, nx, nin, nout);
        let exact = hinf_norm(&sys, DEFAULT_RTOL).expect("stable").value;
        let grid = hinf_norm_grid(&sys, DEFAULT_GRID).expect("stable").value;
        worst = worst.max((exact - grid).abs() / exact.max(f64::MIN_POSITIVE));
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("100 systems, worst relative gap {worst:.2e}, {secs:.2} s");
    if worst <= 1e-3 && secs < 30.0 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn ac2(runs: &[Run]) -> Verdict {
    let hidden: usize = runs.iter().map(|r| r.explore_violations + r.delta_violations).sum();
    let sampled: usize = runs.iter().map(|r| r.unsafe_gains.len()).sum();
    let gains: usize = runs.iter().map(|r| r.report.experiments + r.delta_gains.len()).sum();
    let msg = format!("{gains} implemented gains, {hidden} hidden-plant violations, {sampled} box violations");
    if hidden == 0 && sampled == 0 {
        Verdict::Pass(msg)
    } else {
        let first = runs.iter().flat_map(|r| r.unsafe_gains.iter()).next().cloned().unwrap_or_default();
        Verdict::Fail(format!("{msg}; {first}"))
    }
}

fn ac3(runs: &[Run]) -> Verdict {
    let (mut checked, mut failed) = (0, Vec::new());
    for (i, run) in runs.iter().enumerate() {
        for it in &run.report.iterations {
            for r in &it.records {
                if !r.cell.contains(&run.delta0) {
                    continue;
                }
                if let Some(l) = r.cost() {
                    checked += 1;
                    if l > r.gamma_eps * (1.0 + CHAIN_TOL) {
                        failed.push(format!("run {i}: L = {l} > {}", r.gamma_eps));
                    }
                }
            }
        }
    }
    let msg = format!("{checked} cells containing the hidden parameter checked, {} violations", failed.len());
    if failed.is_empty() && checked > 0 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(format!("{msg} {failed:?}"))
    }
}

fn ac4(runs: &[Run]) -> Verdict {
    let mut shrinks = 0;
    let mut strict = 0;
    let mut lost = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        for it in run.report.iterations.iter().filter(|it| it.phase == Phase::Shrink) {
            shrinks += 1;
            if it.full_box_after != it.full_box {
                strict += 1;
            }
            if !it.full_box_after.contains(&run.delta0) {
                lost.push(i);
            }
        }
    }
    let msg = format!("{shrinks} shrinking steps ({strict} reduced the box), {} lost the hidden parameter", lost.len());
    if lost.is_empty() && shrinks > 0 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn ac5(runs: &[Run]) -> Verdict {
    let mut bad = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let costs: Vec<Option<f64>> =
            run.report.iterations.iter().filter(|it| it.phase == Phase::Refine).map(|it| it.best_cost_so_far).collect();
        for w in costs.windows(2) {
            match (w[0], w[1]) {
                (Some(a), Some(b)) if b <= a => {}
                (None, _) => {}
                _ => bad.push(i),
            }
        }
    }
    let msg = format!("{} runs checked, {} with an increase", runs.len(), bad.len());
    if bad.is_empty() {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(format!("{msg} {bad:?}"))
    }
}

fn ac6(runs: &[Run]) -> Verdict {
    let mut bad = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let lo = run.gamma_nom.gamma;
        let hi = run.gamma_rp.gamma;
        match run.report.final_cost {
            Some(g) if g >= lo - SANDWICH_TOL && g <= hi + SANDWICH_TOL => {}
            other => bad.push(format!("run {i}: {other:?} not in [{lo:.6}, {hi:.6}]")),
        }
    }
    let msg = format!("{} runs, {} outside [γ_nom, γ_rp]", runs.len(), bad.len());
    if bad.is_empty() {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(format!("{msg} {bad:?}"))
    }
}

fn ac7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..20 {
        let problem = random_nominal_problem(&mut rng, 6);
        let nom = nominal_synthesis(&problem, &[]);
        let rp = robust_performance_bound(&problem, 0.0);
        match (nom, rp) {
            (Ok(n), Ok(r)) if n.is_feasible() && r.is_feasible() => {
                worst = worst.max((r.gamma - n.gamma).abs() / n.gamma);
            }
            (n, r) => {
                failures.push(format!("plant {i}: nominal {:?}, robust {:?}", n.map(|o| o.gamma), r.map(|o| o.gamma)))
            }
        }
    }
    let msg = format!("20 plants, worst relative gap {worst:.2e}");
    if failures.is_empty() && worst <= 0.05 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(format!("{msg} {failures:?}"))
    }
}

fn ac8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let structure = UncertaintyStructure::new(vec![2, 1, 3]).expect("sizes");
    let shapes = [
        ("unit", UncertaintyBox::unit(3)),
        (
            "shifted",
            UncertaintyBox::new(vec![
                Interval::new(0.2, 0.6).unwrap(),
                Interval::new(-3.0, -1.0).unwrap(),
                Interval::new(1.0, 4.0).unwrap(),
            ])
            .unwrap(),
        ),
        (
            "degenerate axis",
            UncertaintyBox::new(vec![
                Interval::new(-0.5, 0.5).unwrap(),
                Interval::point(0.3),
                Interval::new(0.0, 2.0).unwrap(),
            ])
            .unwrap(),
        ),
    ];
    let mut worst = f64::INFINITY;
    for (_, bbox) in &shapes {
        for _ in 0..1000 {
            let d = structure
                .sizes()
                .iter()
                .map(|&q| {
                    let l = nalgebra::DMatrix::<f64>::from_fn(q, q, |_, _| rng.gen_range(-1.0..1.0));
                    &l * l.transpose() + nalgebra::DMatrix::<f64>::identity(q, q) * 1e-6
                })
                .collect();
            let g = structure
                .sizes()
                .iter()
                .map(|&q| {
                    let a = nalgebra::DMatrix::<f64>::from_fn(q, q, |_, _| rng.gen_range(-3.0..3.0));
                    &a - a.transpose()
                })
                .collect();
            let s = DgScaling { d, g, c: bbox.center(), r: bbox.radius() };
            let delta = bbox.sample(&mut rng);
            worst = worst.min(s.multiplier_quadratic(&delta).symmetric_eigenvalues().min());
        }
    }
    let msg = format!("3000 draws over unit, shifted and degenerate-axis boxes, smallest eigenvalue {worst:.2e}");
    if worst >= -1e-10 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn ac9(runs: &[Run]) -> Verdict {
    let (mut checked, mut solver_side, mut resubstituted) = (0, 0, 0);
    for run in runs {
        let bbox = PerfCell::from_box(run.problem.uncertainty_box().clone());
        let nominal_cell = PerfCell::Point(run.delta0.clone());
        let mut outcomes = vec![(&bbox, &run.gamma_rp), (&nominal_cell, &run.gamma_nom)];
        outcomes.extend(run.first_cells.iter().map(|(c, o)| (c, o)));
        for (cell, out) in outcomes {
            let Some(cert) = &out.certificate else { continue };
            checked += 1;
            if !out.diagnostics.audit_passed {
                solver_side += 1;
            }
            let res = certificate_residuals(&run.problem, cell, cert).expect("residuals");
            if !res.within(AUDIT_TOL) {
                resubstituted += 1;
            }
        }
    }
    let msg = format!(
        "{checked} certificates, {solver_side} failed the solver-side audit, {resubstituted} failed independent re-substitution"
    );
    if checked > 0 && solver_side == 0 && resubstituted == 0 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn ac10() -> Verdict {
    let Ok(path) = std::env::var("LFRTUNE_AC3_BASE") else {
        return Verdict::Skip("set LFRTUNE_AC3_BASE to a base-plant problem file to enable".into());
    };
    let problem = match load_problem(std::path::Path::new(&path)) {
        Ok(p) => p,
        Err(e) => return Verdict::Fail(format!("cannot load {path}: {e}")),
    };
    let delta0 = vec![0.7, -0.1, 0.7];
    let nom = nominal_synthesis(&problem, &delta0).map(|o| o.gamma).unwrap_or(f64::NAN);
    let rp = robust_performance_bound(&problem, 0.05).map(|o| o.gamma).unwrap_or(f64::NAN);
    let run = |n1, n2| {
        let mut h = Harness::new(problem.clone(), delta0.clone()).ok()?;
        let cfg = ExplorationConfig { n: 6, n1, n2, eps: 0.05 };
        run_algorithm1(&problem, &cfg, &mut h).ok()?.final_cost
    };
    let g33 = run(3, 3).unwrap_or(f64::NAN);
    let g06 = run(0, 6).unwrap_or(f64::NAN);
    let msg = format!("γ_nom = {nom:.4}, γ^(3,3) = {g33:.4}, γ^(0,6) = {g06:.4}, γ_rp = {rp:.4}");
    let reproduces = (nom - 3.07).abs() <= 0.02 * 3.07;
    let ordered = nom <= g33 && g33 <= g06 && g06 <= rp;
    if reproduces && ordered {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn ac11(runs: &[Run]) -> Verdict {
    let planned = EXPLORE.n * (EXPLORE.n1 + EXPLORE.n2);
    let mut bad = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let skipped = run.report.skipped_cells;
        let aborted = run.report.aborted.is_some();
        if aborted || run.harness_experiments != planned - skipped || run.report.experiments != run.harness_experiments
        {
            bad.push(format!("run {i}: {} experiments, {skipped} skipped, aborted {aborted}", run.harness_experiments));
        }
    }
    let skipped: usize = runs.iter().map(|r| r.report.skipped_cells).sum();
    let msg = format!("{} runs of {planned} planned cells, {skipped} cells infeasible in total", runs.len());
    if bad.is_empty() {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(format!("{msg} {bad:?}"))
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let runs = campaign();
    println!("campaign finished in {:.1} s", start.elapsed().as_secs_f64());
    let verdicts = [
        ("1 H-infinity engine", ac1()),
        ("2 safety", ac2(&runs)),
        ("3 certified bound chain", ac3(&runs)),
        ("4 shrink soundness", ac4(&runs)),
        ("5 monotone best cost", ac5(&runs)),
        ("6 sandwich", ac6(&runs)),
        ("7 degenerate reduction", ac7()),
        ("8 multiplier class", ac8()),
        ("9 certificate audit", ac9(&runs)),
        ("10 reference reproduction", ac10()),
        ("11 budget accounting", ac11(&runs)),
    ];
    let mut failed = 0;
    for (name, v) in &verdicts {
        match v {
            Verdict::Pass(m) => println!("AC{name}: PASS ({m})"),
            Verdict::Fail(m) => {
                failed += 1;
                println!("AC{name}: FAIL ({m})");
            }
            Verdict::Skip(m) => println!("AC{name}: SKIP ({m})"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
