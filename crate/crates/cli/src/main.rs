mod check;
mod error;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lfrtune::analysis::{hinf_norm, spectral_abscissa, DEFAULT_RTOL};
use lfrtune::baseline::{minimize_gain_direct, minimize_over_delta};
use lfrtune::explore::{run_algorithm1, Experimenter, ExplorationConfig, Harness};
use lfrtune::io::{gain_file, load_gain, load_problem, load_secret, to_json, write_json};
use lfrtune::lfr::{Interval, Problem, UncertaintyBox};
use lfrtune::synthesis::{
    certificate_residuals, nominal_synthesis, robust_sdp, robust_synthesis, PerfCell, SynthesisOutcome,
};
use serde_json::{json, Value};

use crate::error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "lfrtune", version, about = "Safe state-feedback tuning of partially unknown LTI plants")]
struct Cli {
    /// Seed for every randomized campaign.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum number of worker threads for parallel cell synthesis.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMode {
    /// Pattern search over the entries of the gain.
    Gains,
    /// Pattern search over the performance point of singleton-cell synthesis.
    Delta,
}

#[derive(Debug, clap::Args)]
struct ExploreArgs {
    /// Cells per split.
    #[arg(long = "N", default_value_t = 6)]
    n: usize,
    /// Iterations of the shrinking loop.
    #[arg(long, default_value_t = 3)]
    n1: usize,
    /// Iterations of the refining loop.
    #[arg(long, default_value_t = 3)]
    n2: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
}

impl ExploreArgs {
    fn config(&self) -> Result<ExplorationConfig, CliError> {
        check_eps(self.eps)?;
        Ok(ExplorationConfig { n: self.n, n1: self.n1, n2: self.n2, eps: self.eps })
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// H-infinity norm of the closed loop at a parameter value.
    Norm {
        problem: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta: Vec<f64>,
        #[arg(long)]
        gain: PathBuf,
    },
    /// Best nominal level by state feedback at a parameter value.
    Nominal {
        problem: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta: Vec<f64>,
    },
    /// Robust synthesis on the declared box, with performance on a cell.
    Synth {
        problem: PathBuf,
        /// Performance cell as `lo1,hi1,lo2,hi2,...`; defaults to the whole box.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        cell: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Writes the assembled semidefinite program in triplet form.
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
    },
    /// Partition-based exploration against the hidden plant.
    Explore {
        problem: PathBuf,
        secret: PathBuf,
        #[command(flatten)]
        args: ExploreArgs,
        /// Report destination; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pattern-search baselines against the hidden plant.
    Baseline {
        problem: PathBuf,
        secret: PathBuf,
        #[arg(long, value_enum)]
        mode: BaselineMode,
        #[arg(long, default_value_t = 36)]
        budget: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Randomized safety and soundness campaign on one problem.
    Check {
        problem: PathBuf,
        secret: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[command(flatten)]
        args: ExploreArgs,
    },
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(CliError::parse(format!("eps must be a nonnegative number, got {eps}")))
    }
}

fn check_delta(problem: &Problem, delta: &[f64]) -> Result<(), CliError> {
    let bbox = problem.uncertainty_box();
    if delta.len() != bbox.dim() {
        return Err(CliError::parse(format!("--delta has {} entries, the box has {}", delta.len(), bbox.dim())));
    }
    if !bbox.contains(delta) {
        return Err(CliError::parse(format!("--delta {delta:?} lies outside the declared box")));
    }
    Ok(())
}

fn parse_cell(problem: &Problem, flat: &[f64]) -> Result<UncertaintyBox, CliError> {
    let dim = problem.uncertainty_box().dim();
    if flat.len() != 2 * dim {
        return Err(CliError::parse(format!("--cell needs {} numbers (lo,hi per axis), got {}", 2 * dim, flat.len())));
    }
    let intervals = flat.chunks(2).map(|p| Interval::new(p[0], p[1])).collect::<Result<Vec<_>, _>>()?;
    Ok(UncertaintyBox::new(intervals)?)
}

fn outcome_json(problem: &Problem, perf: &PerfCell, out: &SynthesisOutcome) -> Result<Value, CliError> {
    let d = &out.diagnostics;
    let mut v = json!({
        "feasible": out.is_feasible(),
        "gamma": out.gamma,
        "gamma_eps": out.gamma_eps,
        "diagnostics": {
            "status": d.status,
            "iterations": d.iterations,
            "solve_time": d.solve_time,
            "scalars": d.scalars,
            "blocks": d.blocks,
            "min_audit_eigenvalue": d.min_audit_eigenvalue,
            "audit_passed": d.audit_passed,
            "y_condition": d.y_condition,
        },
    });
    if let Some(cert) = &out.certificate {
        v["gain"] = serde_json::to_value(gain_file(&cert.gain)).expect("serializable gain");
        v["residuals"] =
            serde_json::to_value(certificate_residuals(problem, perf, cert)?).expect("serializable residuals");
    }
    Ok(v)
}

fn emit(value: &impl serde::Serialize) {
    println!("{}", to_json(value));
}

fn infeasible(what: &str) -> CliError {
    CliError::new(ErrorKind::Infeasible, format!("{what} is infeasible"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Norm { problem, delta, gain } => {
            let problem = load_problem(&problem)?;
            check_delta(&problem, &delta)?;
            let gain = load_gain(&gain)?;
            let sys = problem.closed_loop(&delta, &gain)?;
            let abscissa = spectral_abscissa(&sys.a)?;
            let norm = hinf_norm(&sys, DEFAULT_RTOL)?;
            emit(&json!({ "norm": norm.value, "peak_frequency": norm.peak_frequency, "spectral_abscissa": abscissa }));
        }
        Command::Nominal { problem, delta } => {
            let problem = load_problem(&problem)?;
            check_delta(&problem, &delta)?;
            let out = nominal_synthesis(&problem, &delta)?;
            emit(&outcome_json(&problem, &PerfCell::Point(delta), &out)?);
            if !out.is_feasible() {
                return Err(infeasible("nominal synthesis"));
            }
        }
        Command::Synth { problem, cell, eps, dump_sdp } => {
            check_eps(eps)?;
            let problem = load_problem(&problem)?;
            let bbox = problem.uncertainty_box().clone();
            let perf = match cell {
                Some(flat) => PerfCell::from_box(parse_cell(&problem, &flat)?),
                None => PerfCell::from_box(bbox.clone()),
            };
            if let Some(path) = dump_sdp {
                let sdp = robust_sdp(&problem, &bbox, &perf)?;
                let mut w = BufWriter::new(File::create(&path)?);
                sdp.write_triplets(&mut w)?;
            }
            let out = robust_synthesis(&problem, &bbox, &perf, eps)?;
            emit(&outcome_json(&problem, &perf, &out)?);
            if !out.is_feasible() {
                return Err(infeasible("robust synthesis"));
            }
        }
        Command::Explore { problem, secret, args, output } => {
            let config = args.config()?;
            let problem = load_problem(&problem)?;
            let delta0 = load_secret(&secret, &problem)?;
            let mut harness = Harness::new(problem.clone(), delta0)?;
            let report = run_algorithm1(&problem, &config, &mut harness)?;
            match output {
                Some(path) => write_json(&path, &report)?,
                None => emit(&report),
            }
            if let Some(msg) = &report.aborted {
                return Err(CliError::new(ErrorKind::Infeasible, msg.clone()));
            }
        }
        Command::Baseline { problem, secret, mode, budget, eps } => {
            check_eps(eps)?;
            if budget == 0 {
                return Err(CliError::parse("budget must be at least 1"));
            }
            let problem = load_problem(&problem)?;
            let delta0 = load_secret(&secret, &problem)?;
            let mut harness = Harness::new(problem.clone(), delta0)?;
            let result = match mode {
                BaselineMode::Gains => {
                    let bbox = problem.uncertainty_box().clone();
                    let start = robust_synthesis(&problem, &bbox, &PerfCell::from_box(bbox.clone()), eps)?;
                    let Some(f0) = start.gain() else { return Err(infeasible("robust performance synthesis")) };
                    serde_json::to_value(minimize_gain_direct(&mut harness, f0, budget)?)
                }
                BaselineMode::Delta => {
                    let bbox = problem.uncertainty_box().clone();
                    serde_json::to_value(minimize_over_delta(&problem, &mut harness, &bbox, eps, budget)?)
                }
            }
            .expect("serializable result");
            emit(&json!({
                "mode": format!("{mode:?}").to_lowercase(),
                "result": result,
                "experiments": harness.experiments(),
                "violations": harness.violations(),
            }));
        }
        Command::Check { problem, secret, runs, args } => {
            let config = args.config()?;
            if runs == 0 {
                return Err(CliError::parse("runs must be at least 1"));
            }
            let problem = load_problem(&problem)?;
            let delta0 = load_secret(&secret, &problem)?;
            let report = check::run_campaign(&problem, &config, &delta0, runs, cli.seed)?;
            emit(&report);
            if !report.passed {
                return Err(CliError::new(ErrorKind::CheckFailed, "campaign found violations"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::parse(e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.kind.exit_code());
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.kind.exit_code())
        }
    }
}
