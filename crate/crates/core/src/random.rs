//! Random test instances: stable state-space systems and uncertain plants
//! with a hidden parameter.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::spectral_abscissa;
use crate::lfr::{Interval, LfrPlant, Matrix, PlantBlocks, Problem, StateSpace, UncertaintyBox, UncertaintyStructure};

fn gaussian<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random matrix with spectral abscissa exactly `abscissa`.
pub fn random_state_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, abscissa: f64) -> Matrix {
    let a = gaussian(rng, n, n, 1.0 / (n as f64).sqrt());
    let shift = spectral_abscissa(&a).expect("eigenvalues of a random matrix") - abscissa;
    a - Matrix::identity(n, n) * shift
}

/// Random stable system with spectral abscissa in `[-2, -0.05]`.
pub fn random_stable_system<R: Rng + ?Sized>(rng: &mut R, nx: usize, nin: usize, nout: usize) -> StateSpace {
    let abscissa = rng.gen_range(-2.0..-0.05);
    let a = random_state_matrix(rng, nx, abscissa);
    let b = gaussian(rng, nx, nin, 1.0);
    let c = gaussian(rng, nout, nx, 1.0);
    let d = if rng.gen_bool(0.5) { gaussian(rng, nout, nin, 0.5) } else { Matrix::zeros(nout, nin) };
    StateSpace::new(a, b, c, d).expect("consistent dimensions")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomProblemConfig {
    pub max_nx: usize,
    pub max_blocks: usize,
    pub max_block_size: usize,
    pub max_inputs: usize,
    /// Magnitude of the uncertainty channel `B1`, `C1`.
    pub uncertainty_gain: f64,
    /// Magnitude of `D11`.
    pub d11_scale: f64,
    /// Weight on the control effort in the performance output.
    pub control_weight: f64,
}

impl Default for RandomProblemConfig {
    fn default() -> Self {
        Self {
            max_nx: 6,
            max_blocks: 3,
            max_block_size: 2,
            max_inputs: 2,
            uncertainty_gain: 0.5,
            d11_scale: 0.1,
            control_weight: 0.5,
        }
    }
}

/// A random problem together with a hidden parameter inside its box.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstance {
    pub problem: Problem,
    pub delta0: Vec<f64>,
}

pub fn random_problem<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomProblemConfig) -> RandomInstance {
    let nx = rng.gen_range(2..=cfg.max_nx.max(2));
    let nu = rng.gen_range(1..=cfg.max_inputs.max(1));
    let nd = rng.gen_range(1..=cfg.max_inputs.max(1));
    let m = rng.gen_range(1..=cfg.max_blocks.max(1));
    let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=cfg.max_block_size.max(1))).collect();
    let q: usize = sizes.iter().sum();
    let ny = rng.gen_range(1..=nx);
    let ne = ny + nu;

    let abscissa = rng.gen_range(-1.0..0.5);
    let a = random_state_matrix(rng, nx, abscissa);
    let mut c2 = Matrix::zeros(ne, nx);
    c2.view_mut((0, 0), (ny, nx)).copy_from(&gaussian(rng, ny, nx, 1.0));
    let mut d23 = Matrix::zeros(ne, nu);
    for i in 0..nu {
        d23[(ny + i, i)] = cfg.control_weight;
    }
    let g = cfg.uncertainty_gain / (q as f64).sqrt();
    let plant = LfrPlant::new(PlantBlocks {
        A: a,
        B1: gaussian(rng, nx, q, g),
        B2: gaussian(rng, nx, nd, 1.0),
        B3: gaussian(rng, nx, nu, 1.0),
        C1: gaussian(rng, q, nx, g),
        D11: gaussian(rng, q, q, cfg.d11_scale / q as f64),
        D12: gaussian(rng, q, nd, 0.1),
        D13: gaussian(rng, q, nu, 0.1),
        C2: c2,
        D21: Matrix::zeros(ne, q),
        D22: Matrix::zeros(ne, nd),
        D23: d23,
    })
    .expect("consistent dimensions");
    let intervals: Vec<Interval> =
        (0..m).map(|_| Interval::new(rng.gen_range(-1.0..-0.2), rng.gen_range(0.2..1.0)).expect("ordered")).collect();
    let bbox = UncertaintyBox::new(intervals).expect("valid intervals");
    let delta0 = bbox.sample(rng);
    let structure = UncertaintyStructure::new(sizes).expect("positive sizes");
    let problem = Problem::new(plant, structure, bbox).expect("consistent problem");
    RandomInstance { problem, delta0 }
}

/// Random plant without uncertainty channel.
pub fn random_nominal_problem<R: Rng + ?Sized>(rng: &mut R, max_nx: usize) -> Problem {
    let nx = rng.gen_range(1..=max_nx.max(1));
    let nu = rng.gen_range(1..=2);
    let nd = rng.gen_range(1..=2);
    let ny = rng.gen_range(1..=nx);
    let ne = ny + nu;
    let mut c2 = Matrix::zeros(ne, nx);
    c2.view_mut((0, 0), (ny, nx)).copy_from(&gaussian(rng, ny, nx, 1.0));
    let mut d23 = Matrix::zeros(ne, nu);
    for i in 0..nu {
        d23[(ny + i, i)] = 0.5;
    }
    let abscissa = rng.gen_range(-1.0..0.5);
    let plant = LfrPlant::nominal(
        random_state_matrix(rng, nx, abscissa),
        gaussian(rng, nx, nd, 1.0),
        gaussian(rng, nx, nu, 1.0),
        c2,
        Matrix::zeros(ne, nd),
        d23,
    )
    .expect("consistent dimensions");
    Problem::new(plant, UncertaintyStructure::new(vec![]).expect("empty"), UncertaintyBox::new(vec![]).expect("empty"))
        .expect("consistent problem")
}
