//! Seeded experiment drivers: the α sweep on a random graph, the two-node
//! trajectory system and per-layer smoothness heatmaps.

use rand::Rng as _;
use serde::Serialize;

use crate::activations::Activation;
use crate::control::{sweep_along, SweepCurve};
use crate::error::{Error, Result};
use crate::generators::configuration_graph;
use crate::graph::{Graph, PropagationOperator, SpectralBasis};
use crate::linalg::{symmetric_eigendecomposition, Matrix};
use crate::rng;
use crate::smoothness::row_smoothness;

pub const SWEEP_NODES: usize = 100;
pub const SWEEP_DEGREES: (usize, usize) = (2, 10);
pub const SWEEP_FEATURE_RANGE: f64 = 1.5;
pub const DEFAULT_SWEEP_SLOPE: f64 = 0.2;

/// Random graph, input vector and shift direction for the α sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub graph: Graph,
    pub op: PropagationOperator,
    pub basis: SpectralBasis,
    pub z: Vec<f64>,
    /// `D̃^{1/2}1`, unnormalized.
    pub direction: Vec<f64>,
}

pub fn sweep_setup(seed: u64) -> Result<SweepSetup> {
    let mut graph_rng = rng::stream(seed, 0);
    let graph = configuration_graph(SWEEP_NODES, SWEEP_DEGREES.0, SWEEP_DEGREES.1, &mut graph_rng)?;
    let op = PropagationOperator::new(&graph);
    let basis = SpectralBasis::new(&graph, &op)?;
    let mut z_rng = rng::stream(seed, 1);
    let z = (0..SWEEP_NODES)
        .map(|_| z_rng.random_range(-SWEEP_FEATURE_RANGE..=SWEEP_FEATURE_RANGE))
        .collect();
    let direction = op.degrees.iter().map(|d| d.sqrt()).collect();
    Ok(SweepSetup {
        graph,
        op,
        basis,
        z,
        direction,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepExperiment {
    pub slope: f64,
    pub relu: SweepCurve,
    pub leaky: SweepCurve,
}

impl SweepExperiment {
    pub fn input_s(&self) -> f64 {
        self.relu.input_s
    }

    pub fn input_dist(&self) -> f64 {
        self.relu.input_dist
    }

    /// Largest amount by which any curve exceeds `‖z‖_M⊥`.
    pub fn worst_dist_excess(&self) -> f64 {
        [&self.relu, &self.leaky]
            .iter()
            .flat_map(|c| c.dist.iter().map(|d| d - c.input_dist))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_s(&self) -> f64 {
        self.relu.min_s().min(self.leaky.min_s())
    }

    pub fn max_s(&self) -> f64 {
        self.relu.max_s().max(self.leaky.max_s())
    }
}

pub fn run_sweep(setup: &SweepSetup, slope: f64, alphas: &[f64]) -> Result<SweepExperiment> {
    let relu = sweep_along(&setup.z, &setup.basis, Activation::Relu, alphas, &setup.direction)?;
    let leaky = sweep_along(
        &setup.z,
        &setup.basis,
        Activation::leaky(slope)?,
        alphas,
        &setup.direction,
    )?;
    Ok(SweepExperiment { slope, relu, leaky })
}

pub const TRAJECTORY_G: [[f64; 2]; 2] = [[0.592, 0.194], [0.194, 0.908]];
pub const TRAJECTORY_WEIGHT: f64 = 1.2;
pub const TRAJECTORY_ITERATIONS: usize = 50;

/// The two-node system `h ← ReLU(w·h·G + b)`.
#[derive(Debug, Clone)]
pub struct TrajectorySystem {
    pub g: Matrix,
    pub weight: f64,
    pub bias: [f64; 2],
    /// Unit eigenvector of the largest eigenvalue, with positive entries.
    pub e: [f64; 2],
    /// Unit vector orthogonal to `e`.
    pub e_perp: [f64; 2],
    pub eigenvalues: [f64; 2],
}

impl TrajectorySystem {
    /// The bias is `α(1, 1)/√2`. A bias along `e` itself leaves the
    /// distance to the eigenspace contracting at every step.
    pub fn new(alpha: f64) -> Result<Self> {
        let g = Matrix::from_rows(&[TRAJECTORY_G[0].to_vec(), TRAJECTORY_G[1].to_vec()]);
        let eig = symmetric_eigendecomposition(&g, 1e-12)?;
        let mut e = [eig.vectors[(0, 0)], eig.vectors[(1, 0)]];
        if e[0] < 0.0 {
            e = [-e[0], -e[1]];
        }
        let b = alpha / 2f64.sqrt();
        Ok(TrajectorySystem {
            g,
            weight: TRAJECTORY_WEIGHT,
            bias: [b, b],
            e,
            e_perp: [e[1], -e[0]],
            eigenvalues: [eig.values[0], eig.values[1]],
        })
    }

    pub fn step(&self, h: [f64; 2]) -> [f64; 2] {
        let g = &self.g;
        let mut out = [0.0; 2];
        for (j, o) in out.iter_mut().enumerate() {
            let pre = self.weight * (h[0] * g[(0, j)] + h[1] * g[(1, j)]) + self.bias[j];
            *o = pre.max(0.0);
        }
        out
    }

    pub fn distance(&self, h: [f64; 2]) -> f64 {
        (h[0] * self.e_perp[0] + h[1] * self.e_perp[1]).abs()
    }

    /// Bound `w·|λ₂|` on the per-step contraction of the distance when the
    /// bias lies in the eigenspace.
    pub fn contraction_factor(&self) -> f64 {
        self.weight * self.eigenvalues[1].abs()
    }
}

/// 20 starting points on a 5×4 grid over `[−1, 1]²`.
pub fn initial_points() -> Vec<[f64; 2]> {
    let xs = crate::control::linspace(-1.0, 1.0, 5);
    let ys = crate::control::linspace(-1.0, 1.0, 4);
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub points: Vec<[f64; 2]>,
    pub dist: Vec<f64>,
}

pub fn run_trajectories(system: &TrajectorySystem, iterations: usize) -> Vec<Trajectory> {
    initial_points()
        .into_iter()
        .map(|start| {
            let mut points = vec![start];
            for _ in 0..iterations {
                let next = system.step(*points.last().expect("nonempty"));
                points.push(next);
            }
            let dist = points.iter().map(|&p| system.distance(p)).collect();
            Trajectory { points, dist }
        })
        .collect()
}

/// Rows are layers `0..=L`, columns are feature dimensions.
pub fn smoothness_heatmap(layers: &[Matrix], basis: &SpectralBasis) -> Result<Matrix> {
    let first = layers.first().ok_or_else(|| Error::Input("no layers to plot".into()))?;
    let d = first.rows();
    let mut out = Matrix::zeros(layers.len(), d);
    for (l, h) in layers.iter().enumerate() {
        if h.rows() != d {
            return Err(Error::shape("smoothness_heatmap", h.shape(), first.shape()));
        }
        out.row_mut(l).copy_from_slice(&row_smoothness(h, basis)?);
    }
    Ok(out)
}
