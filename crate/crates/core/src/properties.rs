//! Randomized property checks behind `verify`. Each property draws its own
//! instances from a stream of the run seed, so properties can run in any
//! order or in parallel and still report the same numbers.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::activations::{
    leaky_eigenspace_residual, leaky_sphere_residual, leaky_split_residual, relu_eigenspace_residual,
    relu_sphere_residual, relu_split_residual, Activation,
};
use crate::autodiff::{finite_difference, Tape, Var};
use crate::control::{
    leaky_range_probe, linspace, relu_min_smoothness_closed_form, relu_saturation_alpha, shifted_input,
    verify_monotone_region,
};
use crate::error::{Error, Result};
use crate::generators::{connected_erdos_renyi, erdos_renyi};
use crate::graph::{Graph, PropagationOperator, SpectralBasis};
use crate::linalg::{dot, norm, relative_error, symmetric_eigendecomposition, Matrix};
use crate::models::{gcn_layer, sct_term, GraphContext, LayerKind, Model, ModelConfig, SctVars};
use crate::rng::{self, Rng};
use crate::smoothness::{dirichlet_energy, distance_to_eigenspace, normalized_smoothness, row_distance};
use crate::train::{nll_loss, sbm_dataset, train, SbmSpec, TrainConfig};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-5;
/// Gradient norms below this are compared in absolute rather than relative terms.
pub const FD_FLOOR: f64 = 1e-4;
/// Configurations with an activation input closer than this to a kink are redrawn.
pub const FD_KINK_MARGIN: f64 = 1e-3;

/// Outcome of one property over all of its instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub worst_residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub properties: Vec<PropertyOutcome>,
}

impl VerifyReport {
    pub fn failing(&self) -> Vec<&str> {
        self.properties
            .iter()
            .filter(|p| !p.passed)
            .map(|p| p.name.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Residuals of one property; a case passes when its residual is at most `tol`.
struct Cases {
    tol: f64,
    residuals: Vec<f64>,
}

impl Cases {
    fn new(tol: f64) -> Self {
        Cases {
            tol,
            residuals: Vec::new(),
        }
    }

    fn push(&mut self, r: f64) {
        self.residuals.push(r);
    }

    /// 0 when `ok`, 1 otherwise, against a tolerance of 0.
    fn flag(&mut self, ok: bool) {
        self.push(if ok { 0.0 } else { 1.0 });
    }
}

type Check = fn(&mut Rng) -> Result<Cases>;

pub struct Property {
    pub name: &'static str,
    check: Check,
}

pub const PROPERTIES: &[Property] = &[
    Property {
        name: "linalg.eigen_reconstruction",
        check: eigen_reconstruction,
    },
    Property {
        name: "linalg.matmul_associativity",
        check: matmul_associativity,
    },
    Property {
        name: "autodiff.finite_difference",
        check: autodiff_finite_difference,
    },
    Property {
        name: "graph.eigenspace_dimension",
        check: eigenspace_dimension,
    },
    Property {
        name: "graph.eigenbasis",
        check: eigenbasis,
    },
    Property {
        name: "graph.spectrum_interval",
        check: spectrum_interval,
    },
    Property {
        name: "smoothness.seminorm_equivalence",
        check: seminorm_equivalence,
    },
    Property {
        name: "smoothness.homogeneity",
        check: homogeneity,
    },
    Property {
        name: "smoothness.triangle_inequality",
        check: triangle_inequality,
    },
    Property {
        name: "smoothness.scale_invariance",
        check: scale_invariance,
    },
    Property {
        name: "activations.relu_sphere",
        check: relu_sphere,
    },
    Property {
        name: "activations.leaky_sphere",
        check: leaky_sphere,
    },
    Property {
        name: "activations.relu_split_identity",
        check: relu_split_identity,
    },
    Property {
        name: "activations.relu_eigenspace_identity",
        check: relu_eigenspace_identity,
    },
    Property {
        name: "activations.leaky_split_identity",
        check: leaky_split_identity,
    },
    Property {
        name: "activations.leaky_eigenspace_identity",
        check: leaky_eigenspace_identity,
    },
    Property {
        name: "activations.relu_contraction",
        check: relu_contraction,
    },
    Property {
        name: "activations.leaky_two_sided_bound",
        check: leaky_two_sided_bound,
    },
    Property {
        name: "activations.energy_contraction",
        check: energy_contraction,
    },
    Property {
        name: "control.shift_effect",
        check: shift_effect,
    },
    Property {
        name: "control.relu_min_closed_form",
        check: relu_min_closed_form,
    },
    Property {
        name: "control.relu_monotone_region",
        check: relu_monotone_region,
    },
    Property {
        name: "control.relu_saturation",
        check: relu_saturation,
    },
    Property {
        name: "control.smooth_input",
        check: smooth_input,
    },
    Property {
        name: "control.leaky_range",
        check: leaky_range,
    },
    Property {
        name: "models.sct_range",
        check: sct_range,
    },
    Property {
        name: "models.sct_contraction",
        check: sct_contraction,
    },
    Property {
        name: "models.sct_lowers_smoothness",
        check: sct_lowers_smoothness,
    },
    Property {
        name: "models.layer_gradients",
        check: layer_gradients,
    },
    Property {
        name: "train.determinism",
        check: train_determinism,
    },
    Property {
        name: "train.early_stopping",
        check: train_early_stopping,
    },
];

pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.name).collect()
}

/// Runs one property. `fault` adds 1 plus the tolerance to the first
/// residual, which must turn the property red.
pub fn run_property(name: &str, seed: u64, fault: bool) -> Result<PropertyOutcome> {
    let (idx, prop) = PROPERTIES
        .iter()
        .enumerate()
        .find(|(_, p)| p.name == name)
        .ok_or_else(|| Error::Input(format!("unknown property `{name}`")))?;
    let mut rng = rng::stream(seed, idx as u64 + 1);
    let mut cases = (prop.check)(&mut rng)?;
    if fault {
        match cases.residuals.first_mut() {
            Some(r) => *r += 1.0 + cases.tol.abs(),
            None => cases.residuals.push(f64::INFINITY),
        }
    }
    let failures = cases.residuals.iter().filter(|r| !(**r <= cases.tol)).count();
    let worst = cases
        .residuals
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) });
    Ok(PropertyOutcome {
        name: prop.name.to_string(),
        passed: failures == 0 && !cases.residuals.is_empty(),
        cases: cases.residuals.len(),
        failures,
        worst_residual: worst,
        tolerance: cases.tol,
    })
}

pub fn report(seed: u64, outcomes: Vec<PropertyOutcome>) -> VerifyReport {
    VerifyReport {
        seed,
        passed: outcomes.iter().all(|p| p.passed),
        properties: outcomes,
    }
}

/// Runs every property in registry order.
pub fn run_all(seed: u64, fault: Option<&str>) -> Result<VerifyReport> {
    if let Some(f) = fault {
        if !PROPERTIES.iter().any(|p| p.name == f) {
            return Err(Error::Input(format!("unknown property `{f}`")));
        }
    }
    let outcomes = PROPERTIES
        .iter()
        .map(|p| run_property(p.name, seed, fault == Some(p.name)))
        .collect::<Result<Vec<_>>>()?;
    Ok(report(seed, outcomes))
}

// Instance generators.

/// Random graph with `2..=max_n` nodes and a random edge probability. Graphs
/// may be disconnected unless `connected` is set.
pub fn random_graph(rng: &mut Rng, max_n: usize, connected: bool) -> Graph {
    let n = rng.random_range(2..=max_n.max(2));
    let p = rng.random_range(0.05..0.6);
    if connected {
        connected_erdos_renyi(n, p, rng)
    } else {
        erdos_renyi(n, p, rng)
    }
}

/// Uniform entries on `[−s, s]` with `s` log-uniform on `[0.1, 10]`.
pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let s = 10f64.powf(rng.random_range(-1.0..1.0));
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-s..=s))
}

pub struct Instance {
    pub graph: Graph,
    pub op: PropagationOperator,
    pub basis: SpectralBasis,
    pub z: Matrix,
}

/// Graph with `n ≤ 30` and features `d ≤ 8`.
pub fn random_instance(rng: &mut Rng, connected: bool) -> Result<Instance> {
    let graph = random_graph(rng, 30, connected);
    let op = PropagationOperator::new(&graph);
    let basis = SpectralBasis::new(&graph, &op)?;
    let d = rng.random_range(1..=8);
    let z = random_matrix(rng, d, graph.node_count());
    Ok(Instance { graph, op, basis, z })
}

/// Connected instance whose single feature row is not in the eigenspace.
fn rough_vector(rng: &mut Rng) -> Result<(PropagationOperator, SpectralBasis, Vec<f64>)> {
    loop {
        let graph = random_graph(rng, 30, true);
        let op = PropagationOperator::new(&graph);
        let basis = SpectralBasis::new(&graph, &op)?;
        let z = random_matrix(rng, 1, graph.node_count()).into_data();
        if row_distance(&z, &basis)? > 1e-6 * norm(&z) {
            return Ok((op, basis, z));
        }
    }
}

fn random_slope(rng: &mut Rng) -> f64 {
    rng.random_range(0.01..0.9)
}

// linalg

fn eigen_reconstruction(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-8);
    for _ in 0..50 {
        let n = rng.random_range(1..=12);
        let a = random_matrix(rng, n, n);
        let m = a.add(&a.transpose())?;
        let eig = symmetric_eigendecomposition(&m, 1e-12)?;
        let v = &eig.vectors;
        let rebuilt = v.matmul(&Matrix::from_diag(&eig.values))?.matmul(&v.transpose())?;
        c.push(relative_error(&rebuilt, &m, 1e-300)?);
    }
    Ok(c)
}

fn matmul_associativity(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..50 {
        let dims: Vec<usize> = (0..4).map(|_| rng.random_range(1..=9)).collect();
        let a = random_matrix(rng, dims[0], dims[1]);
        let b = random_matrix(rng, dims[1], dims[2]);
        let m = random_matrix(rng, dims[2], dims[3]);
        let left = a.matmul(&b)?.matmul(&m)?;
        let right = a.matmul(&b.matmul(&m)?)?;
        let scale = a.frobenius_norm() * b.frobenius_norm() * m.frobenius_norm();
        c.push(left.sub(&right)?.frobenius_norm() / scale.max(1e-300));
    }
    Ok(c)
}

/// Activations whose first derivative exists away from a finite kink set.
pub const GRADIENT_ACTIVATIONS: [Activation; 6] = [
    Activation::Relu,
    Activation::LeakyRelu(0.2),
    Activation::SRelu(-1.0),
    Activation::Elu(1.0),
    Activation::Selu {
        alpha: crate::activations::SELU_ALPHA,
        scale: crate::activations::SELU_SCALE,
    },
    Activation::Identity,
];

/// Random chain of matmul, add, Hadamard, activation and sum nodes over
/// parameter leaves, ending in a scalar.
fn random_program(leaves: &[Matrix], ops: &[u8], acts: &[Activation], tape: &mut Tape) -> Result<(Var, Vec<Var>)> {
    let vars: Vec<Var> = leaves.iter().map(|m| tape.param(m.clone())).collect();
    let mut cur = vars[0];
    let mut next = 1;
    for (k, &op) in ops.iter().enumerate() {
        cur = match op {
            0 => {
                let r = tape.matmul(cur, vars[next])?;
                next += 1;
                r
            }
            1 => {
                let r = tape.add(cur, vars[next])?;
                next += 1;
                r
            }
            2 => {
                let r = tape.hadamard(cur, vars[next])?;
                next += 1;
                r
            }
            _ => tape.activation(cur, acts[k]),
        };
    }
    let s = tape.sum(cur);
    let sq = tape.sum_squares(cur);
    let sq = tape.scale(sq, 0.1);
    Ok((tape.add(s, sq)?, vars))
}

fn autodiff_finite_difference(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(FD_TOL);
    let mut done = 0;
    while done < 50 {
        let rows = rng.random_range(1..=4);
        let mut cols = rng.random_range(1..=4);
        let mut leaves = vec![random_matrix(rng, rows, cols)];
        let len = rng.random_range(2..=6);
        let mut ops = Vec::with_capacity(len);
        let mut acts = Vec::with_capacity(len);
        for _ in 0..len {
            let op: u8 = rng.random_range(0..4);
            match op {
                0 => {
                    let k = rng.random_range(1..=4);
                    leaves.push(random_matrix(rng, cols, k));
                    cols = k;
                }
                1 | 2 => leaves.push(random_matrix(rng, rows, cols)),
                _ => {}
            }
            ops.push(op);
            acts.push(*GRADIENT_ACTIVATIONS.choose(rng).expect("nonempty"));
        }
        // Keep magnitudes moderate so that exponentials stay well conditioned.
        let leaves: Vec<Matrix> = leaves.iter().map(|m| m.scale(1.0 / m.max_abs().max(1.0))).collect();

        let mut tape = Tape::new();
        let (loss, vars) = random_program(&leaves, &ops, &acts, &mut tape)?;
        if tape.min_kink_distance() < FD_KINK_MARGIN {
            continue;
        }
        tape.backward(loss)?;
        let mut worst = 0.0f64;
        for (i, &v) in vars.iter().enumerate() {
            let fd = finite_difference(&leaves[i], FD_STEP, |m| {
                let mut probe = leaves.clone();
                probe[i] = m.clone();
                let mut t = Tape::new();
                let (l, _) = random_program(&probe, &ops, &acts, &mut t).expect("same shapes");
                t.value(l).data()[0]
            });
            worst = worst.max(relative_error(&tape.grad(v), &fd, FD_FLOOR)?);
        }
        c.push(worst);
        done += 1;
    }
    Ok(c)
}

// graph

fn eigenspace_dimension(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..100 {
        let g = random_graph(rng, 30, false);
        let op = PropagationOperator::new(&g);
        let basis = SpectralBasis::new(&g, &op)?;
        c.push((basis.m as f64 - basis.unit_multiplicity(1e-8) as f64).abs());
    }
    Ok(c)
}

fn eigenbasis(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let g = random_graph(rng, 30, false);
        let op = PropagationOperator::new(&g);
        let basis = SpectralBasis::new(&g, &op)?;
        let q = &basis.q;
        let fixed = op.g.matmul(q)?.sub(q)?.max_abs();
        let ortho = q.transpose().matmul(q)?.sub(&Matrix::identity(basis.m))?.max_abs();
        c.push(fixed.max(ortho));
    }
    Ok(c)
}

fn spectrum_interval(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..100 {
        let g = random_graph(rng, 30, false);
        let op = PropagationOperator::new(&g);
        let basis = SpectralBasis::new(&g, &op)?;
        let hi = basis.eigenvalues.first().copied().unwrap_or(1.0);
        let lo = basis.eigenvalues.last().copied().unwrap_or(1.0);
        c.push((hi - (1.0 + 1e-9)).max((-1.0 + 1e-9) - lo));
    }
    Ok(c)
}

// smoothness

fn seminorm_equivalence(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let lower = (1.0 - inst.basis.lambda_next.unwrap_or(1.0)).max(0.0).sqrt();
        let dist = distance_to_eigenspace(&inst.z, &inst.basis)?;
        let e = dirichlet_energy(&inst.z, &inst.op)?;
        c.push((lower * dist - e).max(e - 2f64.sqrt() * dist));
    }
    Ok(c)
}

fn homogeneity(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let k = rng.random_range(-5.0..5.0);
        let zk = inst.z.scale(k);
        let d0 = distance_to_eigenspace(&inst.z, &inst.basis)?;
        let d1 = distance_to_eigenspace(&zk, &inst.basis)?;
        let e0 = dirichlet_energy(&inst.z, &inst.op)?;
        let e1 = dirichlet_energy(&zk, &inst.op)?;
        let scale = k.abs() * inst.z.frobenius_norm();
        c.push(((d1 - k.abs() * d0).abs().max((e1 - k.abs() * e0).abs())) / scale.max(1e-300));
    }
    Ok(c)
}

fn triangle_inequality(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let other = random_matrix(rng, inst.z.rows(), inst.z.cols());
        let sum = inst.z.add(&other)?;
        let dist = |m: &Matrix| distance_to_eigenspace(m, &inst.basis);
        let energy = |m: &Matrix| dirichlet_energy(m, &inst.op);
        let r1 = dist(&sum)? - dist(&inst.z)? - dist(&other)?;
        let r2 = energy(&sum)? - energy(&inst.z)? - energy(&other)?;
        c.push(r1.max(r2));
    }
    Ok(c)
}

fn scale_invariance(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-12);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let mut k = rng.random_range(-5.0..5.0);
        if k == 0.0 {
            k = 1.0;
        }
        let z = inst.z.row(0);
        let zk: Vec<f64> = z.iter().map(|v| v * k).collect();
        c.push((normalized_smoothness(&zk, &inst.basis)? - normalized_smoothness(z, &inst.basis)?).abs());
    }
    Ok(c)
}

// activations

fn relu_sphere(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-9);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        c.push(relu_sphere_residual(&inst.z, &inst.basis)?.residual);
    }
    Ok(c)
}

fn leaky_sphere(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-9);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let a = random_slope(rng);
        c.push(leaky_sphere_residual(&inst.z, a, &inst.basis)?.residual);
    }
    Ok(c)
}

fn relu_split_identity(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        c.push(relu_split_residual(&inst.z) / inst.z.frobenius_norm_sq().max(1e-300));
    }
    Ok(c)
}

fn relu_eigenspace_identity(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        c.push(relu_eigenspace_residual(&inst.z, &inst.basis)? / inst.z.frobenius_norm_sq().max(1e-300));
    }
    Ok(c)
}

fn leaky_split_identity(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let a = random_slope(rng);
        c.push(leaky_split_residual(&inst.z, a) / inst.z.frobenius_norm_sq().max(1e-300));
    }
    Ok(c)
}

fn leaky_eigenspace_identity(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let a = random_slope(rng);
        c.push(leaky_eigenspace_residual(&inst.z, a, &inst.basis)? / inst.z.frobenius_norm_sq().max(1e-300));
    }
    Ok(c)
}

fn relu_contraction(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let h = Activation::Relu.apply(&inst.z);
        c.push(distance_to_eigenspace(&h, &inst.basis)? - distance_to_eigenspace(&inst.z, &inst.basis)?);
    }
    Ok(c)
}

fn leaky_two_sided_bound(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let a = random_slope(rng);
        let h = Activation::LeakyRelu(a).apply(&inst.z);
        let dz = distance_to_eigenspace(&inst.z, &inst.basis)?;
        let dh = distance_to_eigenspace(&h, &inst.basis)?;
        c.push((a * dz - dh).max(dh - dz));
    }
    Ok(c)
}

fn energy_contraction(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..100 {
        let inst = random_instance(rng, false)?;
        let a = random_slope(rng);
        let ez = dirichlet_energy(&inst.z, &inst.op)?;
        let er = dirichlet_energy(&Activation::Relu.apply(&inst.z), &inst.op)?;
        let el = dirichlet_energy(&Activation::LeakyRelu(a).apply(&inst.z), &inst.op)?;
        c.push((er - ez).max(el - ez));
    }
    Ok(c)
}

// control

fn s_after(z: &[f64], alpha: f64, e: &[f64], act: Activation, basis: &SpectralBasis) -> Result<f64> {
    normalized_smoothness(&act.apply_vec(&shifted_input(z, alpha, e)?), basis)
}

/// The shift never increases `‖·‖_M⊥`, yet smoothness can move either way:
/// ReLU saturates to `s = 1` and leaky ReLU reaches `s ≈ 0`.
fn shift_effect(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for _ in 0..50 {
        let (_, basis, z) = rough_vector(rng)?;
        let e = basis.unit_vector()?;
        let s0 = normalized_smoothness(&z, &basis)?;
        let d0 = row_distance(&z, &basis)?;
        let a = random_slope(rng);
        let leaky = Activation::LeakyRelu(a);
        let center = dot(&z, &e);
        let r = norm(&z);
        let mut grid = linspace(center - 3.0 * r, center + 3.0 * r, 2001);
        grid.push(leaky_range_probe(&z, &basis, a)?.alpha_star);
        let mut below = false;
        let mut above = false;
        let mut excess = f64::NEG_INFINITY;
        for &alpha in &grid {
            for act in [Activation::Relu, leaky] {
                let h = act.apply_vec(&shifted_input(&z, alpha, &e)?);
                let s = normalized_smoothness(&h, &basis)?;
                below |= s < s0;
                above |= s > s0;
                excess = excess.max(row_distance(&h, &basis)? - d0);
            }
        }
        c.push(if below && above { excess } else { 1.0 });
    }
    Ok(c)
}

/// Brute-force minimum of `s(ReLU(z − αe))`: a uniform grid below the
/// saturation threshold plus points approaching it geometrically.
fn relu_min_brute_force(z: &[f64], op: &PropagationOperator, basis: &SpectralBasis) -> Result<f64> {
    let e = basis.unit_vector()?;
    let hi = relu_saturation_alpha(z, op);
    let span = 3.0 * norm(z);
    let mut grid = linspace(hi - span, hi, 4001);
    grid.pop();
    for k in 1..=14 {
        let step = 10f64.powi(-k) * span.max(1e-300);
        grid.push(hi - step);
    }
    let mut best = f64::INFINITY;
    for alpha in grid {
        if alpha < hi {
            best = best.min(s_after(z, alpha, &e, Activation::Relu, basis)?);
        }
    }
    Ok(best)
}

fn relu_min_closed_form(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-4);
    for _ in 0..50 {
        let (op, basis, z) = rough_vector(rng)?;
        let closed = relu_min_smoothness_closed_form(&z, &op, &basis)?;
        c.push((closed - relu_min_brute_force(&z, &op, &basis)?).abs());
    }
    Ok(c)
}

fn relu_monotone_region(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..50 {
        let (op, basis, z) = rough_vector(rng)?;
        let hi = relu_saturation_alpha(&z, &op);
        let r = norm(&z);
        let top = hi - 1e-9 * r;
        let grid = linspace(hi - 3.0 * r, top, 400);
        c.flag(verify_monotone_region(&z, &op, &basis, &grid)?);
    }
    Ok(c)
}

/// `s = 1` beyond the saturation threshold. At the threshold itself the
/// shifted argmax entry is zero only up to rounding, so the first probe sits
/// `1e-12‖z‖` above it.
fn relu_saturation(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..50 {
        let (op, basis, z) = rough_vector(rng)?;
        let e = basis.unit_vector()?;
        let hi = relu_saturation_alpha(&z, &op);
        let r = norm(&z);
        let mut worst = 0.0f64;
        for alpha in [hi + 1e-12 * r, hi + 1e-9 * r, hi + r, hi + 10.0 * r] {
            worst = worst.max(1.0 - s_after(&z, alpha, &e, Activation::Relu, &basis)?);
        }
        c.push(worst);
    }
    Ok(c)
}

fn smooth_input(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-12);
    for _ in 0..50 {
        let g = random_graph(rng, 30, true);
        let op = PropagationOperator::new(&g);
        let basis = SpectralBasis::new(&g, &op)?;
        let e = basis.unit_vector()?;
        let k = rng.random_range(-3.0..3.0);
        let z: Vec<f64> = e.iter().map(|v| k * v).collect();
        let mut worst = 0.0f64;
        for alpha in linspace(-5.0, 5.0, 101) {
            for act in [Activation::Relu, Activation::LeakyRelu(0.2)] {
                worst = worst.max((1.0 - s_after(&z, alpha, &e, act, &basis)?).abs());
            }
        }
        c.push(worst);
    }
    Ok(c)
}

/// Leaky ReLU reaches `s ≤ 1e-3` and `s ≥ 0.999` but never `1`.
fn leaky_range(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..50 {
        let (_, basis, z) = rough_vector(rng)?;
        let range = leaky_range_probe(&z, &basis, random_slope(rng))?;
        c.flag(range.min <= 1e-3 && range.max >= 0.999 && range.max < 1.0);
    }
    Ok(c)
}

// models

fn sct_range(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    for i in 0..100 {
        let graph = random_graph(rng, 20, false);
        let ctx = GraphContext::new(graph)?;
        let n = ctx.node_count();
        let m = ctx.basis.m;
        let d = rng.random_range(1..=6);
        let mut tape = Tape::new();
        let h = tape.param(random_matrix(rng, d, n));
        let h0 = tape.param(random_matrix(rng, d, n));
        let q = tape.constant(ctx.basis.q.clone());
        let qt = tape.constant(ctx.basis.q.transpose());
        let l = rng.random_range(1..=8);
        let vars = if i % 2 == 0 {
            SctVars::Pool {
                w: tape.param(random_matrix(rng, d, m)),
            }
        } else {
            SctVars::Residual {
                w0: tape.param(random_matrix(rng, d, d)),
                w1: tape.param(random_matrix(rng, d, d)),
                theta: rng.random_range(0.05..2.0),
            }
        };
        let b = sct_term(&mut tape, h, h0, q, qt, vars, l)?;
        c.push(distance_to_eigenspace(tape.value(b), &ctx.basis)?);
    }
    Ok(c)
}

fn scaled_to_norm(w: Matrix, target: f64) -> Result<Matrix> {
    let s = w.spectral_norm()?;
    Ok(if s == 0.0 { w } else { w.scale(target / s) })
}

/// A GCN-SCT layer with `‖W‖₂·λ < 1` contracts `‖·‖_M⊥` by that factor.
fn sct_contraction(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(1e-10);
    let mut done = 0;
    while done < 50 {
        let ctx = GraphContext::new(random_graph(rng, 20, false))?;
        let lambda = ctx.basis.lambda2;
        if lambda == 0.0 {
            continue;
        }
        let n = ctx.node_count();
        let d = rng.random_range(1..=6);
        let s_l = rng.random_range(0.1..0.99) / lambda;
        let h_in = random_matrix(rng, d, n);
        let mut tape = Tape::new();
        let h = tape.constant(h_in.clone());
        let g = tape.constant(ctx.op.g.clone());
        let w = tape.param(scaled_to_norm(random_matrix(rng, d, d), s_l)?);
        let q = tape.constant(ctx.basis.q.clone());
        let qt = tape.constant(ctx.basis.q.transpose());
        let sw = tape.param(random_matrix(rng, d, ctx.basis.m));
        let b = sct_term(&mut tape, h, h, q, qt, SctVars::Pool { w: sw }, 1)?;
        let out = gcn_layer(&mut tape, h, g, w, Activation::Relu, Some(b))?;
        let before = distance_to_eigenspace(&h_in, &ctx.basis)?;
        let after = distance_to_eigenspace(tape.value(out), &ctx.basis)?;
        c.push(after - s_l * lambda * before);
        done += 1;
    }
    Ok(c)
}

/// Per-dimension shifts chosen by an α search, realized through pool SCT
/// weights, lower the largest per-dimension smoothness of a GCN layer.
fn sct_lowers_smoothness(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(-1e-12);
    let mut done = 0;
    while done < 50 {
        let ctx = GraphContext::new(random_graph(rng, 20, true))?;
        let e = ctx.basis.unit_vector()?;
        let n = ctx.node_count();
        let d = rng.random_range(1..=6);
        let h_in = random_matrix(rng, d, n);
        let w_val = random_matrix(rng, d, d);
        let coef: Vec<f64> = (0..d).map(|i| dot(h_in.row(i), &e)).collect();
        if coef.iter().any(|k| k.abs() < 1e-6) {
            continue;
        }
        let pre = w_val.matmul(&h_in)?.matmul(&ctx.op.g)?;
        if (0..d).any(|i| row_distance(pre.row(i), &ctx.basis).map_or(true, |r| r < 1e-6 * norm(pre.row(i)))) {
            continue;
        }
        // A row whose ReLU output already attains the smallest reachable
        // smoothness cannot be lowered by any shift.
        let relu_pre = Activation::Relu.apply(&pre);
        let mut top = (f64::NEG_INFINITY, 0);
        for i in 0..d {
            let s = normalized_smoothness(relu_pre.row(i), &ctx.basis)?;
            if s > top.0 {
                top = (s, i);
            }
        }
        if relu_min_smoothness_closed_form(pre.row(top.1), &ctx.op, &ctx.basis)? >= top.0 - 1e-9 {
            continue;
        }

        let mut sct_w = Matrix::zeros(d, 1);
        for i in 0..d {
            let z = pre.row(i);
            let r = norm(z);
            let center = dot(z, &e);
            let mut best = (f64::INFINITY, 0.0);
            for alpha in linspace(center - 3.0 * r, center + 3.0 * r, 601) {
                let s = s_after(z, alpha, &e, Activation::Relu, &ctx.basis)?;
                if s < best.0 {
                    best = (s, alpha);
                }
            }
            sct_w[(i, 0)] = -best.1 / coef[i];
        }

        let run = |with_sct: bool| -> Result<f64> {
            let mut tape = Tape::new();
            let h = tape.constant(h_in.clone());
            let g = tape.constant(ctx.op.g.clone());
            let w = tape.param(w_val.clone());
            let b = if with_sct {
                let q = tape.constant(ctx.basis.q.clone());
                let qt = tape.constant(ctx.basis.q.transpose());
                let sw = tape.param(sct_w.clone());
                Some(sct_term(&mut tape, h, h, q, qt, SctVars::Pool { w: sw }, 1)?)
            } else {
                None
            };
            let out = gcn_layer(&mut tape, h, g, w, Activation::Relu, b)?;
            let v = tape.value(out);
            let mut worst = 0.0f64;
            for i in 0..v.rows() {
                worst = worst.max(normalized_smoothness(v.row(i), &ctx.basis)?);
            }
            Ok(worst)
        };
        c.push(run(true)? - run(false)?);
        done += 1;
    }
    Ok(c)
}

/// Largest relative error, over parameters, between tape gradients of the
/// NLL (plus penalty) and central differences. `None` when an activation
/// input sits too close to a kink for differences to be trusted.
pub fn model_gradient_error(model: &Model, ctx: &GraphContext, x: &Matrix, labels: &[usize]) -> Result<Option<f64>> {
    let mask: Vec<usize> = (0..ctx.node_count()).collect();
    let loss_of = |m: &Model, tape: &mut Tape| -> Result<(Var, Vec<Var>)> {
        let fwd = m.forward(tape, ctx, x, None)?;
        let nll = nll_loss(tape, fwd.logits, labels, &mask)?;
        let loss = match fwd.penalty {
            Some(p) => tape.add(nll, p)?,
            None => nll,
        };
        Ok((loss, fwd.params))
    };
    let mut tape = Tape::new();
    let (loss, vars) = loss_of(model, &mut tape)?;
    if tape.min_kink_distance() < FD_KINK_MARGIN {
        return Ok(None);
    }
    tape.backward(loss)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &v) in vars.iter().enumerate() {
        let base = model.params()[i].value.clone();
        let fd = finite_difference(&base, FD_STEP, |m| {
            probe.params_mut()[i].value = m.clone();
            let mut t = Tape::new();
            let (l, _) = loss_of(&probe, &mut t).expect("forward succeeded once");
            t.value(l).data()[0]
        });
        probe.params_mut()[i].value = base;
        worst = worst.max(relative_error(&tape.grad(v), &fd, FD_FLOOR)?);
    }
    Ok(Some(worst))
}

/// Random small model of the given kind; the config may be rejected and redrawn.
pub fn random_model_case(rng: &mut Rng, kind: LayerKind) -> Result<(Model, GraphContext, Matrix, Vec<usize>)> {
    let ctx = GraphContext::new(random_graph(rng, 8, false))?;
    let n = ctx.node_count();
    let mut cfg = ModelConfig::new(kind, rng.random_range(1..=3), rng.random_range(2..=4));
    cfg.activation = *GRADIENT_ACTIVATIONS.choose(rng).expect("nonempty");
    cfg.seed = rng.random();
    cfg.theta = rng.random_range(0.1..1.5);
    cfg.alpha = rng.random_range(0.05..0.5);
    cfg.learnable_gcnii_coefficients = rng.random_bool(0.5);
    cfg.lambda_orth = rng.random_range(0.0..0.1);
    if kind.has_sct() && rng.random_bool(0.5) {
        cfg.sct_arch = Some(match kind.default_sct_arch() {
            crate::models::SctArch::Pool => crate::models::SctArch::Residual,
            crate::models::SctArch::Residual => crate::models::SctArch::Pool,
        });
    }
    let input = rng.random_range(1..=3);
    let classes = rng.random_range(2..=3);
    let model = Model::new(cfg, input, classes, ctx.basis.m)?;
    let x = random_matrix(rng, input, n);
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Ok((model, ctx, x, labels))
}

fn layer_gradients(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(FD_TOL);
    let mut done = 0;
    let mut attempts = 0;
    while done < 50 {
        attempts += 1;
        if attempts > 5000 {
            return Err(Error::Numerical(
                "could not draw configurations away from activation kinks".into(),
            ));
        }
        let kind = LayerKind::ALL[done % LayerKind::ALL.len()];
        let (model, ctx, x, labels) = random_model_case(rng, kind)?;
        if let Some(err) = model_gradient_error(&model, &ctx, &x, &labels)? {
            c.push(err);
            done += 1;
        }
    }
    Ok(c)
}

// train

fn quick_run(seed: u64) -> Result<crate::train::RunResult> {
    let ds = sbm_dataset(&SbmSpec::default(), seed)?;
    let ctx = GraphContext::new(ds.graph.clone())?;
    let mut cfg = ModelConfig::new(LayerKind::Gcn, 2, 8);
    cfg.seed = seed;
    let mut model = Model::new(cfg, ds.features.rows(), ds.num_classes, ctx.basis.m)?;
    let tc = TrainConfig {
        max_epochs: 80,
        patience: 20,
        seed,
        ..TrainConfig::default()
    };
    train(&mut model, &ds, &ctx, &tc)
}

fn train_determinism(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..2 {
        let seed = rng.random_range(0..1000);
        let a = quick_run(seed)?;
        let b = quick_run(seed)?;
        c.flag(a.to_json()? == b.to_json()?);
    }
    Ok(c)
}

fn train_early_stopping(rng: &mut Rng) -> Result<Cases> {
    let mut c = Cases::new(0.0);
    for _ in 0..2 {
        let r = quick_run(rng.random_range(0..1000))?;
        let min = r.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        let nonneg = r.grad_norms.iter().flatten().all(|g| *g >= 0.0);
        c.flag(r.val_loss[r.best_epoch] == min && nonneg);
    }
    Ok(c)
}
