//! Shifting features along the eigenspace, `z(α) = z − αe`, and what the
//! shift does to the smoothness of ReLU and leaky ReLU outputs.

use serde::{Deserialize, Serialize};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::graph::{PropagationOperator, SpectralBasis};
use crate::linalg::{dot, norm};
use crate::smoothness::{normalized_smoothness, row_distance};

pub const DEFAULT_GRID_POINTS: usize = 601;
pub const DEFAULT_GRID_RANGE: (f64, f64) = (-1.5, 1.5);
const ARGMAX_REL_TOL: f64 = 1e-12;
const SMOOTH_INPUT_TOL: f64 = 1e-10;

/// Smoothness of `σ(z − α·direction)` over a grid of `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub alphas: Vec<f64>,
    pub s: Vec<f64>,
    pub dist: Vec<f64>,
    pub input_s: f64,
    pub input_dist: f64,
}

impl SweepCurve {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn min_s(&self) -> f64 {
        self.s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_s(&self) -> f64 {
        self.s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_dist(&self) -> f64 {
        self.dist.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `alpha,s,dist` with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,s,dist\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{}\n", self.alphas[i], self.s[i], self.dist[i]));
        }
        out
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    linspace(DEFAULT_GRID_RANGE.0, DEFAULT_GRID_RANGE.1, DEFAULT_GRID_POINTS)
}

/// `z − αe` for a unit vector `e`.
pub fn shifted_input(z: &[f64], alpha: f64, e: &[f64]) -> Result<Vec<f64>> {
    if z.len() != e.len() {
        return Err(Error::shape("shifted_input", (z.len(), 1), (e.len(), 1)));
    }
    let en = norm(e);
    if (en - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "shift direction has norm {en}, expected 1"
        )));
    }
    Ok(shift(z, alpha, e))
}

fn shift(z: &[f64], alpha: f64, dir: &[f64]) -> Vec<f64> {
    z.iter().zip(dir).map(|(zi, di)| zi - alpha * di).collect()
}

fn connected_unit_vector(basis: &SpectralBasis) -> Result<Vec<f64>> {
    basis.unit_vector()
}

/// Sweep along the unit eigenvector `e` of a connected graph.
pub fn sweep(z: &[f64], basis: &SpectralBasis, act: Activation, alphas: &[f64]) -> Result<SweepCurve> {
    let e = connected_unit_vector(basis)?;
    sweep_along(z, basis, act, alphas, &e)
}

/// Sweep along an arbitrary vector of the eigenspace, such as `D̃^{1/2}1`.
pub fn sweep_along(
    z: &[f64],
    basis: &SpectralBasis,
    act: Activation,
    alphas: &[f64],
    direction: &[f64],
) -> Result<SweepCurve> {
    connected_unit_vector(basis)?;
    if alphas.is_empty() {
        return Err(Error::Input("sweep grid is empty".into()));
    }
    if z.len() != basis.node_count() || direction.len() != z.len() {
        return Err(Error::shape(
            "sweep",
            (z.len(), direction.len()),
            (basis.node_count(), basis.node_count()),
        ));
    }
    let off = row_distance(direction, basis)?;
    if off > 1e-10 * norm(direction).max(1.0) {
        return Err(Error::Precondition(format!(
            "shift direction leaves the eigenspace (distance {off:e})"
        )));
    }
    act.validate()?;
    let mut s = Vec::with_capacity(alphas.len());
    let mut dist = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let h = act.apply_vec(&shift(z, alpha, direction));
        s.push(normalized_smoothness(&h, basis)?);
        dist.push(row_distance(&h, basis)?);
    }
    Ok(SweepCurve {
        alphas: alphas.to_vec(),
        s,
        dist,
        input_s: normalized_smoothness(z, basis)?,
        input_dist: row_distance(z, basis)?,
    })
}

fn require_rough(z: &[f64], basis: &SpectralBasis) -> Result<()> {
    let d = row_distance(z, basis)?;
    if d <= SMOOTH_INPUT_TOL * norm(z) || d == 0.0 {
        return Err(Error::Precondition(format!(
            "input lies in the eigenspace (distance {d:e}); the shift cannot change its smoothness"
        )));
    }
    Ok(())
}

/// `x = D̃^{-1/2} z`.
fn scaled(z: &[f64], op: &PropagationOperator) -> Vec<f64> {
    z.iter().zip(&op.degrees).map(|(zi, d)| zi / d.sqrt()).collect()
}

/// Threshold `‖D̃^{1/2}1‖ · max x` at and beyond which `σ(z(α)) = 0`.
pub fn relu_saturation_alpha(z: &[f64], op: &PropagationOperator) -> f64 {
    let x = scaled(z, op);
    op.degree_norm() * x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum over `α` of `s(σ(z − αe))` for ReLU on a connected graph:
/// `sqrt(Σ_{i ∈ argmax x} d_i / Σ_j d_j)`.
pub fn relu_min_smoothness_closed_form(z: &[f64], op: &PropagationOperator, basis: &SpectralBasis) -> Result<f64> {
    connected_unit_vector(basis)?;
    if z.len() != op.node_count() {
        return Err(Error::shape("relu_min_smoothness", (z.len(), 1), (op.node_count(), 1)));
    }
    require_rough(z, basis)?;
    let x = scaled(z, op);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = ARGMAX_REL_TOL * scale;
    let top: f64 = x
        .iter()
        .zip(&op.degrees)
        .filter(|(xi, _)| **xi >= max - tol)
        .map(|(_, d)| d)
        .sum();
    let total: f64 = op.degrees.iter().sum();
    Ok((top / total).sqrt())
}

/// True when `values` never increase by more than `slack` from one entry to the next.
pub fn is_non_increasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Checks that `s(σ(z − αe))` does not increase with `α` on a grid that stays
/// strictly below the saturation threshold.
pub fn verify_monotone_region(
    z: &[f64],
    op: &PropagationOperator,
    basis: &SpectralBasis,
    alphas: &[f64],
) -> Result<bool> {
    let threshold = relu_saturation_alpha(z, op);
    if let Some(bad) = alphas.iter().find(|&&a| a >= threshold) {
        return Err(Error::Precondition(format!(
            "grid point {bad} is not below the threshold {threshold}"
        )));
    }
    let mut grid = alphas.to_vec();
    grid.sort_by(f64::total_cmp);
    let curve = sweep(z, basis, Activation::Relu, &grid)?;
    Ok(is_non_increasing(&curve.s, 1e-10))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakyRange {
    pub min: f64,
    pub max: f64,
    /// Shift at which `σ_a(z(α))` has no eigenspace component.
    pub alpha_star: f64,
}

pub const LEAKY_PROBE_POINTS: usize = 10_000;

/// Range of `s(σ_a(z − αe))` over `α ∈ ⟨z,e⟩ ± 100‖z‖`, including the exact
/// zero of `⟨σ_a(z(α)), e⟩`.
pub fn leaky_range_probe(z: &[f64], basis: &SpectralBasis, a: f64) -> Result<LeakyRange> {
    let act = Activation::leaky(a)?;
    let e = connected_unit_vector(basis)?;
    if z.len() != e.len() {
        return Err(Error::shape("leaky_range_probe", (z.len(), 1), (e.len(), 1)));
    }
    require_rough(z, basis)?;
    let center = dot(z, &e);
    let radius = 100.0 * norm(z);
    let alpha_star = eigen_zero(z, &e, act, center, radius);

    let mut grid = linspace(center - radius, center + radius, LEAKY_PROBE_POINTS);
    grid.push(alpha_star);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for alpha in grid {
        let h = act.apply_vec(&shift(z, alpha, &e));
        let s = normalized_smoothness(&h, basis)?;
        min = min.min(s);
        max = max.max(s);
    }
    Ok(LeakyRange { min, max, alpha_star })
}

/// Bisection on `α ↦ ⟨σ(z − αe), e⟩`, which is non-increasing because `e > 0`
/// and `σ` is increasing.
fn eigen_zero(z: &[f64], e: &[f64], act: Activation, center: f64, radius: f64) -> f64 {
    let f = |alpha: f64| dot(&act.apply_vec(&shift(z, alpha, e)), e);
    let mut step = radius.max(1.0);
    let mut lo = center - step;
    let mut hi = center + step;
    for _ in 0..200 {
        if f(lo) >= 0.0 && f(hi) <= 0.0 {
            break;
        }
        step *= 2.0;
        lo = center - step;
        hi = center + step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn setup(g: &Graph) -> (PropagationOperator, SpectralBasis) {
        let op = PropagationOperator::new(g);
        let basis = SpectralBasis::new(g, &op).unwrap();
        (op, basis)
    }

    #[test]
    fn shift_examples() {
        let (_, basis) = setup(&Graph::path(3));
        let e = basis.unit_vector().unwrap();
        let z = vec![0.4, -1.0, 2.0];
        assert_eq!(shifted_input(&z, 0.0, &e).unwrap(), z);
        let zero = shifted_input(&e, 1.0, &e).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-15));
        let at = shifted_input(&z, dot(&z, &e), &e).unwrap();
        assert!(normalized_smoothness(&at, &basis).unwrap() < 1e-12);
        let before = row_distance(&z, &basis).unwrap();
        let after = row_distance(&shifted_input(&z, 0.7, &e).unwrap(), &basis).unwrap();
        assert!((before - after).abs() < 1e-12);
        assert!(matches!(
            shifted_input(&z, 1.0, &[1.0, 1.0, 1.0]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(shifted_input(&z, 1.0, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn identity_sweep_keeps_distance() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let (_, basis) = setup(&g);
        let z = vec![0.3, -0.8, 1.1, 0.2];
        let curve = sweep(&z, &basis, Activation::Identity, &default_grid()).unwrap();
        assert_eq!(curve.len(), 601);
        for d in &curve.dist {
            assert!((d - curve.input_dist).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_saturates_to_zero() {
        let (op, basis) = setup(&Graph::path(3));
        let z = vec![0.3, -0.8, 1.1];
        let big = relu_saturation_alpha(&z, &op) + 1.0;
        let curve = sweep(&z, &basis, Activation::Relu, &[big]).unwrap();
        assert_eq!(curve.s[0], 1.0);
        assert_eq!(curve.dist[0], 0.0);
    }

    #[test]
    fn sweep_needs_connected_graph() {
        let (_, basis) = setup(&Graph::empty(2));
        let r = sweep(&[1.0, 0.0], &basis, Activation::Relu, &[0.0]);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn closed_form_minimum_examples() {
        let (op, basis) = setup(&Graph::path(2));
        let v = relu_min_smoothness_closed_form(&[1.0, -1.0], &op, &basis).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);

        let (op, basis) = setup(&Graph::path(3));
        let v = relu_min_smoothness_closed_form(&[1.0, 0.0, -1.0], &op, &basis).unwrap();
        assert!((v - (2.0f64 / 7.0).sqrt()).abs() < 1e-15);

        // ends of the path share degree 2 and the maximum of x
        let v = relu_min_smoothness_closed_form(&[1.0, -1.0, 1.0], &op, &basis).unwrap();
        assert!((v - (4.0f64 / 7.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn closed_form_rejects_smooth_input() {
        let (op, basis) = setup(&Graph::path(3));
        let e = basis.unit_vector().unwrap();
        let r = relu_min_smoothness_closed_form(&e, &op, &basis);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn monotone_region() {
        let (op, basis) = setup(&Graph::path(3));
        let z = vec![1.0, 0.0, -1.0];
        let t = relu_saturation_alpha(&z, &op);
        let grid = linspace(-5.0, t - 1e-6, 400);
        assert!(verify_monotone_region(&z, &op, &basis, &grid).unwrap());
        assert!(verify_monotone_region(&z, &op, &basis, &[0.0]).unwrap());
        assert!(matches!(
            verify_monotone_region(&z, &op, &basis, &[t + 1.0]),
            Err(Error::Precondition(_))
        ));
        assert!(!is_non_increasing(&[0.9, 0.8, 0.85], 1e-10));
    }

    #[test]
    fn leaky_range_on_small_graph() {
        let (_, basis) = setup(&Graph::path(4));
        let z = vec![0.5, -0.2, 0.9, -1.3];
        let r = leaky_range_probe(&z, &basis, 0.2).unwrap();
        assert!(r.min <= 1e-3, "min {}", r.min);
        assert!(r.max >= 0.999 && r.max < 1.0, "max {}", r.max);
    }

    #[test]
    fn csv_layout() {
        let curve = SweepCurve {
            alphas: vec![0.0, 1.0],
            s: vec![0.5, 1.0],
            dist: vec![0.25, 0.0],
            input_s: 0.1,
            input_dist: 1.0,
        };
        assert_eq!(curve.to_csv(), "alpha,s,dist\n0,0.5,0.25\n1,1,0\n");
    }
}
