use proptest::prelude::*;
use smoothctl::activations::Activation;
use smoothctl::control::{
    default_grid, leaky_range_probe, linspace, relu_min_smoothness_closed_form, relu_saturation_alpha, sweep,
    verify_monotone_region,
};
use smoothctl::graph::{Graph, PropagationOperator, SpectralBasis};
use smoothctl::properties::{random_graph, random_matrix};
use smoothctl::rng::seeded;

struct Case {
    degrees: Vec<f64>,
    op: PropagationOperator,
    basis: SpectralBasis,
    z: Vec<f64>,
}

fn case(seed: u64) -> Case {
    let mut rng = seeded(seed);
    loop {
        let g = random_graph(&mut rng, 30, true);
        let op = PropagationOperator::new(&g);
        let basis = SpectralBasis::new(&g, &op).unwrap();
        let z = random_matrix(&mut rng, 1, g.node_count()).into_data();
        let degrees: Vec<f64> = g.degrees().iter().map(|&d| d as f64 + 1.0).collect();
        let c = Case { degrees, op, basis, z };
        let s = oracle_s(&c.degrees, &c.z);
        if s < 1.0 - 1e-9 {
            return c;
        }
    }
}

/// `‖z_M‖/‖z‖` with `e_i = sqrt(d_i / Σd)` built directly from degrees.
fn oracle_s(degrees: &[f64], h: &[f64]) -> f64 {
    let total: f64 = degrees.iter().sum();
    let proj: f64 = h.iter().zip(degrees).map(|(v, d)| v * (d / total).sqrt()).sum();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        1.0
    } else {
        (proj.abs() / norm).min(1.0)
    }
}

fn oracle_relu(degrees: &[f64], z: &[f64], alpha: f64) -> f64 {
    let total: f64 = degrees.iter().sum();
    let h: Vec<f64> = z
        .iter()
        .zip(degrees)
        .map(|(v, d)| (v - alpha * (d / total).sqrt()).max(0.0))
        .collect();
    oracle_s(degrees, &h)
}

/// Brute-force minimum: a uniform grid below the threshold plus points
/// approaching it geometrically.
fn brute_force_min(c: &Case) -> f64 {
    let hi = relu_saturation_alpha(&c.z, &c.op);
    let span = 3.0 * c.z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut grid: Vec<f64> = linspace(hi - span, hi, 5001);
    grid.pop();
    grid.extend((1..=14).map(|k| hi - span * 10f64.powi(-k)));
    grid.into_iter()
        .filter(|a| *a < hi)
        .map(|a| oracle_relu(&c.degrees, &c.z, a))
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn closed_form_minimum_matches_brute_force(seed in any::<u64>()) {
        let c = case(seed);
        let closed = relu_min_smoothness_closed_form(&c.z, &c.op, &c.basis).unwrap();
        prop_assert!((closed - brute_force_min(&c)).abs() < 1e-4);
    }

    #[test]
    fn monotone_below_threshold(seed in any::<u64>()) {
        let c = case(seed);
        let hi = relu_saturation_alpha(&c.z, &c.op);
        let grid = linspace(hi - 5.0, hi - 1e-9, 300);
        prop_assert!(verify_monotone_region(&c.z, &c.op, &c.basis, &grid).unwrap());
    }

    #[test]
    fn relu_saturates_to_full_smoothness(seed in any::<u64>(), extra in 1e-12f64..10.0) {
        let c = case(seed);
        let r = c.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let alpha = relu_saturation_alpha(&c.z, &c.op) + extra * r;
        let curve = sweep(&c.z, &c.basis, Activation::Relu, &[alpha]).unwrap();
        prop_assert_eq!(curve.s[0], 1.0);
        prop_assert_eq!(curve.dist[0], 0.0);
    }

    #[test]
    fn leaky_reaches_both_ends_but_not_one(seed in any::<u64>(), a in 0.01f64..0.9) {
        let c = case(seed);
        let range = leaky_range_probe(&c.z, &c.basis, a).unwrap();
        prop_assert!(range.min <= 1e-3);
        prop_assert!(range.max >= 0.999);
        prop_assert!(range.max < 1.0);
    }

    #[test]
    fn shift_never_increases_distance(seed in any::<u64>(), a in 0.01f64..0.9) {
        let c = case(seed);
        for act in [Activation::Relu, Activation::LeakyRelu(a)] {
            let curve = sweep(&c.z, &c.basis, act, &linspace(-20.0, 20.0, 401)).unwrap();
            prop_assert!(curve.max_dist() <= curve.input_dist + 1e-10);
        }
    }

    #[test]
    fn shift_moves_smoothness_both_ways(seed in any::<u64>(), a in 0.01f64..0.9) {
        let c = case(seed);
        let s0 = oracle_s(&c.degrees, &c.z);
        let alpha_star = leaky_range_probe(&c.z, &c.basis, a).unwrap().alpha_star;
        let mut grid = linspace(-40.0, 40.0, 2001);
        grid.push(alpha_star);
        let relu = sweep(&c.z, &c.basis, Activation::Relu, &grid).unwrap();
        let leaky = sweep(&c.z, &c.basis, Activation::LeakyRelu(a), &grid).unwrap();
        prop_assert!(relu.min_s().min(leaky.min_s()) < s0);
        prop_assert!(relu.max_s().max(leaky.max_s()) > s0);
    }

    #[test]
    fn smooth_input_stays_smooth(seed in any::<u64>(), k in -3.0f64..3.0) {
        let g = random_graph(&mut seeded(seed), 30, true);
        let op = PropagationOperator::new(&g);
        let basis = SpectralBasis::new(&g, &op).unwrap();
        let z: Vec<f64> = basis.unit_vector().unwrap().iter().map(|v| k * v).collect();
        for act in [Activation::Relu, Activation::LeakyRelu(0.2)] {
            let curve = sweep(&z, &basis, act, &default_grid()).unwrap();
            prop_assert!(curve.s.iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
        prop_assert!(relu_min_smoothness_closed_form(&z, &op, &basis).is_err());
    }
}

#[test]
fn closed_form_on_star() {
    // Hub 0 with three leaves: d = (4, 2, 2, 2). A spike on the hub has x
    // maximal only there.
    let g = Graph::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
    let op = PropagationOperator::new(&g);
    let basis = SpectralBasis::new(&g, &op).unwrap();
    let z = [3.0, 0.0, 0.0, 0.0];
    let s = relu_min_smoothness_closed_form(&z, &op, &basis).unwrap();
    assert!((s - (4.0f64 / 10.0).sqrt()).abs() < 1e-15);
}
