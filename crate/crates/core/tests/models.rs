use proptest::prelude::*;
use smoothctl::activations::{softmax, Activation, SoftmaxAxis};
use smoothctl::autodiff::Tape;
use smoothctl::graph::Graph;
use smoothctl::linalg::Matrix;
use smoothctl::models::{
    egnn_layer, gcn_layer, gcnii_layer, residual_beta, sct_term, Coef, GraphContext, LayerKind, Model, ModelConfig,
    SctVars,
};
use smoothctl::properties::{model_gradient_error, random_graph, random_matrix, random_model_case, FD_TOL};
use smoothctl::rng::seeded;
use smoothctl::smoothness::{dirichlet_energy, distance_to_eigenspace};
use smoothctl::Error;

fn context(seed: u64, connected: bool) -> GraphContext {
    GraphContext::new(random_graph(&mut seeded(seed), 20, connected)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sct_term_lies_in_eigenspace(seed in any::<u64>(), residual in any::<bool>(), l in 1usize..10, d in 1usize..6) {
        let ctx = context(seed, false);
        let mut rng = seeded(seed.wrapping_add(1));
        let n = ctx.node_count();
        let mut t = Tape::new();
        let h = t.param(random_matrix(&mut rng, d, n));
        let h0 = t.param(random_matrix(&mut rng, d, n));
        let q = t.constant(ctx.basis.q.clone());
        let qt = t.constant(ctx.basis.q.transpose());
        let vars = if residual {
            SctVars::Residual {
                w0: t.param(random_matrix(&mut rng, d, d)),
                w1: t.param(random_matrix(&mut rng, d, d)),
                theta: 0.7,
            }
        } else {
            SctVars::Pool { w: t.param(random_matrix(&mut rng, d, ctx.basis.m)) }
        };
        let b = sct_term(&mut t, h, h0, q, qt, vars, l).unwrap();
        prop_assert!(distance_to_eigenspace(t.value(b), &ctx.basis).unwrap() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gcn_sct_layer_contracts(seed in any::<u64>(), ratio in 0.05f64..0.99, d in 1usize..6) {
        let ctx = context(seed, false);
        prop_assume!(ctx.basis.lambda2 > 0.0);
        let mut rng = seeded(seed.wrapping_add(2));
        let n = ctx.node_count();
        let s_l = ratio / ctx.basis.lambda2;
        let w = random_matrix(&mut rng, d, d);
        let w = w.scale(s_l / w.spectral_norm().unwrap());
        let h_in = random_matrix(&mut rng, d, n);
        let mut t = Tape::new();
        let h = t.constant(h_in.clone());
        let g = t.constant(ctx.op.g.clone());
        let wv = t.param(w);
        let q = t.constant(ctx.basis.q.clone());
        let qt = t.constant(ctx.basis.q.transpose());
        let sw = t.param(random_matrix(&mut rng, d, ctx.basis.m));
        let b = sct_term(&mut t, h, h, q, qt, SctVars::Pool { w: sw }, 1).unwrap();
        let out = gcn_layer(&mut t, h, g, wv, Activation::Relu, Some(b)).unwrap();
        let before = distance_to_eigenspace(&h_in, &ctx.basis).unwrap();
        let after = distance_to_eigenspace(t.value(out), &ctx.basis).unwrap();
        prop_assert!(after <= s_l * ctx.basis.lambda2 * before + 1e-10);
    }

    #[test]
    fn gcnii_matches_dense_oracle(seed in any::<u64>(), l in 1usize..8, d in 1usize..5) {
        let ctx = context(seed, false);
        let mut rng = seeded(seed.wrapping_add(3));
        let n = ctx.node_count();
        let (h, h0, w) = (random_matrix(&mut rng, d, n), random_matrix(&mut rng, d, n), random_matrix(&mut rng, d, d));
        let alpha = 0.1 + 0.8 * (seed % 97) as f64 / 97.0;
        let beta = residual_beta(0.5, l).unwrap().clamp(0.0, 1.0);

        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let h0v = t.constant(h0.clone());
        let g = t.constant(ctx.op.g.clone());
        let wv = t.param(w.clone());
        let out = gcnii_layer(&mut t, hv, h0v, g, wv, Coef::Fixed(alpha), Coef::Fixed(beta), Activation::Relu, None).unwrap();

        let mut oracle = Matrix::zeros(d, n);
        for i in 0..d {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..d {
                    let m = if i == k { 1.0 - beta } else { 0.0 } + beta * w[(i, k)];
                    let mut p = alpha * h0[(k, j)];
                    for u in 0..n {
                        p += (1.0 - alpha) * h[(k, u)] * ctx.op.g[(u, j)];
                    }
                    acc += m * p;
                }
                oracle[(i, j)] = acc.max(0.0);
            }
        }
        prop_assert!(t.value(out).sub(&oracle).unwrap().max_abs() < 1e-12 * (1.0 + oracle.max_abs()));
    }
}

#[test]
fn gradients_of_every_layer_kind() {
    let mut rng = seeded(11);
    for kind in LayerKind::ALL {
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 9 {
            attempts += 1;
            assert!(attempts < 2000, "{kind}: could not avoid activation kinks");
            let (model, ctx, x, labels) = random_model_case(&mut rng, kind).unwrap();
            if let Some(err) = model_gradient_error(&model, &ctx, &x, &labels).unwrap() {
                assert!(err < FD_TOL, "{kind}: relative error {err:e}");
                checked += 1;
            }
        }
    }
}

#[test]
fn residual_sct_softmax_is_per_column() {
    // With m = 1 a per-row softmax would be identically 1.
    let hq = Matrix::column_vector(&[0.3, -1.0, 2.0]);
    let s = softmax(&hq, SoftmaxAxis::PerColumn);
    assert!((s.sum() - 1.0).abs() < 1e-15);
    assert!(s.data().iter().all(|v| *v < 1.0));
}

#[test]
fn zero_index_has_no_beta() {
    assert!(matches!(residual_beta(0.5, 0), Err(Error::Index(_))));
    let ctx = GraphContext::new(Graph::path(3)).unwrap();
    let mut t = Tape::new();
    let h = t.constant(Matrix::filled(2, 3, 1.0));
    let q = t.constant(ctx.basis.q.clone());
    let qt = t.constant(ctx.basis.q.transpose());
    let w0 = t.param(Matrix::identity(2));
    let w1 = t.param(Matrix::identity(2));
    let vars = SctVars::Residual { w0, w1, theta: 0.5 };
    assert!(matches!(sct_term(&mut t, h, h, q, qt, vars, 0), Err(Error::Index(_))));
}

#[test]
fn gcnii_limits() {
    let ctx = GraphContext::new(Graph::path(3)).unwrap();
    let h = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.1, -0.7]]);
    let h0 = Matrix::from_rows(&[vec![0.2, 0.4, 0.6], vec![-1.0, 0.0, 1.0]]);
    let w = Matrix::from_rows(&[vec![0.5, -0.25], vec![1.5, 0.75]]);
    let run = |alpha: f64, beta: f64| {
        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let h0v = t.constant(h0.clone());
        let g = t.constant(ctx.op.g.clone());
        let wv = t.param(w.clone());
        let out = gcnii_layer(
            &mut t,
            hv,
            h0v,
            g,
            wv,
            Coef::Fixed(alpha),
            Coef::Fixed(beta),
            Activation::Identity,
            None,
        )
        .unwrap();
        t.value(out).clone()
    };
    let plain = w.matmul(&h).unwrap().matmul(&ctx.op.g).unwrap();
    assert!(run(0.0, 1.0).sub(&plain).unwrap().max_abs() < 1e-14);
    let init_only = Matrix::identity(2)
        .scale(0.6)
        .add(&w.scale(0.4))
        .unwrap()
        .matmul(&h0)
        .unwrap();
    assert!(run(1.0, 0.4).sub(&init_only).unwrap().max_abs() < 1e-14);
}

fn egnn_identity(ctx: &GraphContext, h: &Matrix, h0: &Matrix, c_min: f64, c1: f64) -> Matrix {
    let mut t = Tape::new();
    let hv = t.constant(h.clone());
    let h0v = t.constant(h0.clone());
    let g = t.constant(ctx.op.g.clone());
    let d = h.rows();
    let w = t.param(Matrix::identity(d));
    let c1v = t.param(Matrix::scalar(c1));
    let out = egnn_layer(&mut t, hv, h0v, g, w, c_min, c1v, Activation::Identity, None).unwrap();
    t.value(out).clone()
}

#[test]
fn egnn_energy_lower_bound_on_nonnegative_spectrum() {
    // Complete graphs and the single edge have spectra in [0, 1].
    for g in [Graph::complete(5), Graph::path(2), Graph::complete(8)] {
        let ctx = GraphContext::new(g).unwrap();
        assert!(ctx.basis.eigenvalues.iter().all(|l| *l >= -1e-12));
        let mut rng = seeded(ctx.node_count() as u64);
        for c_min in [0.1, 0.5, 0.9] {
            let h0 = random_matrix(&mut rng, 3, ctx.node_count());
            let out = egnn_identity(&ctx, &h0, &h0, c_min, c_min);
            let lower = c_min * dirichlet_energy(&h0, &ctx.op).unwrap();
            assert!(dirichlet_energy(&out, &ctx.op).unwrap() >= lower - 1e-12);
        }
    }
}

#[test]
fn egnn_without_propagation() {
    let ctx = GraphContext::new(Graph::path(4)).unwrap();
    let mut rng = seeded(4);
    let h = random_matrix(&mut rng, 2, 4);
    let h0 = random_matrix(&mut rng, 2, 4);
    let out = egnn_identity(&ctx, &h, &h0, 1.0, 0.3);
    let expected = h0.scale(0.3).add(&h.scale(0.7)).unwrap();
    assert!(out.sub(&expected).unwrap().max_abs() < 1e-15);
}

#[test]
fn zero_sct_weight_matches_plain_layers() {
    let ctx = GraphContext::new(Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)]).unwrap()).unwrap();
    let mut rng = seeded(9);
    let x = random_matrix(&mut rng, 3, 5);
    for (plain, sct) in [
        (LayerKind::Gcn, LayerKind::GcnSct),
        (LayerKind::Gcnii, LayerKind::GcniiSct),
        (LayerKind::Egnn, LayerKind::EgnnSct),
    ] {
        let mut a_cfg = ModelConfig::new(plain, 3, 4);
        a_cfg.seed = 5;
        let a = Model::new(a_cfg, 3, 2, 1).unwrap();
        let mut b_cfg = ModelConfig::new(sct, 3, 4);
        b_cfg.seed = 5;
        b_cfg.sct_arch = Some(smoothctl::models::SctArch::Pool);
        let mut b = Model::new(b_cfg, 3, 2, 1).unwrap();
        for p in b.params_mut() {
            if p.name.contains(".sct.") {
                p.value = Matrix::zeros(p.value.rows(), p.value.cols());
            }
        }
        for p in a.params() {
            b.param_mut(&p.name).unwrap().value = p.value.clone();
        }
        let (la, ha) = a.infer(&ctx, &x).unwrap();
        let (lb, hb) = b.infer(&ctx, &x).unwrap();
        assert_eq!(la, lb, "{plain}");
        assert_eq!(ha, hb);
    }
}

#[test]
fn deep_contracting_gcn_oversmooths() {
    let ctx = GraphContext::new(smoothctl::generators::connected_erdos_renyi(20, 0.5, &mut seeded(2))).unwrap();
    assert!(ctx.basis.lambda2 < 0.8);
    let mut rng = seeded(3);
    let d = 6;
    let mut h = random_matrix(&mut rng, d, 20).map(f64::abs);
    let mut t = Tape::new();
    let g = t.constant(ctx.op.g.clone());
    let mut hv = t.constant(h.clone());
    for _ in 0..32 {
        let w = random_matrix(&mut rng, d, d).map(f64::abs);
        let w = w.scale(1.0 / w.spectral_norm().unwrap());
        let wv = t.param(w);
        hv = gcn_layer(&mut t, hv, g, wv, Activation::Relu, None).unwrap();
    }
    h.clone_from(t.value(hv));
    let ratio = distance_to_eigenspace(&h, &ctx.basis).unwrap() / h.frobenius_norm();
    assert!(h.frobenius_norm() > 0.0);
    assert!(ratio < 1e-3, "ratio {ratio:e}");
}

#[test]
fn layer_list_and_identity_model() {
    let ctx = GraphContext::new(Graph::path(3)).unwrap();
    let mut cfg = ModelConfig::new(LayerKind::Gcn, 4, 3);
    cfg.seed = 1;
    let model = Model::new(cfg, 2, 2, 1).unwrap();
    let x = Matrix::from_rows(&[vec![1.0, 0.0, -1.0], vec![0.5, 0.5, 0.5]]);
    let (logits, layers) = model.infer(&ctx, &x).unwrap();
    assert_eq!(layers.len(), 5);
    assert_eq!(logits.shape(), (2, 3));
    assert!(matches!(
        model.infer(&ctx, &Matrix::zeros(2, 4)),
        Err(Error::Shape { .. })
    ));
}
