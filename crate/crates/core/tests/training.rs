use smoothctl::activations::Activation;
use smoothctl::graph::Graph;
use smoothctl::linalg::Matrix;
use smoothctl::models::{GraphContext, LayerKind, Model, ModelConfig};
use smoothctl::train::{
    accuracy, layer_gradient_norms, mean_std, sbm_dataset, t_score, train, Dataset, SbmSpec, Splits, TrainConfig,
};

fn sbm(seed: u64) -> (Dataset, GraphContext) {
    let ds = sbm_dataset(&SbmSpec::default(), seed).unwrap();
    let ctx = GraphContext::new(ds.graph.clone()).unwrap();
    (ds, ctx)
}

fn model(kind: LayerKind, layers: usize, ds: &Dataset, ctx: &GraphContext, seed: u64) -> Model {
    let mut cfg = ModelConfig::new(kind, layers, 16);
    cfg.seed = seed;
    Model::new(cfg, ds.features.rows(), ds.num_classes, ctx.basis.m).unwrap()
}

/// Two-class logistic regression on once-propagated features, trained by
/// plain gradient descent without the tape.
fn logistic_oracle(ds: &Dataset, ctx: &GraphContext) -> f64 {
    let p = ds.features.matmul(&ctx.op.g).unwrap();
    let d = p.rows();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..2000 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for &j in &ds.splits.train {
            let z: f64 = (0..d).map(|i| w[i] * p[(i, j)]).sum::<f64>() + b;
            let y = if ds.labels[j] == 1 { 1.0 } else { 0.0 };
            let r = 1.0 / (1.0 + (-z).exp()) - y;
            for i in 0..d {
                gw[i] += r * p[(i, j)];
            }
            gb += r;
        }
        let k = 0.1 / ds.splits.train.len() as f64;
        for i in 0..d {
            w[i] -= k * gw[i];
        }
        b -= k * gb;
    }
    let correct = ds
        .splits
        .test
        .iter()
        .filter(|&&j| {
            let z: f64 = (0..d).map(|i| w[i] * p[(i, j)]).sum::<f64>() + b;
            (z > 0.0) == (ds.labels[j] == 1)
        })
        .count();
    correct as f64 / ds.splits.test.len() as f64
}

#[test]
fn sbm_is_separable_after_one_propagation() {
    for seed in 0..3 {
        let (ds, ctx) = sbm(seed);
        assert!(logistic_oracle(&ds, &ctx) >= 0.9, "seed {seed}");
    }
}

#[test]
fn shallow_gcn_learns_the_sbm() {
    let (ds, ctx) = sbm(0);
    let mut m = model(LayerKind::Gcn, 2, &ds, &ctx, 0);
    let r = train(&mut m, &ds, &ctx, &TrainConfig::default()).unwrap();
    assert!(r.test_accuracy >= 0.9, "accuracy {}", r.test_accuracy);
    assert!(r.test_accuracy >= logistic_oracle(&ds, &ctx) - 0.1);
    let (logits, _) = m.infer(&ctx, &ds.features).unwrap();
    assert_eq!(accuracy(&logits, &ds.labels, &ds.splits.test), r.test_accuracy);
}

#[test]
fn training_is_deterministic() {
    let (ds, ctx) = sbm(4);
    let cfg = TrainConfig {
        max_epochs: 120,
        seed: 4,
        ..TrainConfig::default()
    };
    let mut a = model(LayerKind::GcniiSct, 3, &ds, &ctx, 4);
    a.config.dropout = 0.3;
    let mut b = a.clone();
    let ra = train(&mut a, &ds, &ctx, &cfg).unwrap();
    let rb = train(&mut b, &ds, &ctx, &cfg).unwrap();
    assert_eq!(ra.to_json().unwrap(), rb.to_json().unwrap());
    assert_eq!(a, b);
}

#[test]
fn best_epoch_has_minimal_validation_loss() {
    for (kind, seed) in [(LayerKind::Gcn, 1), (LayerKind::EgnnSct, 2), (LayerKind::Gcnii, 3)] {
        let (ds, ctx) = sbm(seed);
        let mut m = model(kind, 2, &ds, &ctx, seed);
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 30,
            seed,
            ..TrainConfig::default()
        };
        let r = train(&mut m, &ds, &ctx, &cfg).unwrap();
        let min = r.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.val_loss[r.best_epoch], min, "{kind}");
        assert_eq!(r.val_loss.len(), r.epochs_run);
        assert!(r.epochs_run <= r.best_epoch + 1 + cfg.patience);
        assert!(r.grad_norms.iter().flatten().all(|g| *g >= 0.0));
        assert_eq!(r.smoothness.len(), 3);
        assert!((0.0..=1.0).contains(&r.test_accuracy));
    }
}

#[test]
fn identity_layer_gradient_ratio() {
    let g = Graph::empty(4);
    let ctx = GraphContext::new(g.clone()).unwrap();
    let mut cfg = ModelConfig::new(LayerKind::Gcn, 1, 2);
    cfg.activation = Activation::Identity;
    let mut m = Model::new(cfg, 2, 2, ctx.basis.m).unwrap();
    m.param_mut("layer1.w").unwrap().value = Matrix::identity(2);
    let features = Matrix::from_rows(&[vec![1.0, -1.0, 0.5, 2.0], vec![0.0, 1.0, -1.0, 0.5]]);
    let splits = Splits {
        train: vec![0, 1],
        val: vec![2],
        test: vec![3],
    };
    let ds = Dataset::new(g, features, vec![0, 1, 0, 1], splits).unwrap();
    let norms = layer_gradient_norms(&m, &ds, &ctx).unwrap();
    assert_eq!(norms.len(), 2);
    assert!((norms[0] - 1.0).abs() < 1e-12);
    assert!((norms[1] - 1.0).abs() < 1e-12);
}

#[test]
fn deep_gcn_gradients_vanish_but_gcnii_keeps_them() {
    let (ds, ctx) = sbm(0);
    let gcn = layer_gradient_norms(&model(LayerKind::Gcn, 32, &ds, &ctx, 0), &ds, &ctx).unwrap();
    let gcnii = layer_gradient_norms(&model(LayerKind::Gcnii, 32, &ds, &ctx, 0), &ds, &ctx).unwrap();
    assert_eq!(gcn.len(), 33);
    assert!(gcn[0] < 1e-3, "gcn first-layer ratio {}", gcn[0]);
    assert!(gcnii[0] > 1e-2, "gcnii first-layer ratio {}", gcnii[0]);
}

#[test]
fn t_score_and_summary() {
    assert!((t_score(1.0, 1.0, 0.0, 1.0, 100).unwrap() - 7.0711).abs() < 1e-4);
    assert_eq!(t_score(0.5, 0.1, 0.5, 0.2, 10).unwrap(), 0.0);
    assert!(t_score(1.0, 0.0, 0.0, 0.0, 10).is_err());
    assert!(t_score(1.0, 1.0, 0.0, 1.0, 1).is_err());
    let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
    assert!((m - 2.0).abs() < 1e-15);
    assert!(s > 0.0);
}
