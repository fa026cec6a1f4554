//! Node-classification training: datasets, negative log-likelihood, Adam with
//! early stopping, gradient-norm diagnostics and the t-score.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activations::SoftmaxAxis;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::generators::stochastic_block_model;
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::models::{GraphContext, Model, ParamGroup};
use crate::optim::AdamState;
use crate::rng::{self, Rng};
use crate::smoothness::{smoothness_report, SmoothnessReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    /// `d×n`, one column per node.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub splits: Splits,
}

impl Dataset {
    pub fn new(graph: Graph, features: Matrix, labels: Vec<usize>, splits: Splits) -> Result<Self> {
        let n = graph.node_count();
        if features.cols() != n {
            return Err(Error::Input(format!(
                "features describe {} nodes, graph has {n}",
                features.cols()
            )));
        }
        if labels.len() != n {
            return Err(Error::Input(format!("{} labels for {n} nodes", labels.len())));
        }
        let mut seen = BTreeSet::new();
        for (name, idx) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
            if idx.is_empty() {
                return Err(Error::Input(format!("{name} split is empty")));
            }
            for &i in idx {
                if i >= n {
                    return Err(Error::Input(format!("{name} split references node {i} of {n}")));
                }
                if !seen.insert(i) {
                    return Err(Error::Input(format!("node {i} appears in more than one split")));
                }
            }
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Dataset {
            graph,
            features,
            labels,
            num_classes,
            splits,
        })
    }

    /// Reads the graph edge list, a features CSV (one row per node), a labels
    /// file (one integer per line) and a splits JSON.
    pub fn load(graph: &Path, features: &Path, labels: &Path, splits: &Path) -> Result<Self> {
        let g = Graph::read(graph)?;
        let x = parse_features_csv(&std::fs::read_to_string(features)?)?;
        let y = parse_labels(&std::fs::read_to_string(labels)?)?;
        let s: Splits = serde_json::from_str(&std::fs::read_to_string(splits)?)
            .map_err(|e| Error::Parse(format!("splits: {e}")))?;
        Dataset::new(g, x, y, s)
    }
}

/// One row per node, comma-separated; returned transposed as `d×n`.
pub fn parse_features_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("features line {}: `{f}`: {e}", no + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "features line {} has {} values, expected {}",
                    no + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("features line {} has a non-finite value", no + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("features file is empty".into()));
    }
    Ok(Matrix::from_rows(&rows).transpose())
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("labels line {}: {e}", no + 1)))
        })
        .collect()
}

pub fn features_to_csv(features: &Matrix) -> String {
    let mut out = String::new();
    for j in 0..features.cols() {
        let row: Vec<String> = features.column(j).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Settings of the synthetic two-community benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmSpec {
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Class `c` features are Gaussian with mean `±mean_shift` in every coordinate.
    pub mean_shift: f64,
    pub noise_std: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            block_size: 30,
            p_in: 0.2,
            p_out: 0.02,
            feature_dim: 8,
            mean_shift: 1.0,
            noise_std: 1.0,
            train_per_class: 10,
            val: 20,
            test: 20,
        }
    }
}

pub fn sbm_dataset(spec: &SbmSpec, seed: u64) -> Result<Dataset> {
    let mut graph_rng = rng::stream(seed, 0);
    let (graph, labels) = stochastic_block_model(&[spec.block_size; 2], spec.p_in, spec.p_out, &mut graph_rng)?;
    let n = graph.node_count();

    let mut feat_rng = rng::stream(seed, 1);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut features = Matrix::zeros(spec.feature_dim, n);
    for j in 0..n {
        let mean = if labels[j] == 0 {
            spec.mean_shift
        } else {
            -spec.mean_shift
        };
        for i in 0..spec.feature_dim {
            features[(i, j)] = mean + noise.sample(&mut feat_rng);
        }
    }

    let mut split_rng = rng::stream(seed, 2);
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for c in 0..2 {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut split_rng);
        let k = spec.train_per_class.min(members.len());
        train.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    rest.shuffle(&mut split_rng);
    if rest.len() < spec.val + spec.test {
        return Err(Error::Config("SBM too small for the requested splits".into()));
    }
    let val = rest[..spec.val].to_vec();
    let test = rest[spec.val..spec.val + spec.test].to_vec();
    train.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Dataset::new(graph, features, labels, Splits { train, val, test })
}

/// Mean negative log-likelihood of `labels` over the nodes in `mask`, with
/// `logits` laid out `classes×n`.
pub fn nll_loss(tape: &mut Tape, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
    if mask.is_empty() {
        return Err(Error::Input("loss mask is empty".into()));
    }
    let (classes, n) = tape.shape(logits);
    let mut picks = Vec::with_capacity(mask.len());
    for &i in mask {
        if i >= n || i >= labels.len() {
            return Err(Error::Index(format!("node {i} outside 0..{n}")));
        }
        if labels[i] >= classes {
            return Err(Error::Input(format!("label {} with {classes} classes", labels[i])));
        }
        picks.push((labels[i], i));
    }
    let logp = tape.log_softmax(logits, SoftmaxAxis::PerColumn);
    let mean = tape.pick_mean(logp, picks)?;
    Ok(tape.scale(mean, -1.0))
}

pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let correct = mask
        .iter()
        .filter(|&&j| {
            let col = logits.column(j);
            let best = (0..col.len()).fold(0, |b, i| if col[i] > col[b] { i } else { b });
            best == labels[j]
        })
        .count();
    correct as f64 / mask.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub weight_decay_fc: f64,
    pub weight_decay_conv: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 1500,
            patience: 100,
            lr: 0.01,
            weight_decay_fc: 5e-4,
            weight_decay_conv: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must not exceed max_epochs {} (> 0)",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr > 0.0) || self.weight_decay_fc < 0.0 || self.weight_decay_conv < 0.0 {
            return Err(Error::Config(
                "learning rate must be positive and weight decay nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Per epoch, `‖∂loss/∂H^l‖_F / ‖∂loss/∂H^L‖_F` for `l = 0..=L`.
    pub grad_norms: Vec<Vec<f64>>,
    /// Smoothness of `H⁰ … H^L` at the returned checkpoint.
    pub smoothness: Vec<SmoothnessReport>,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn relative_layer_norms(tape: &Tape, layers: &[Var]) -> Vec<f64> {
    let norms: Vec<f64> = layers.iter().map(|&v| tape.grad(v).frobenius_norm()).collect();
    let last = *norms.last().unwrap_or(&0.0);
    norms.iter().map(|&x| if last > 0.0 { x / last } else { 0.0 }).collect()
}

/// Gradient norms of the training loss with respect to every layer's
/// features, relative to the output layer, for the current parameters.
pub fn layer_gradient_norms(model: &Model, ds: &Dataset, ctx: &GraphContext) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, ctx, &ds.features, None)?;
    let loss = nll_loss(&mut tape, fwd.logits, &ds.labels, &ds.splits.train)?;
    tape.backward(loss)?;
    Ok(relative_layer_norms(&tape, &fwd.layers))
}

/// Trains `model` in place. On return the model holds the parameters of the
/// epoch with the lowest validation loss.
pub fn train(model: &mut Model, ds: &Dataset, ctx: &GraphContext, cfg: &TrainConfig) -> Result<RunResult> {
    cfg.validate()?;
    if ds.num_classes > model.num_classes {
        return Err(Error::Input(format!(
            "dataset has {} classes, model predicts {}",
            ds.num_classes, model.num_classes
        )));
    }
    let shapes: Vec<_> = model.params().iter().map(|p| p.value.shape()).collect();
    let decay: Vec<f64> = model
        .params()
        .iter()
        .map(|p| match p.group {
            ParamGroup::Fc => cfg.weight_decay_fc,
            ParamGroup::Conv => cfg.weight_decay_conv,
        })
        .collect();
    let mut adam = AdamState::new(cfg.lr, &shapes);
    let mut dropout_rng: Rng = rng::stream(cfg.seed, 17);
    let use_dropout = model.config.dropout > 0.0;

    let mut best = (usize::MAX, f64::INFINITY);
    let mut best_params: Vec<Matrix> = model.params().iter().map(|p| p.value.clone()).collect();
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut grad_norms = Vec::new();
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, ctx, &ds.features, use_dropout.then_some(&mut dropout_rng))?;
        let nll = nll_loss(&mut tape, fwd.logits, &ds.labels, &ds.splits.train)?;
        let loss = match fwd.penalty {
            Some(p) => tape.add(nll, p)?,
            None => nll,
        };
        let lv = tape.value(loss).data()[0];
        if !lv.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("training loss is {lv}"),
            });
        }

        let vl = if use_dropout {
            let mut vt = Tape::new();
            let vf = model.forward(&mut vt, ctx, &ds.features, None)?;
            let l = nll_loss(&mut vt, vf.logits, &ds.labels, &ds.splits.val)?;
            vt.value(l).data()[0]
        } else {
            let l = nll_loss(&mut tape, fwd.logits, &ds.labels, &ds.splits.val)?;
            tape.value(l).data()[0]
        };
        if !vl.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("validation loss is {vl}"),
            });
        }

        tape.backward(loss)?;
        grad_norms.push(relative_layer_norms(&tape, &fwd.layers));
        train_loss.push(lv);
        val_loss.push(vl);

        if vl < best.1 {
            best = (epoch, vl);
            for (dst, p) in best_params.iter_mut().zip(model.params()) {
                dst.clone_from(&p.value);
            }
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }

        let grads: Vec<Matrix> = fwd.params.iter().map(|&v| tape.grad(v)).collect();
        let mut values: Vec<Matrix> = model.params().iter().map(|p| p.value.clone()).collect();
        adam.step(&mut values, &grads, &decay)?;
        for (p, v) in model.params_mut().iter_mut().zip(values) {
            p.value = v;
        }
    }

    for (p, v) in model.params_mut().iter_mut().zip(best_params) {
        p.value = v;
    }
    let (logits, layers) = model.infer(ctx, &ds.features)?;
    let smoothness = layers
        .iter()
        .map(|h| smoothness_report(h, &ctx.op, &ctx.basis))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        best_epoch: best.0,
        epochs_run: train_loss.len(),
        best_val_loss: best.1,
        val_accuracy: accuracy(&logits, &ds.labels, &ds.splits.val),
        test_accuracy: accuracy(&logits, &ds.labels, &ds.splits.test),
        train_loss,
        val_loss,
        grad_norms,
        smoothness,
    })
}

/// `(μ₁ − μ₂) / sqrt(σ₁²/n + σ₂²/n)`.
pub fn t_score(mean1: f64, std1: f64, mean2: f64, std2: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Input(format!("t-score needs n ≥ 2, got {n}")));
    }
    if std1 < 0.0 || std2 < 0.0 {
        return Err(Error::Input("standard deviations must be nonnegative".into()));
    }
    if std1 == 0.0 && std2 == 0.0 {
        return Err(Error::Undefined("t-score with zero spread in both groups".into()));
    }
    let n = n as f64;
    Ok((mean1 - mean2) / (std1 * std1 / n + std2 * std2 / n).sqrt())
}

/// Sample mean and standard deviation (denominator `n − 1`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
