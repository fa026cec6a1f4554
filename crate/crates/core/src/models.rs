//! Graph convolutional layers (GCN, GCNII, EGNN), the smoothness control
//! term added to their pre-activations, and a stacked model on the tape.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::activations::{Activation, SoftmaxAxis};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, PropagationOperator, SpectralBasis};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};

/// A graph with its propagation operator and eigenspace basis.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub graph: Graph,
    pub op: PropagationOperator,
    pub basis: SpectralBasis,
}

impl GraphContext {
    pub fn new(graph: Graph) -> Result<Self> {
        let op = PropagationOperator::new(&graph);
        let basis = SpectralBasis::new(&graph, &op)?;
        Ok(GraphContext { graph, op, basis })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Gcn,
    GcnSct,
    Gcnii,
    GcniiSct,
    Egnn,
    EgnnSct,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Gcn,
        LayerKind::GcnSct,
        LayerKind::Gcnii,
        LayerKind::GcniiSct,
        LayerKind::Egnn,
        LayerKind::EgnnSct,
    ];

    pub fn has_sct(self) -> bool {
        matches!(self, LayerKind::GcnSct | LayerKind::GcniiSct | LayerKind::EgnnSct)
    }

    /// Pool coefficients for GCN, residual coefficients for the variants that
    /// already see `H⁰`.
    pub fn default_sct_arch(self) -> SctArch {
        match self {
            LayerKind::Gcn | LayerKind::GcnSct => SctArch::Pool,
            _ => SctArch::Residual,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Gcn => "gcn",
            LayerKind::GcnSct => "gcn-sct",
            LayerKind::Gcnii => "gcnii",
            LayerKind::GcniiSct => "gcnii-sct",
            LayerKind::Egnn => "egnn",
            LayerKind::EgnnSct => "egnn-sct",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown layer kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SctArch {
    /// `A = W ⊙ (HQ)`.
    Pool,
    /// `A = φ(HQ) ⊙ (β W₀H⁰Q + (1−β) W₁HQ)`.
    Residual,
}

fn default_layers() -> usize {
    2
}
fn default_hidden() -> usize {
    16
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_theta() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    0.1
}
fn default_c_min() -> f64 {
    0.2
}
fn default_c_max() -> f64 {
    1.0
}
fn default_lambda_orth() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: LayerKind,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub sct_arch: Option<SctArch>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c_min")]
    pub c_min: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
    #[serde(default = "default_lambda_orth")]
    pub lambda_orth: f64,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
    /// Train GCNII's `α_l, β_l` through a sigmoid instead of using the schedule.
    #[serde(default)]
    pub learnable_gcnii_coefficients: bool,
}

impl ModelConfig {
    pub fn new(kind: LayerKind, layers: usize, hidden_dim: usize) -> Self {
        ModelConfig {
            kind,
            layers,
            hidden_dim,
            activation: default_activation(),
            sct_arch: None,
            theta: default_theta(),
            alpha: default_alpha(),
            c_min: default_c_min(),
            c_max: default_c_max(),
            lambda_orth: default_lambda_orth(),
            dropout: 0.0,
            seed: 0,
            learnable_gcnii_coefficients: false,
        }
    }

    pub fn sct_arch(&self) -> SctArch {
        self.sct_arch.unwrap_or(self.kind.default_sct_arch())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers == 0 {
            return bad("a model needs at least one layer".into());
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive".into());
        }
        self.activation.validate()?;
        if !(self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.c_min) {
            return bad(format!("c_min must lie in [0, 1], got {}", self.c_min));
        }
        if !(self.c_max > 0.0) {
            return bad(format!("c_max must be positive, got {}", self.c_max));
        }
        if !(self.lambda_orth >= 0.0) {
            return bad(format!("lambda_orth must be nonnegative, got {}", self.lambda_orth));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

/// `β_l = log(θ/l + 1)`; undefined at `l = 0`.
pub fn residual_beta(theta: f64, l: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::Index("layer index starts at 1".into()));
    }
    Ok((theta / l as f64 + 1.0).ln())
}

/// Weights of the smoothness control term on the tape.
#[derive(Debug, Clone, Copy)]
pub enum SctVars {
    Pool { w: Var },
    Residual { w0: Var, w1: Var, theta: f64 },
}

/// `B = A Qᵀ`, with `A` built from the layer input `h` (and `h0` for the
/// residual form). `q` is `n×m`, `qt` its transpose.
pub fn sct_term(tape: &mut Tape, h: Var, h0: Var, q: Var, qt: Var, sct: SctVars, l: usize) -> Result<Var> {
    let hq = tape.matmul(h, q)?;
    let a = match sct {
        SctVars::Pool { w } => tape.hadamard(w, hq)?,
        SctVars::Residual { w0, w1, theta } => {
            let beta = residual_beta(theta, l)?;
            let phi = tape.softmax(hq, SoftmaxAxis::PerColumn);
            let h0q = tape.matmul(h0, q)?;
            let init = tape.matmul(w0, h0q)?;
            let init = tape.scale(init, beta);
            let cur = tape.matmul(w1, hq)?;
            let cur = tape.scale(cur, 1.0 - beta);
            let mix = tape.add(init, cur)?;
            tape.hadamard(phi, mix)?
        }
    };
    tape.matmul(a, qt)
}

fn finish(tape: &mut Tape, pre: Var, sct: Option<Var>, act: Activation) -> Result<Var> {
    let pre = match sct {
        Some(b) => tape.add(pre, b)?,
        None => pre,
    };
    Ok(tape.activation(pre, act))
}

/// `σ(W H G [+ B])`.
pub fn gcn_layer(tape: &mut Tape, h: Var, g: Var, w: Var, act: Activation, sct: Option<Var>) -> Result<Var> {
    let wh = tape.matmul(w, h)?;
    let pre = tape.matmul(wh, g)?;
    finish(tape, pre, sct, act)
}

/// A GCNII mixing coefficient: scheduled constant or a 1×1 node in `(0, 1)`.
#[derive(Debug, Clone, Copy)]
pub enum Coef {
    Fixed(f64),
    Learned(Var),
}

fn coef_mul(tape: &mut Tape, c: Coef, x: Var, complement: bool) -> Result<Var> {
    match c {
        Coef::Fixed(v) => Ok(tape.scale(x, if complement { 1.0 - v } else { v })),
        Coef::Learned(s) => {
            let s = if complement {
                let one = tape.constant(Matrix::scalar(1.0));
                tape.sub(one, s)?
            } else {
                s
            };
            tape.scalar_mul(s, x)
        }
    }
}

/// `σ(((1−β)I + βW)((1−α) H G + α H⁰) [+ B])`. The identity-mapped weight acts
/// on the feature side, matching the `d×n` layout.
#[allow(clippy::too_many_arguments)]
pub fn gcnii_layer(
    tape: &mut Tape,
    h: Var,
    h0: Var,
    g: Var,
    w: Var,
    alpha: Coef,
    beta: Coef,
    act: Activation,
    sct: Option<Var>,
) -> Result<Var> {
    let hg = tape.matmul(h, g)?;
    let prop = coef_mul(tape, alpha, hg, true)?;
    let init = coef_mul(tape, alpha, h0, false)?;
    let p = tape.add(prop, init)?;
    let d = tape.shape(w).0;
    let eye = tape.constant(Matrix::identity(d));
    let keep = coef_mul(tape, beta, eye, true)?;
    let mixed = coef_mul(tape, beta, w, false)?;
    let m = tape.add(keep, mixed)?;
    let pre = tape.matmul(m, p)?;
    finish(tape, pre, sct, act)
}

/// `σ(W(c₁H⁰ + c₂H + (1−c_min) H G) [+ B])` with `c₂ = c_min − c₁`.
#[allow(clippy::too_many_arguments)]
pub fn egnn_layer(
    tape: &mut Tape,
    h: Var,
    h0: Var,
    g: Var,
    w: Var,
    c_min: f64,
    c1: Var,
    act: Activation,
    sct: Option<Var>,
) -> Result<Var> {
    let cmin = tape.constant(Matrix::scalar(c_min));
    let c2 = tape.sub(cmin, c1)?;
    let a = tape.scalar_mul(c1, h0)?;
    let b = tape.scalar_mul(c2, h)?;
    let hg = tape.matmul(h, g)?;
    let c = tape.scale(hg, 1.0 - c_min);
    let ab = tape.add(a, b)?;
    let inner = tape.add(ab, c)?;
    let pre = tape.matmul(w, inner)?;
    finish(tape, pre, sct, act)
}

/// `λ ‖WᵀW − s²I‖²_F`.
pub fn orthogonality_penalty(tape: &mut Tape, w: Var, s: f64, lambda: f64) -> Result<Var> {
    let wt = tape.transpose(w);
    let gram = tape.matmul(wt, w)?;
    let d = tape.shape(gram).0;
    let target = tape.constant(Matrix::identity(d).scale(s * s));
    let diff = tape.sub(gram, target)?;
    let sq = tape.sum_squares(diff);
    Ok(tape.scale(sq, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    /// Input encoder and output decoder.
    Fc,
    /// Everything inside the convolution stack.
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum SctIdx {
    Pool { w: usize },
    Residual { w0: usize, w1: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerIdx {
    w: usize,
    c1: Option<usize>,
    gcnii: Option<(usize, usize)>,
    sct: Option<SctIdx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Component count `m` the SCT weights were sized for.
    pub components: usize,
    params: Vec<Param>,
    enc_w: usize,
    enc_b: usize,
    dec_w: usize,
    dec_b: usize,
    layers: Vec<LayerIdx>,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// `H⁰, H¹, …, H^L`.
    pub layers: Vec<Var>,
    /// One handle per model parameter, in `Model::params` order.
    pub params: Vec<Var>,
    /// Orthogonality penalty for EGNN weights.
    pub penalty: Option<Var>,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Model {
    pub fn new(config: ModelConfig, input_dim: usize, num_classes: usize, components: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || num_classes == 0 || components == 0 {
            return Err(Error::Config(
                "input_dim, num_classes and components must be positive".into(),
            ));
        }
        let mut rng = rng::seeded(config.seed);
        let d = config.hidden_dim;
        let mut params = Vec::new();
        let mut push = |name: String, group: ParamGroup, value: Matrix| {
            params.push(Param { name, group, value });
            params.len() - 1
        };

        let enc_w = push("encoder.w".into(), ParamGroup::Fc, glorot(d, input_dim, &mut rng));
        let enc_b = push("encoder.b".into(), ParamGroup::Fc, Matrix::zeros(d, 1));
        let arch = config.sct_arch();
        let mut layers = Vec::with_capacity(config.layers);
        for l in 1..=config.layers {
            let egnn = matches!(config.kind, LayerKind::Egnn | LayerKind::EgnnSct);
            let w0 = if egnn {
                let s = if l == 1 { config.c_max.sqrt() } else { 1.0 };
                Matrix::identity(d).scale(s)
            } else {
                glorot(d, d, &mut rng)
            };
            let w = push(format!("layer{l}.w"), ParamGroup::Conv, w0);
            let c1 = egnn.then(|| {
                push(
                    format!("layer{l}.c1"),
                    ParamGroup::Conv,
                    Matrix::scalar(0.5 * config.c_min),
                )
            });
            let gcnii = (matches!(config.kind, LayerKind::Gcnii | LayerKind::GcniiSct)
                && config.learnable_gcnii_coefficients)
                .then(|| {
                    let beta = residual_beta(config.theta, l).unwrap_or(0.5).clamp(1e-3, 1.0 - 1e-3);
                    let a = push(
                        format!("layer{l}.alpha"),
                        ParamGroup::Conv,
                        Matrix::scalar(logit(config.alpha)),
                    );
                    let b = push(format!("layer{l}.beta"), ParamGroup::Conv, Matrix::scalar(logit(beta)));
                    (a, b)
                });
            let sct = config.kind.has_sct().then(|| match arch {
                SctArch::Pool => SctIdx::Pool {
                    w: push(
                        format!("layer{l}.sct.w"),
                        ParamGroup::Conv,
                        glorot(d, components, &mut rng),
                    ),
                },
                SctArch::Residual => SctIdx::Residual {
                    w0: push(format!("layer{l}.sct.w0"), ParamGroup::Conv, glorot(d, d, &mut rng)),
                    w1: push(format!("layer{l}.sct.w1"), ParamGroup::Conv, glorot(d, d, &mut rng)),
                },
            });
            layers.push(LayerIdx { w, c1, gcnii, sct });
        }
        let dec_w = push("decoder.w".into(), ParamGroup::Fc, glorot(num_classes, d, &mut rng));
        let dec_b = push("decoder.b".into(), ParamGroup::Fc, Matrix::zeros(num_classes, 1));

        Ok(Model {
            config,
            input_dim,
            num_classes,
            components,
            params,
            enc_w,
            enc_b,
            dec_w,
            dec_b,
            layers,
        })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Builds the forward pass on `tape`. Dropout is applied only when `rng`
    /// is given.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ctx: &GraphContext,
        x: &Matrix,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<Forward> {
        let n = ctx.node_count();
        if x.shape() != (self.input_dim, n) {
            return Err(Error::shape("forward", x.shape(), (self.input_dim, n)));
        }
        if self.config.kind.has_sct() && ctx.basis.m != self.components {
            return Err(Error::Input(format!(
                "model was built for {} components, graph has {}",
                self.components, ctx.basis.m
            )));
        }
        let cfg = &self.config;
        let pv: Vec<Var> = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        let g = tape.constant(ctx.op.g.clone());
        let (q, qt) = if cfg.kind.has_sct() {
            (
                Some(tape.constant(ctx.basis.q.clone())),
                Some(tape.constant(ctx.basis.q.transpose())),
            )
        } else {
            (None, None)
        };
        let ones = tape.constant(Matrix::filled(1, n, 1.0));

        let xin = tape.constant(x.clone());
        let enc = tape.matmul(pv[self.enc_w], xin)?;
        let bias = tape.matmul(pv[self.enc_b], ones)?;
        let h0 = tape.add(enc, bias)?;

        let mut layers = vec![h0];
        let mut penalty: Option<Var> = None;
        let mut h = h0;
        for (i, idx) in self.layers.iter().enumerate() {
            let l = i + 1;
            let input = match dropout_rng.as_deref_mut() {
                Some(r) if cfg.dropout > 0.0 => {
                    let keep = 1.0 - cfg.dropout;
                    let (rows, cols) = tape.shape(h);
                    let mask = Matrix::from_fn(
                        rows,
                        cols,
                        |_, _| {
                            if r.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        },
                    );
                    let m = tape.constant(mask);
                    tape.hadamard(h, m)?
                }
                _ => h,
            };
            let sct = match (&idx.sct, q, qt) {
                (Some(SctIdx::Pool { w }), Some(q), Some(qt)) => {
                    Some(sct_term(tape, input, h0, q, qt, SctVars::Pool { w: pv[*w] }, l)?)
                }
                (Some(SctIdx::Residual { w0, w1 }), Some(q), Some(qt)) => {
                    let vars = SctVars::Residual {
                        w0: pv[*w0],
                        w1: pv[*w1],
                        theta: cfg.theta,
                    };
                    Some(sct_term(tape, input, h0, q, qt, vars, l)?)
                }
                _ => None,
            };
            let w = pv[idx.w];
            h = match cfg.kind {
                LayerKind::Gcn | LayerKind::GcnSct => gcn_layer(tape, input, g, w, cfg.activation, sct)?,
                LayerKind::Gcnii | LayerKind::GcniiSct => {
                    let (alpha, beta) = match idx.gcnii {
                        Some((a, b)) => (Coef::Learned(tape.sigmoid(pv[a])), Coef::Learned(tape.sigmoid(pv[b]))),
                        None => (
                            Coef::Fixed(cfg.alpha),
                            Coef::Fixed(residual_beta(cfg.theta, l)?.clamp(0.0, 1.0)),
                        ),
                    };
                    gcnii_layer(tape, input, h0, g, w, alpha, beta, cfg.activation, sct)?
                }
                LayerKind::Egnn | LayerKind::EgnnSct => {
                    let c1 = pv[idx.c1.expect("EGNN layers carry c1")];
                    let out = egnn_layer(tape, input, h0, g, w, cfg.c_min, c1, cfg.activation, sct)?;
                    if cfg.lambda_orth > 0.0 {
                        let s = if l == 1 { cfg.c_max.sqrt() } else { 1.0 };
                        let p = orthogonality_penalty(tape, w, s, cfg.lambda_orth)?;
                        penalty = Some(match penalty {
                            Some(acc) => tape.add(acc, p)?,
                            None => p,
                        });
                    }
                    out
                }
            };
            layers.push(h);
        }

        let dec = tape.matmul(pv[self.dec_w], h)?;
        let bias = tape.matmul(pv[self.dec_b], ones)?;
        let logits = tape.add(dec, bias)?;
        Ok(Forward {
            logits,
            layers,
            params: pv,
            penalty,
        })
    }

    /// Forward pass without dropout, returning plain values.
    pub fn infer(&self, ctx: &GraphContext, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, ctx, x, None)?;
        let layers = fwd.layers.iter().map(|&v| tape.value(v).clone()).collect();
        Ok((tape.value(fwd.logits).clone(), layers))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Model = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        model.config.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge() -> GraphContext {
        GraphContext::new(Graph::path(2)).unwrap()
    }

    #[test]
    fn gcn_layer_by_hand() {
        let ctx = edge();
        for (input, expected) in [([1.0, 1.0], [1.0, 1.0]), ([1.0, -1.0], [0.0, 0.0])] {
            let mut t = Tape::new();
            let h = t.constant(Matrix::row_vector(&input));
            let g = t.constant(ctx.op.g.clone());
            let w = t.param(Matrix::identity(1));
            let out = gcn_layer(&mut t, h, g, w, Activation::Relu, None).unwrap();
            assert_eq!(t.value(out), &Matrix::row_vector(&expected));
        }
    }

    #[test]
    fn residual_beta_schedule() {
        assert!((residual_beta(1.0, 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(residual_beta(1.0, 0), Err(Error::Index(_))));
    }

    #[test]
    fn zero_pool_weight_gives_zero_term() {
        let ctx = GraphContext::new(Graph::path(4)).unwrap();
        let mut t = Tape::new();
        let h = t.constant(Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0));
        let q = t.constant(ctx.basis.q.clone());
        let qt = t.constant(ctx.basis.q.transpose());
        let w = t.param(Matrix::zeros(3, 1));
        let b = sct_term(&mut t, h, h, q, qt, SctVars::Pool { w }, 1).unwrap();
        assert_eq!(t.value(b), &Matrix::zeros(3, 4));
        assert!(sct_term(&mut t, h, h, q, qt, SctVars::Pool { w }, 0).is_ok());
        let w0 = t.param(Matrix::identity(3));
        let r = sct_term(&mut t, h, h, q, qt, SctVars::Residual { w0, w1: w0, theta: 1.0 }, 0);
        assert!(matches!(r, Err(Error::Index(_))));
    }

    #[test]
    fn pool_rows_are_multiples_of_e() {
        let ctx = GraphContext::new(Graph::path(3)).unwrap();
        let e = ctx.basis.unit_vector().unwrap();
        let mut t = Tape::new();
        let h = t.constant(Matrix::from_fn(2, 3, |i, j| (i as f64 + 1.0) * e[j]));
        let q = t.constant(ctx.basis.q.clone());
        let qt = t.constant(ctx.basis.q.transpose());
        let w = t.param(Matrix::column_vector(&[0.5, -2.0]));
        let b = sct_term(&mut t, h, h, q, qt, SctVars::Pool { w }, 1).unwrap();
        let b = t.value(b);
        for i in 0..2 {
            let k = b[(i, 0)] / e[0];
            for j in 0..3 {
                assert!((b[(i, j)] - k * e[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn config_json_keys_and_defaults() {
        let cfg: ModelConfig = serde_json::from_str(
            r#"{"kind": "gcnii-sct", "layers": 4, "hidden_dim": 8, "activation": "leaky_relu:0.2",
                "sct_arch": "pool", "theta": 1.0, "alpha": 0.2, "c_min": 0.1, "c_max": 1.5,
                "lambda_orth": 0.0, "dropout": 0.5, "seed": 9}"#,
        )
        .unwrap();
        assert_eq!(cfg.kind, LayerKind::GcniiSct);
        assert_eq!(cfg.sct_arch(), SctArch::Pool);
        assert_eq!(cfg.activation, Activation::LeakyRelu(0.2));
        let cfg: ModelConfig = serde_json::from_str(r#"{"kind": "gcn"}"#).unwrap();
        assert_eq!((cfg.layers, cfg.hidden_dim), (2, 16));
        assert!(serde_json::from_str::<ModelConfig>(r#"{"kind": "gat"}"#).is_err());
        assert!(ModelConfig::new(LayerKind::Gcn, 0, 4).validate().is_err());
    }

    #[test]
    fn single_identity_layer_passes_features_through() {
        let ctx = GraphContext::new(Graph::empty(3)).unwrap();
        let mut cfg = ModelConfig::new(LayerKind::Gcn, 1, 2);
        cfg.activation = Activation::Identity;
        let mut model = Model::new(cfg, 2, 2, 3).unwrap();
        for p in model.params_mut() {
            p.value = if p.name.ends_with(".b") {
                Matrix::zeros(p.value.rows(), 1)
            } else {
                Matrix::identity(2)
            };
        }
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 0.0, -1.0]]);
        let (logits, layers) = model.infer(&ctx, &x).unwrap();
        assert_eq!(logits, x);
        assert_eq!(layers.len(), 2);
    }

    #[test]
    fn model_json_round_trip() {
        let model = Model::new(ModelConfig::new(LayerKind::EgnnSct, 3, 4), 5, 2, 1).unwrap();
        let back = Model::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn egnn_initial_weights() {
        let mut cfg = ModelConfig::new(LayerKind::Egnn, 2, 3);
        cfg.c_max = 2.0;
        let model = Model::new(cfg, 3, 2, 1).unwrap();
        assert_eq!(
            model.param("layer1.w").unwrap().value,
            Matrix::identity(3).scale(2f64.sqrt())
        );
        assert_eq!(model.param("layer2.w").unwrap().value, Matrix::identity(3));
    }
}
