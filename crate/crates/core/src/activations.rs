//! Elementwise activations and the sphere relations that ReLU and leaky ReLU
//! outputs satisfy relative to the eigenspace decomposition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectralBasis;
use crate::linalg::Matrix;
use crate::smoothness::decompose;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_SRELU_THRESHOLD: f64 = -1.0;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
pub const SELU_SCALE: f64 = 1.050_700_987_355_480_5;

const RADIUS_CLAMP: f64 = -1e-12;
const RADIUS_FAIL: f64 = -1e-9;

/// Which axis a softmax normalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SoftmaxAxis {
    /// Each column sums to 1.
    PerColumn,
    /// Each row sums to 1.
    PerRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    /// `max(x, t)`.
    SRelu(f64),
    Elu(f64),
    Selu {
        alpha: f64,
        scale: f64,
    },
    Identity,
}

impl Activation {
    pub fn leaky(a: f64) -> Result<Self> {
        let act = Activation::LeakyRelu(a);
        act.validate()?;
        Ok(act)
    }

    pub fn selu() -> Self {
        Activation::Selu {
            alpha: SELU_ALPHA,
            scale: SELU_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu(a) if !(a > 0.0 && a < 1.0) => {
                Err(Error::Config(format!("leaky ReLU slope must lie in (0, 1), got {a}")))
            }
            Activation::SRelu(t) if !t.is_finite() => {
                Err(Error::Config(format!("SReLU threshold must be finite, got {t}")))
            }
            Activation::Elu(a) if !(a > 0.0 && a.is_finite()) => {
                Err(Error::Config(format!("ELU alpha must be positive, got {a}")))
            }
            Activation::Selu { alpha, scale } if !(alpha > 0.0 && scale > 0.0) => Err(Error::Config(format!(
                "SELU needs positive alpha and scale, got {alpha}, {scale}"
            ))),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::SRelu(t) => x.max(t),
            Activation::Elu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x.exp_m1()
                }
            }
            Activation::Selu { alpha, scale } => {
                if x > 0.0 {
                    scale * x
                } else {
                    scale * alpha * x.exp_m1()
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative, taking the right-hand value at kinks.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::SRelu(t) => {
                if x > t {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a * x.exp()
                }
            }
            Activation::Selu { alpha, scale } => {
                if x > 0.0 {
                    scale
                } else {
                    scale * alpha * x.exp()
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Point where the function is not differentiable, if any.
    pub fn kink(&self) -> Option<f64> {
        match *self {
            Activation::Relu | Activation::LeakyRelu(_) => Some(0.0),
            Activation::SRelu(t) => Some(t),
            Activation::Elu(a) if a != 1.0 => Some(0.0),
            Activation::Selu { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn apply(&self, z: &Matrix) -> Matrix {
        z.map(|x| self.eval(x))
    }

    pub fn apply_vec(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&x| self.eval(x)).collect()
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky_relu:{a}"),
            Activation::SRelu(t) => write!(f, "srelu:{t}"),
            Activation::Elu(a) => write!(f, "elu:{a}"),
            Activation::Selu { alpha, scale } => write!(f, "selu:{alpha}:{scale}"),
            Activation::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `relu`, `leaky_relu[:a]`, `srelu[:t]`, `elu[:a]`,
    /// `selu[:alpha:scale]` and `identity`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or("").to_ascii_lowercase().replace('-', "_");
        let args: Vec<f64> = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("activation `{s}`: {e}")))
            })
            .collect::<Result<_>>()?;
        let arg = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
        let max_args = match name.as_str() {
            "relu" | "identity" | "linear" => 0,
            "selu" => 2,
            _ => 1,
        };
        if args.len() > max_args {
            return Err(Error::Config(format!("activation `{s}` has too many parameters")));
        }
        let act = match name.as_str() {
            "relu" => Activation::Relu,
            "leaky_relu" | "leakyrelu" | "leaky" => Activation::LeakyRelu(arg(0, DEFAULT_LEAKY_SLOPE)),
            "srelu" => Activation::SRelu(arg(0, DEFAULT_SRELU_THRESHOLD)),
            "elu" => Activation::Elu(arg(0, 1.0)),
            "selu" => Activation::Selu {
                alpha: arg(0, SELU_ALPHA),
                scale: arg(1, SELU_SCALE),
            },
            "identity" | "linear" => Activation::Identity,
            _ => return Err(Error::Config(format!("unknown activation `{s}`"))),
        };
        act.validate()?;
        Ok(act)
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

/// Softmax of `z` along `axis`, shifted by the max for stability.
pub fn softmax(z: &Matrix, axis: SoftmaxAxis) -> Matrix {
    let mut out = z.clone();
    let (r, c) = z.shape();
    match axis {
        SoftmaxAxis::PerRow => {
            for i in 0..r {
                normalize_exp(out.row_mut(i));
            }
        }
        SoftmaxAxis::PerColumn => {
            for j in 0..c {
                let mut col = z.column(j);
                normalize_exp(&mut col);
                out.set_column(j, &col);
            }
        }
    }
    out
}

fn normalize_exp(v: &mut [f64]) {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `(Z⁺, Z⁻)` with `Z = Z⁺ − Z⁻`.
pub fn pos_neg_split(z: &Matrix) -> (Matrix, Matrix) {
    (z.map(|x| x.max(0.0)), z.map(|x| (-x).max(0.0)))
}

/// Distance of `H_M⊥` from the sphere center, the predicted radius, and
/// their absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereResidual {
    pub lhs: f64,
    pub radius: f64,
    pub residual: f64,
}

fn clamped_sqrt(r2: f64, what: &str) -> Result<f64> {
    if r2 < RADIUS_FAIL {
        return Err(Error::Numerical(format!("{what}: squared radius {r2:e} is negative")));
    }
    Ok(if r2 < RADIUS_CLAMP { 0.0 } else { r2.max(0.0).sqrt() })
}

/// ReLU sphere: `H_M⊥` lies on the sphere centered at `Z_M⊥/2` with squared
/// radius `‖Z_M⊥/2‖² − ⟨H_M, H_M − Z_M⟩`.
pub fn relu_sphere_residual(z: &Matrix, basis: &SpectralBasis) -> Result<SphereResidual> {
    leaky_sphere_residual(z, 0.0, basis)
}

/// Leaky ReLU sphere: center `(1+a)Z_M⊥/2`, squared radius
/// `‖(1−a)Z_M⊥/2‖² − ⟨H_M − Z_M, H_M − a Z_M⟩`. `a = 0` is plain ReLU.
pub fn leaky_sphere_residual(z: &Matrix, a: f64, basis: &SpectralBasis) -> Result<SphereResidual> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::Config(format!("slope must lie in [0, 1), got {a}")));
    }
    let h = if a == 0.0 {
        Activation::Relu.apply(z)
    } else {
        Activation::LeakyRelu(a).apply(z)
    };
    let (zm, zp) = decompose(z, basis)?;
    let (hm, hp) = decompose(&h, basis)?;

    let center = zp.scale(0.5 * (1.0 + a));
    let lhs = hp.sub(&center)?.frobenius_norm();
    let r2 = zp.scale(0.5 * (1.0 - a)).frobenius_norm_sq() - hm.sub(&zm)?.frobenius_inner(&hm.sub(&zm.scale(a))?)?;
    let radius = clamped_sqrt(r2, "sphere radius")?;
    Ok(SphereResidual {
        lhs,
        radius,
        residual: (lhs - radius).abs(),
    })
}

/// `|‖σ(Z) − Z/2‖² − ‖Z/2‖²|`.
pub fn relu_split_residual(z: &Matrix) -> f64 {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for &x in z.data() {
        let d = x.max(0.0) - 0.5 * x;
        lhs += d * d;
        rhs += 0.25 * x * x;
    }
    (lhs - rhs).abs()
}

/// `|‖Z_M⊥/2‖² − ‖H_M⊥ − Z_M⊥/2‖² − ⟨Z⁺_M, Z⁻_M⟩|` with `H = σ(Z)`.
pub fn relu_eigenspace_residual(z: &Matrix, basis: &SpectralBasis) -> Result<f64> {
    leaky_eigenspace_residual(z, 0.0, basis)
}

/// `|‖σ_a(Z) − (1+a)Z/2‖² − ‖(1−a)Z/2‖²|`.
pub fn leaky_split_residual(z: &Matrix, a: f64) -> f64 {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for &x in z.data() {
        let h = if x >= 0.0 { x } else { a * x };
        let d = h - 0.5 * (1.0 + a) * x;
        let r = 0.5 * (1.0 - a) * x;
        lhs += d * d;
        rhs += r * r;
    }
    (lhs - rhs).abs()
}

/// `|‖(1−a)Z_M⊥/2‖² − ‖H_M⊥ − (1+a)Z_M⊥/2‖² − (1−a)²⟨Z⁺_M, Z⁻_M⟩|` with
/// `H = σ_a(Z)`.
pub fn leaky_eigenspace_residual(z: &Matrix, a: f64, basis: &SpectralBasis) -> Result<f64> {
    let h = z.map(|x| if x >= 0.0 { x } else { a * x });
    let (_, zp) = decompose(z, basis)?;
    let (_, hp) = decompose(&h, basis)?;
    let (plus, minus) = pos_neg_split(z);
    let (plus_m, _) = decompose(&plus, basis)?;
    let (minus_m, _) = decompose(&minus, basis)?;
    let lhs = zp.scale(0.5 * (1.0 - a)).frobenius_norm_sq() - hp.sub(&zp.scale(0.5 * (1.0 + a)))?.frobenius_norm_sq();
    let rhs = (1.0 - a) * (1.0 - a) * plus_m.frobenius_inner(&minus_m)?;
    Ok((lhs - rhs).abs())
}
