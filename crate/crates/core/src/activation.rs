//! Activation functions for the ridgelet networks.
//!
//! Six base nonlinearities are supported, each with an exact analytic
//! derivative: ReLU, SiLU, GELU (exact error-function form, not the tanh
//! approximation), Mish, Tanh, and Sigmoid. A layer's activation is either a
//! single base kind applied to every unit, or a hybrid assignment that
//! partitions the units of the layer into ordered groups with different base
//! kinds. The default hybrid splits each layer equally across
//! {ReLU, SiLU, GELU, Mish}, assigning any remainder to the first group.

use crate::market::MarketError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// A concrete scalar nonlinearity with an analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseActivation {
    Relu,
    Silu,
    Gelu,
    Mish,
    Tanh,
    Sigmoid,
}

/// Numerically stable logistic sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

impl BaseActivation {
    /// All base kinds, in the order used by the default hybrid split.
    pub const HYBRID_ORDER: [BaseActivation; 4] =
        [BaseActivation::Relu, BaseActivation::Silu, BaseActivation::Gelu, BaseActivation::Mish];

    pub fn value(self, x: f64) -> f64 {
        match self {
            BaseActivation::Relu => x.max(0.0),
            BaseActivation::Silu => x * sigmoid(x),
            BaseActivation::Gelu => 0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
            BaseActivation::Mish => x * softplus(x).tanh(),
            BaseActivation::Tanh => x.tanh(),
            BaseActivation::Sigmoid => sigmoid(x),
        }
    }

    /// Analytic derivative; ReLU uses subgradient 0 at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            BaseActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            BaseActivation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            BaseActivation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
                cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
            }
            BaseActivation::Mish => {
                let t = softplus(x).tanh();
                t + x * (1.0 - t * t) * sigmoid(x)
            }
            BaseActivation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            BaseActivation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn value_and_derivative(self, x: f64) -> (f64, f64) {
        (self.value(x), self.derivative(x))
    }
}

impl fmt::Display for BaseActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BaseActivation::Relu => "relu",
            BaseActivation::Silu => "silu",
            BaseActivation::Gelu => "gelu",
            BaseActivation::Mish => "mish",
            BaseActivation::Tanh => "tanh",
            BaseActivation::Sigmoid => "sigmoid",
        };
        f.write_str(s)
    }
}

/// Per-layer activation assignment: one base kind for every unit, or an
/// ordered hybrid split whose group sizes must sum to the layer width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Activation {
    Base(BaseActivation),
    Hybrid(Vec<(BaseActivation, usize)>),
}

impl Activation {
    /// Default hybrid split for a layer: equal shares of
    /// {ReLU, SiLU, GELU, Mish}, remainder assigned to the first group.
    pub fn hybrid_equal(width: usize) -> Self {
        let share = width / 4;
        let remainder = width % 4;
        let groups = BaseActivation::HYBRID_ORDER
            .iter()
            .enumerate()
            .map(|(g, &kind)| (kind, if g == 0 { share + remainder } else { share }))
            .collect();
        Activation::Hybrid(groups)
    }

    /// Parse a CLI/config selector name; `hybrid` expands to the default
    /// equal split for the given layer width.
    pub fn from_name(name: &str, width: usize) -> Result<Self, MarketError> {
        Ok(match name {
            "relu" => Activation::Base(BaseActivation::Relu),
            "silu" => Activation::Base(BaseActivation::Silu),
            "gelu" => Activation::Base(BaseActivation::Gelu),
            "mish" => Activation::Base(BaseActivation::Mish),
            "tanh" => Activation::Base(BaseActivation::Tanh),
            "sigmoid" => Activation::Base(BaseActivation::Sigmoid),
            "hybrid" => Activation::hybrid_equal(width),
            other => {
                return Err(MarketError::ShapeMismatch(format!(
                    "unknown activation {other:?}; expected one of \
                     relu, silu, gelu, mish, tanh, sigmoid, hybrid"
                )))
            }
        })
    }

    /// Expand into one base kind per unit of a layer of the given width.
    pub fn unit_kinds(&self, width: usize) -> Result<Vec<BaseActivation>, MarketError> {
        match self {
            Activation::Base(kind) => Ok(vec![*kind; width]),
            Activation::Hybrid(groups) => {
                let total: usize = groups.iter().map(|(_, n)| n).sum();
                if total != width {
                    return Err(MarketError::ShapeMismatch(format!(
                        "hybrid split totals {total} units for a layer of width {width}"
                    )));
                }
                let mut kinds = Vec::with_capacity(width);
                for &(kind, count) in groups {
                    kinds.extend(std::iter::repeat(kind).take(count));
                }
                Ok(kinds)
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Base(kind) => kind.fmt(f),
            Activation::Hybrid(_) => f.write_str("hybrid"),
        }
    }
}
