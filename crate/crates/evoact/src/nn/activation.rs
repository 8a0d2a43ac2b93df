//! Hidden-layer activation: an evolved tree or one of the fixed baselines.

use crate::expr::{ActivationTree, DualValue, NonFinite, UnaryOp};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

/// Scalar activation applied elementwise to hidden pre-activations. SELU is
/// a baseline only; it is not expressible in the tree primitive set.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Tree(ActivationTree),
    Relu,
    Elu,
    Selu,
}

impl Activation {
    pub fn eval(&self, x: f64) -> Result<f64, NonFinite> {
        match self {
            Activation::Tree(t) => t.eval(x),
            Activation::Relu => Ok(UnaryOp::Relu.apply(x)),
            Activation::Elu => finite(UnaryOp::Elu.apply(x)),
            Activation::Selu => finite(selu(x)),
        }
    }

    pub fn eval_dual(&self, x: f64) -> Result<DualValue, NonFinite> {
        match self {
            Activation::Tree(t) => t.eval_dual(x),
            Activation::Relu => Ok(DualValue {
                value: UnaryOp::Relu.apply(x),
                derivative: UnaryOp::Relu.derivative(x),
            }),
            Activation::Elu => finite_dual(DualValue {
                value: UnaryOp::Elu.apply(x),
                derivative: UnaryOp::Elu.derivative(x),
            }),
            Activation::Selu => finite_dual(DualValue {
                value: selu(x),
                derivative: if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp()
                },
            }),
        }
    }

    /// Display label used in reports, e.g. `ReLU (baseline)`.
    pub fn label(&self) -> String {
        match self {
            Activation::Tree(t) => t.to_string(),
            Activation::Relu => "ReLU (baseline)".to_string(),
            Activation::Elu => "ELU (baseline)".to_string(),
            Activation::Selu => "SELU (baseline)".to_string(),
        }
    }
}

fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

fn finite(v: f64) -> Result<f64, NonFinite> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NonFinite)
    }
}

fn finite_dual(d: DualValue) -> Result<DualValue, NonFinite> {
    if d.value.is_finite() && d.derivative.is_finite() {
        Ok(d)
    } else {
        Err(NonFinite)
    }
}
