//! Element-wise activation functions and their derivatives.

use crate::scalar::Real;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    x
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// a'(x) evaluated at the pre-activation value `x` (the exact argument
    /// the activation was applied to, bias included).
    #[inline]
    pub fn derivative<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                F::one() - t * t
            }
            Activation::Identity => F::one(),
        }
    }
}

pub fn apply_activation<F: Real>(v: &Volume<F>, kind: Activation) -> Volume<F> {
    v.map(|x| kind.apply(x))
}

pub fn activation_derivative<F: Real>(pre: &Volume<F>, kind: Activation) -> Volume<F> {
    pre.map(|x| kind.derivative(x))
}
