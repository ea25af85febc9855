//! ReLU and clipped ReLU. Backward passes use the forward output; the
//! derivative is 1 strictly inside the linear region and 0 elsewhere,
//! including at the kinks `x = 0` and `x = m`.

use super::tensor::{Scalar, Tensor4};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    ClippedRelu { ceiling: f64 },
}

impl Activation {
    /// Default ceiling of the clipped ReLU.
    pub const DEFAULT_CEILING: f64 = 6.0;

    pub fn clipped() -> Self {
        Activation::ClippedRelu {
            ceiling: Self::DEFAULT_CEILING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::ClippedRelu { ceiling } if !(ceiling > 0.0) => {
                Err(invalid("clipped ReLU ceiling must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn apply<T: Scalar>(&self, x: T) -> T {
        match *self {
            Activation::Relu => relu(x),
            Activation::ClippedRelu { ceiling } => clipped_relu(x, T::from_f64(ceiling)),
        }
    }

    /// Derivative evaluated from the activation's output `y`.
    pub fn derivative_from_output<T: Scalar>(&self, y: T) -> T {
        let open = match *self {
            Activation::Relu => y > T::zero(),
            Activation::ClippedRelu { ceiling } => y > T::zero() && y < T::from_f64(ceiling),
        };
        if open {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Tensor4<T> {
        x.map(|v| self.apply(v))
    }

    /// Gradient with respect to the input, given the forward output `y`.
    pub fn backward<T: Scalar>(&self, y: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
        let mut g = grad_out.clone();
        for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
            *gv *= self.derivative_from_output(yv);
        }
        g
    }

    /// Linear-region signature of an output, used to detect kink crossings.
    pub fn regime<T: Scalar>(&self, y: T) -> u8 {
        match *self {
            Activation::Relu => (y > T::zero()) as u8,
            Activation::ClippedRelu { ceiling } => {
                if !(y > T::zero()) {
                    0
                } else if y < T::from_f64(ceiling) {
                    1
                } else {
                    2
                }
            }
        }
    }
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn clipped_relu<T: Scalar>(x: T, ceiling: T) -> T {
    relu(x).min(ceiling)
}
