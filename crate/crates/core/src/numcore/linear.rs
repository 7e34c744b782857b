use rand::Rng;
use serde::{Deserialize, Serialize};

use super::error::NumResult;
use super::scalar::Scalar;
use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Affine layer `y = W x + b`, `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            w: Tensor::zeros(&[out_dim, in_dim]),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    /// Weights and biases uniform in `±1/√in_dim`.
    pub fn init<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut layer = Self::zeros(out_dim, in_dim);
        for v in layer.w.data_mut().iter_mut().chain(layer.b.data_mut()) {
            *v = T::lit(rng.random_range(-bound..bound));
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> LinearVars {
        LinearVars {
            w: tape.leaf(self.w.clone(), trainable),
            b: tape.leaf(self.b.clone(), trainable),
        }
    }
}

impl LinearVars {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> NumResult<Var> {
        tape.affine(self.w, x, Some(self.b))
    }
}
