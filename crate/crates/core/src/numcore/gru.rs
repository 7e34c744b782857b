//! Gated recurrent unit cell.
//!
//! Gate convention: `u` (update) close to one carries the previous hidden
//! state through unchanged.
//!
//! ```text
//! u  = σ(W_u x + U_u h + b_u)
//! r  = σ(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = (1 − u) ⊙ n + u ⊙ h
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::error::{NumError, NumResult};
use super::scalar::Scalar;
use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruCell<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_update: Tensor<T>,
    pub u_update: Tensor<T>,
    pub b_update: Tensor<T>,
    pub w_reset: Tensor<T>,
    pub u_reset: Tensor<T>,
    pub b_reset: Tensor<T>,
    pub w_cand: Tensor<T>,
    pub u_cand: Tensor<T>,
    pub b_cand: Tensor<T>,
}

/// Cell parameters registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_update: Var,
    pub u_update: Var,
    pub b_update: Var,
    pub w_reset: Var,
    pub u_reset: Var,
    pub b_reset: Var,
    pub w_cand: Var,
    pub u_cand: Var,
    pub b_cand: Var,
    input_dim: usize,
    hidden_dim: usize,
}

impl<T: Scalar> GruCell<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_dim, input_dim]);
        let u = || Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        GruCell {
            input_dim,
            hidden_dim,
            w_update: w(),
            u_update: u(),
            b_update: b(),
            w_reset: w(),
            u_reset: u(),
            b_reset: b(),
            w_cand: w(),
            u_cand: u(),
            b_cand: b(),
        }
    }

    /// Uniform `±1/√(input_dim + hidden_dim)` weights, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input_dim, hidden_dim);
        let bound = 1.0 / ((input_dim + hidden_dim) as f64).sqrt();
        for t in [
            &mut cell.w_update,
            &mut cell.u_update,
            &mut cell.w_reset,
            &mut cell.u_reset,
            &mut cell.w_cand,
            &mut cell.u_cand,
        ] {
            for v in t.data_mut() {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        cell
    }

    pub fn tensors(&self) -> [&Tensor<T>; 9] {
        [
            &self.w_update,
            &self.u_update,
            &self.b_update,
            &self.w_reset,
            &self.u_reset,
            &self.b_reset,
            &self.w_cand,
            &self.u_cand,
            &self.b_cand,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.w_update,
            &mut self.u_update,
            &mut self.b_update,
            &mut self.w_reset,
            &mut self.u_reset,
            &mut self.b_reset,
            &mut self.w_cand,
            &mut self.u_cand,
            &mut self.b_cand,
        ]
    }

    pub const TENSOR_NAMES: [&'static str; 9] = [
        "w_update", "u_update", "b_update", "w_reset", "u_reset", "b_reset", "w_cand", "u_cand",
        "b_cand",
    ];

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> GruVars {
        let [a, b, c, d, e, f, g, h, i] = self.tensors().map(|t| tape.leaf(t.clone(), trainable));
        GruVars {
            w_update: a,
            u_update: b,
            b_update: c,
            w_reset: d,
            u_reset: e,
            b_reset: f,
            w_cand: g,
            u_cand: h,
            b_cand: i,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
        }
    }
}

impl GruVars {
    pub fn all(&self) -> [Var; 9] {
        [
            self.w_update,
            self.u_update,
            self.b_update,
            self.w_reset,
            self.u_reset,
            self.b_reset,
            self.w_cand,
            self.u_cand,
            self.b_cand,
        ]
    }
}

/// One differentiable cell update `h' = GRU(x, h)`.
pub fn gru_step<T: Scalar>(tape: &mut Tape<T>, cell: &GruVars, x: Var, h: Var) -> NumResult<Var> {
    if tape.value(x).len() != cell.input_dim || tape.value(h).len() != cell.hidden_dim {
        return Err(NumError::dim(
            "gru_step",
            format!(
                "cell expects input {} / hidden {}, got {} / {}",
                cell.input_dim,
                cell.hidden_dim,
                tape.value(x).len(),
                tape.value(h).len()
            ),
        ));
    }
    let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, hv: Var| -> NumResult<Var> {
        let wx = tape.affine(w, x, Some(b))?;
        let uh = tape.affine(u, hv, None)?;
        tape.add(wx, uh)
    };
    let u_pre = gate(tape, cell.w_update, cell.u_update, cell.b_update, h)?;
    let update = tape.sigmoid(u_pre);
    let r_pre = gate(tape, cell.w_reset, cell.u_reset, cell.b_reset, h)?;
    let reset = tape.sigmoid(r_pre);
    let rh = tape.mul(reset, h)?;
    let n_pre = gate(tape, cell.w_cand, cell.u_cand, cell.b_cand, rh)?;
    let cand = tape.tanh(n_pre);
    // h' = n + u ⊙ (h − n)
    let diff = tape.sub(h, cand)?;
    let carried = tape.mul(update, diff)?;
    tape.add(cand, carried)
}
