//! Dense numerics: tensors, a reverse-mode tape, layer kernels, Adam, and
//! symmetric eigen/PCA routines. Generic over the element type.

mod adam;
mod eigen;
mod error;
pub mod func;
mod gru;
mod linear;
mod pca;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use eigen::{symmetric_eigen, symmetric_eigenvalues, SymmetricEigen};
pub use error::{NumError, NumResult};
pub use func::{entropy, kl_divergence, log_softmax, softmax, PROB_FLOOR};
pub use gru::{gru_step, GruCell, GruVars};
pub use linear::{Linear, LinearVars};
pub use pca::{pca_fit_project, Pca};
pub use scalar::{logistic, Scalar};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
