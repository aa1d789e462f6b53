//! Reverse-mode differentiation on dense matrices, multilayer perceptrons,
//! squashed-Gaussian heads, Adam and a flat checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gaussian;
pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod tensor;

pub use adam::Adam;
pub use error::{NnError, Result};
pub use gaussian::{Sample, SquashedGaussian};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use graph::{lse, softplus, Gradients, Graph, Var};
pub use mlp::{BoundMlp, Mlp};
pub use tensor::Tensor;
