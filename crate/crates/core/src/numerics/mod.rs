//! Tensors, reverse-mode differentiation, and the loss kernels used by
//! training and routing.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod loss;
pub mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var};
pub use loss::{cosine_similarity, cross_entropy, kl_divergence, softmax, Distribution};
pub use tensor::Tensor;
