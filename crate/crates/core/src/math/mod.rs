//! Dense tensors, reverse-mode differentiation, the GRU cell, losses and Adam.

mod graph;
mod gru;
mod loss;
mod param;
mod tensor;

pub use graph::{sigmoid, softmax_rows, Gradients, Graph, NodeId, LOG_FLOOR};
pub use gru::GruCell;
pub use loss::{binary_cross_entropy, cross_entropy, masked_token_nll};
pub use param::{AdamConfig, ParamId, ParamStore, StoreId, INIT_RANGE};
pub use tensor::{argmax, Tensor};
