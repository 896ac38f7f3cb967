//! Dense numeric substrate: tensors, a recorded graph with reverse-mode
//! gradients, recurrent and attention layers, and a finite-difference oracle.

mod gradcheck;
mod graph;
mod layers;
mod params;
mod rng;
mod tensor;

pub use gradcheck::{finite_diff, finite_diff_param, max_relative_error, relative_error, DEFAULT_EPS};
pub use graph::{softmax_values, Gradients, Graph, Var};
pub use layers::{
    birnn_encode, gru_step, linear, multi_head_attention, AttentionOutput, BiGru, Gru, Linear,
    MultiHeadAttention,
};
pub use params::{ParamId, ParamStore, CHECKPOINT_FORMAT};
pub use rng::Rng;
pub use tensor::{Tensor, MAX_RANK};
