//! Dense-math kernel layer: layer forwards (and student-side gradients),
//! Adam, and numerical verification utilities.

pub mod adam;
pub mod attention;
pub mod conv;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod pool;

pub use adam::AdamState;
pub use attention::{multi_head_attention_forward, AttentionDims, AttentionScratch};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_gemm, ConvShape};
pub use gradcheck::{finite_diff_check, finite_diff_check_coords};
pub use lstm::{lstm_cell_forward, lstm_cell_forward_batch, LstmDims};
pub use ops::{
    dot_score, dot_score_backward, kl_divergence, masked_temperature_softmax,
    masked_temperature_softmax_backward, masked_temperature_softmax_vec, relu_backward_inplace,
    relu_inplace,
};
pub use params::{BlockId, BlockInfo, Init, ParamSet};
pub use pool::{set_max_pool, set_max_pool_backward};
