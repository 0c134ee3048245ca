//! Minimal neural-network engine: exactly the layers the task models need,
//! with analytic backward passes, Adam and checkpoints.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod layers;
mod loss;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_f32, encode_f32, Checkpoint, EncodedParam, FORMAT_VERSION};
pub use layers::{
    affine, affine_backward, avg_pool_all, avg_pool_all_backward, conv1d_backward,
    conv1d_forward, dense_forward, dropout, embed, embed_backward, max_pool, max_pool_backward,
    relu_backward_inplace, relu_inplace, softmax, softmax_backward, Activation, ConvSpec, Mode,
    PoolKind,
};
pub use loss::{softmax_cross_entropy, squared_error};
pub use params::{glorot_uniform, uniform, GradStore, Param, ParamStore, EMBEDDING_INIT};
pub use tensor::{ensure_finite, Tensor2};
pub(crate) use tensor::axpy;
