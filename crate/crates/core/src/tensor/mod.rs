//! Tensors over the instruction set: plaintext reference tensors,
//! ciphertext layout metadata, packing, and the operation kernels.

mod error;
pub(crate) mod meta;
mod pack;
pub(crate) mod plain;

pub mod kernels;

pub use error::TensorError;
pub use kernels::{
    avg_pool, conv2d_chw, conv2d_chw_fits, conv2d_hw, convert_layout, matmul, matmul_fits,
    poly_activation, reshape, PoolPath,
};
pub use meta::{CipherTensor, CipherTensorMeta, LayoutFamily, Padding};
pub use pack::{pack, unpack};
pub use plain::{
    avg_pool_plain, conv2d_plain, conv_output_hw, matmul_plain, poly_act_plain, PlainTensor,
};
