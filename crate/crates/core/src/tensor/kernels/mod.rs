//! Lowerings from tensor operations to instruction sequences. Every
//! kernel takes the backend it emits into, never mutates its input
//! ciphertexts (inputs may be shared with other consumers), and frees
//! the temporaries it allocates.

mod activation;
mod conv_chw;
mod conv_hw;
mod convert;
mod matmul;
mod pool;
mod reshape;

#[cfg(test)]
mod tests;

pub use activation::poly_activation;
pub use conv_chw::{conv2d_chw, conv2d_chw_fits};
pub use conv_hw::conv2d_hw;
pub use convert::convert_layout;
pub use matmul::{matmul, matmul_fits};
pub use pool::{avg_pool, PoolPath};
pub use reshape::reshape;

use crate::hisa::{CtHandle, HisaBackend, HisaError};

/// Rotate by a signed slot offset: positive moves content toward lower
/// slots. `None` means the offset was zero and the operand can be used
/// directly.
fn rotate_signed<B: HisaBackend>(
    backend: &mut B,
    c: CtHandle,
    offset: i64,
) -> Result<Option<CtHandle>, HisaError> {
    match offset {
        0 => Ok(None),
        o if o > 0 => backend.rot_left(c, o as u64).map(Some),
        o => backend.rot_right(c, (-o) as u64).map(Some),
    }
}

/// Fold a term into an accumulator, taking ownership of the term.
fn accumulate<B: HisaBackend>(
    backend: &mut B,
    acc: &mut Option<CtHandle>,
    term: CtHandle,
) -> Result<(), HisaError> {
    match acc {
        None => *acc = Some(term),
        Some(a) => {
            backend.add_assign(*a, term)?;
            backend.free(term)?;
        }
    }
    Ok(())
}
