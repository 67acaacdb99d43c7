//! Average pooling. The window sum is a rotate-and-add over the two
//! spatial strides, which work the same in both layout families. The
//! divide by the window size has two lowerings: a direct scalar divide
//! (only for power-of-two windows; shifts the cipher scale, widening
//! the divergence the metadata tracks) or a fixed-point reciprocal
//! multiply that keeps the scales aligned for a polynomial activation
//! downstream.

use num::{BigInt, One};

use crate::hisa::{FixedScalar, HisaBackend};
use crate::tensor::{CipherTensor, TensorError};
use crate::Rat;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PoolPath {
    Divisor,
    Reciprocal,
}

pub fn avg_pool<B: HisaBackend>(
    backend: &mut B,
    input: &CipherTensor,
    window: usize,
    stride: usize,
    path: PoolPath,
) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    let rank = meta.logical_dims.len();
    if rank < 3 || meta.inner_dims.len() < 2 {
        return Err(TensorError::Layout(format!(
            "pool expects spatial dims, got {:?}",
            meta.logical_dims
        )));
    }
    let h = meta.logical_dims[rank - 2];
    let w = meta.logical_dims[rank - 1];
    if window == 0 || stride == 0 || window > h || window > w {
        return Err(TensorError::Shape(format!(
            "window {window} stride {stride} does not fit a {h}x{w} image"
        )));
    }
    let ni = meta.inner_strides.len();
    let hs = meta.inner_strides[ni - 2];
    let ws = meta.inner_strides[ni - 1];
    let n = window * window;
    if path == PoolPath::Divisor && !n.is_power_of_two() {
        return Err(TensorError::Layout(format!(
            "divisor pooling needs a power-of-two window area, got {n}"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let p = backend.config().plain_scale_log;

    let mut handles = Vec::with_capacity(input.handles.len());
    for &ct in &input.handles {
        let acc = backend.copy(ct)?;
        for dy in 0..window {
            for dx in 0..window {
                if dy == 0 && dx == 0 {
                    continue;
                }
                let r = backend.rot_left(ct, (dy * hs + dx * ws) as u64)?;
                backend.add_assign(acc, r)?;
                backend.free(r)?;
            }
        }
        match path {
            PoolPath::Divisor => {
                backend.div_scalar_assign(acc, n as i64)?;
            }
            PoolPath::Reciprocal => {
                let inv = Rat::new(BigInt::one(), BigInt::from(n));
                backend.mul_scalar_assign(acc, FixedScalar::from_rat(&inv, p))?;
                backend.div_scalar_assign(acc, 1i64 << p)?;
            }
        }
        handles.push(acc);
    }

    let mut out_meta = meta.clone();
    let nd = out_meta.inner_dims.len();
    out_meta.inner_dims[nd - 2] = oh;
    out_meta.inner_dims[nd - 1] = ow;
    out_meta.inner_strides[nd - 2] = hs * stride;
    out_meta.inner_strides[nd - 1] = ws * stride;
    out_meta.logical_dims[rank - 2] = oh;
    out_meta.logical_dims[rank - 1] = ow;
    if path == PoolPath::Divisor {
        out_meta.cipher_scale_log -= n.ilog2() as i32;
    }
    out_meta.has_invalid_slots = true;
    CipherTensor::new(handles, out_meta)
}
