//! Degree-2 polynomial activation a*x^2 + b*x, evaluated slot-wise.
//! One ciphertext multiply and one rescale per cipher, however the
//! coefficients fall out. An integer `a` (squaring most of all) needs
//! no coefficient scale, so the rescale shrinks from c+p to c bits.

use num::One;

use crate::hisa::{FixedScalar, HisaBackend};
use crate::tensor::{CipherTensor, TensorError};
use crate::Rat;

/// Whether `r` is a dyadic rational with at most `bits` fraction bits.
fn fits_grid(r: &Rat, bits: i32) -> bool {
    if bits < 0 {
        return false;
    }
    let d = r.denom().magnitude();
    d.count_ones() == 1 && d.bits() - 1 <= bits as u64
}

pub fn poly_activation<B: HisaBackend>(
    backend: &mut B,
    input: &CipherTensor,
    a: &Rat,
    b: &Rat,
) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    if meta.scale_divergence() != 0 {
        return Err(TensorError::ScaleDivergence {
            value_scale: meta.scale_log,
            cipher_scale: meta.cipher_scale_log,
        });
    }
    let c = meta.cipher_scale_log;
    let p = backend.config().plain_scale_log;
    let q = if a.is_integer() && fits_grid(b, c) {
        0
    } else {
        p
    };
    let fp = |v: &Rat, s: i32| {
        FixedScalar::try_from_rat(v, s).ok_or_else(|| {
            TensorError::Layout(format!(
                "activation coefficient {v} does not fit the scalar grid at scale {s}"
            ))
        })
    };
    let a_fp = fp(a, q)?;
    // The linear term must land on the squared term's scale c + (c+q).
    let b_fp = fp(b, c + q)?;
    let b_zero = num::Zero::is_zero(b);

    let mut handles = Vec::with_capacity(input.handles.len());
    for &x in &input.handles {
        let sq = backend.mul(x, x)?;
        if !a.is_one() || q != 0 {
            backend.mul_scalar_assign(sq, a_fp)?;
        }
        if !b_zero {
            let lin = backend.mul_scalar(x, b_fp)?;
            backend.add_assign(sq, lin)?;
            backend.free(lin)?;
        }
        backend.div_scalar_assign(sq, 1i64 << (c + q))?;
        handles.push(sq);
    }

    let out_meta = meta.clone();
    CipherTensor::new(handles, out_meta)
}
