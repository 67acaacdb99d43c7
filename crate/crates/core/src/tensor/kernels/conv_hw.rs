//! 2-D convolution over the HW layout (one spatial plane per
//! ciphertext). Rotations depend only on the filter offset, so each
//! input cipher is rotated once per offset and the rotated copies are
//! shared across all output channels.

use num::One;

use super::{accumulate, rotate_signed};
use crate::hisa::{CtHandle, FixedScalar, HisaBackend};
use crate::tensor::plain::conv_output_hw;
use crate::tensor::{
    CipherTensor, CipherTensorMeta, LayoutFamily, Padding, PlainTensor, TensorError,
};
use crate::Rat;

/// `weights` has shape `[FH, FW, IC, OC]`. Stride is 1. The output
/// keeps the input's spatial strides, so the interior of each output
/// plane lands where a following same-padded conv expects it.
pub fn conv2d_hw<B: HisaBackend>(
    backend: &mut B,
    input: &CipherTensor,
    weights: &PlainTensor,
    padding: Padding,
) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    if meta.family() != LayoutFamily::Hw || meta.logical_dims.len() != 4 {
        return Err(TensorError::Layout(format!(
            "hw conv expects a rank-4 hw tensor, got dims {:?}",
            meta.logical_dims
        )));
    }
    let (b, c, h, w) = (
        meta.logical_dims[0],
        meta.logical_dims[1],
        meta.logical_dims[2],
        meta.logical_dims[3],
    );
    let fshape = weights.shape();
    let (fh, fw, ic, oc) = (fshape[0], fshape[1], fshape[2], fshape[3]);
    if ic != c {
        return Err(TensorError::Shape(format!(
            "filter expects {ic} input channels, tensor has {c}"
        )));
    }
    let hs = meta.inner_strides[0];
    let ws = meta.inner_strides[1];
    let (oh, ow) = conv_output_hw(h, w, fh, fw, padding);
    let (ph, pw) = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => (fh / 2, fw / 2),
    };
    let slots = backend.config().slot_count;
    if padding == Padding::Same {
        // A read at row offset -ph..+ph must stay inside this plane's
        // row span, and the bottom row's reads must not wrap.
        let need_row = (w + 2 * pw) * ws;
        if hs < need_row {
            return Err(TensorError::InsufficientPadding {
                need: need_row,
                have: hs,
            });
        }
        let need_plane = (h + ph) * hs + pw * ws;
        if slots < need_plane {
            return Err(TensorError::InsufficientPadding {
                need: need_plane,
                have: slots,
            });
        }
    }
    let p = backend.config().plain_scale_log;

    // Same-padding reads slots outside the logical plane; if those can
    // hold garbage, scrub every input cipher once up front. The slot
    // pattern is identical across ciphers, so one mask plaintext
    // serves them all.
    let masked: Option<Vec<CtHandle>> = if padding == Padding::Same && meta.has_invalid_slots {
        let mut ones = vec![Rat::from_integer(0.into()); slots];
        for y in 0..h {
            for x in 0..w {
                ones[y * hs + x * ws] = Rat::one();
            }
        }
        let mask = backend.encode(&ones, p)?;
        let mut out = Vec::with_capacity(input.handles.len());
        for &ct in &input.handles {
            let m = backend.mul_plain(ct, mask)?;
            backend.div_scalar_assign(m, 1i64 << p)?;
            out.push(m);
        }
        backend.free(mask)?;
        Some(out)
    } else {
        None
    };
    let source = |i: usize| masked.as_ref().map_or(input.handles[i], |m| m[i]);

    let mut acc: Vec<Option<CtHandle>> = vec![None; b * oc];
    for bi in 0..b {
        for ci in 0..c {
            let base = source(bi * c + ci);
            let mut taps: Vec<(CtHandle, bool)> = Vec::with_capacity(fh * fw);
            for dy in 0..fh {
                for dx in 0..fw {
                    let offset =
                        (dy as i64 - ph as i64) * hs as i64 + (dx as i64 - pw as i64) * ws as i64;
                    match rotate_signed(backend, base, offset)? {
                        Some(r) => taps.push((r, true)),
                        None => taps.push((base, false)),
                    }
                }
            }
            for o in 0..oc {
                for (k, (tap, _)) in taps.iter().enumerate() {
                    let (dy, dx) = (k / fw, k % fw);
                    let wv = weights.get(&[dy, dx, ci, o]);
                    let term = backend.mul_scalar(*tap, FixedScalar::from_rat(wv, p))?;
                    accumulate(backend, &mut acc[bi * oc + o], term)?;
                }
            }
            for (tap, owned) in taps {
                if owned {
                    backend.free(tap)?;
                }
            }
        }
    }
    if let Some(m) = masked {
        for h in m {
            backend.free(h)?;
        }
    }

    let mut handles = Vec::with_capacity(b * oc);
    for a in acc {
        let a = a.expect("at least one filter tap per output");
        backend.div_scalar_assign(a, 1i64 << p)?;
        handles.push(a);
    }
    let out_meta = CipherTensorMeta {
        outer_dims: vec![b, oc],
        inner_dims: vec![oh, ow],
        inner_strides: vec![hs, ws],
        logical_dims: vec![b, oc, oh, ow],
        dim_groups: vec![1, 1, 1, 1],
        scale_log: meta.scale_log,
        cipher_scale_log: meta.cipher_scale_log,
        has_invalid_slots: true,
    };
    CipherTensor::new(handles, out_meta)
}
