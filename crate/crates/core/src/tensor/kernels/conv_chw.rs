//! 2-D convolution over the CHW layout. Each input cipher carries a
//! block of channel planes; the kernel replicates it so that one
//! plaintext multiply can feed several output channels at once, then
//! folds the channel block with a rotation tree. Instruction count per
//! (input group, filter tap, output group) is a single mulPlain.

use num::{One, Zero};

use super::{accumulate, rotate_signed};
use crate::hisa::{CtHandle, HisaBackend};
use crate::tensor::meta::prev_pow2;
use crate::tensor::plain::conv_output_hw;
use crate::tensor::{
    CipherTensor, CipherTensorMeta, LayoutFamily, Padding, PlainTensor, TensorError,
};
use crate::Rat;

struct ChwPlan {
    block: usize,
    ocb: usize,
    g_out: usize,
}

fn plan(meta: &CipherTensorMeta, oc: usize, slots: usize) -> Option<ChwPlan> {
    let cb = meta.inner_dims[0];
    let cs = meta.inner_strides[0];
    let block = cb * cs;
    if block == 0 || block > slots {
        return None;
    }
    let ocb = prev_pow2(slots / block).min(oc.next_power_of_two());
    if ocb == 0 {
        return None;
    }
    Some(ChwPlan {
        block,
        ocb,
        g_out: oc.div_ceil(ocb),
    })
}

/// Whether `conv2d_chw` can run on a tensor with this layout without
/// repacking: the replicated block must fit the slot budget and, for
/// same padding, the strides must leave enough margin that out-of-image
/// reads land on dead slots.
pub fn conv2d_chw_fits(
    meta: &CipherTensorMeta,
    fh: usize,
    fw: usize,
    oc: usize,
    padding: Padding,
    slots: usize,
) -> bool {
    if meta.family() != LayoutFamily::Chw {
        return false;
    }
    if plan(meta, oc, slots).is_none() {
        return false;
    }
    if padding == Padding::Same {
        let (h, w) = (meta.logical_dims[2], meta.logical_dims[3]);
        let (cs, hs, ws) = (
            meta.inner_strides[0],
            meta.inner_strides[1],
            meta.inner_strides[2],
        );
        let (ph, pw) = (fh / 2, fw / 2);
        if hs < (w + 2 * pw) * ws || cs < (h + 2 * ph) * hs {
            return false;
        }
    }
    true
}

/// `weights` has shape `[FH, FW, IC, OC]`. Stride is 1.
pub fn conv2d_chw<B: HisaBackend>(
    backend: &mut B,
    input: &CipherTensor,
    weights: &PlainTensor,
    padding: Padding,
) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    if meta.family() != LayoutFamily::Chw {
        return Err(TensorError::Layout(format!(
            "chw conv expects a chw tensor, got dims {:?} groups {:?}",
            meta.logical_dims, meta.dim_groups
        )));
    }
    let (bsz, c, h, w) = (
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
    let g_in = meta.outer_dims[1];
    let cb = meta.inner_dims[0];
    let (cs, hs, ws) = (
        meta.inner_strides[0],
        meta.inner_strides[1],
        meta.inner_strides[2],
    );
    let slots = backend.config().slot_count;
    let (ph, pw) = match padding {
        Padding::Valid => (0, 0),
        Padding::Same => (fh / 2, fw / 2),
    };
    if padding == Padding::Same {
        let need_row = (w + 2 * pw) * ws;
        if hs < need_row {
            return Err(TensorError::InsufficientPadding {
                need: need_row,
                have: hs,
            });
        }
        let need_plane = (h + 2 * ph) * hs;
        if cs < need_plane {
            return Err(TensorError::InsufficientPadding {
                need: need_plane,
                have: cs,
            });
        }
    }
    let p = plan(meta, oc, slots).ok_or(TensorError::CipherCapacity {
        need: 2 * cb * cs,
        slots,
    })?;
    let (block, ocb, g_out) = (p.block, p.ocb, p.g_out);
    let (oh, ow) = conv_output_hw(h, w, fh, fw, padding);
    let ps = backend.config().plain_scale_log;

    let mut out_handles = Vec::with_capacity(bsz * g_out);
    for bi in 0..bsz {
        let mut acc: Vec<Option<CtHandle>> = vec![None; g_out];
        for gi in 0..g_in {
            let raw = input.handles[bi * g_in + gi];
            // Dead slots must be zero before replication smears them
            // across the cipher.
            let (clean, clean_owned) = if meta.has_invalid_slots {
                let mut ones = vec![Rat::zero(); slots];
                let live = cb.min(c - gi * cb);
                for cbi in 0..live {
                    for y in 0..h {
                        for x in 0..w {
                            ones[cbi * cs + y * hs + x * ws] = Rat::one();
                        }
                    }
                }
                let mask = backend.encode(&ones, ps)?;
                let m = backend.mul_plain(raw, mask)?;
                backend.div_scalar_assign(m, 1i64 << ps)?;
                backend.free(mask)?;
                (m, true)
            } else {
                (raw, false)
            };
            // Replicate the block so replica l can carry output
            // channel group member l.
            let (rep, rep_owned) = if ocb == 1 {
                (clean, clean_owned)
            } else {
                let shifted = backend.rot_right(clean, block as u64)?;
                let r = backend.add(clean, shifted)?;
                backend.free(shifted)?;
                if clean_owned {
                    backend.free(clean)?;
                }
                let mut copies = 2;
                while copies < ocb {
                    let s = backend.rot_right(r, (block * copies) as u64)?;
                    backend.add_assign(r, s)?;
                    backend.free(s)?;
                    copies *= 2;
                }
                (r, true)
            };
            for dy in 0..fh {
                for dx in 0..fw {
                    let offset =
                        (dy as i64 - ph as i64) * hs as i64 + (dx as i64 - pw as i64) * ws as i64;
                    let (tap, tap_owned) = match rotate_signed(backend, rep, offset)? {
                        Some(r) => (r, true),
                        None => (rep, false),
                    };
                    for (go, sum) in acc.iter_mut().enumerate() {
                        let mut values = vec![Rat::zero(); slots];
                        for l in 0..ocb {
                            let o = go * ocb + l;
                            if o >= oc {
                                continue;
                            }
                            for cbi in 0..cb {
                                let cch = gi * cb + cbi;
                                if cch >= c {
                                    continue;
                                }
                                let wv = weights.get(&[dy, dx, cch, o]);
                                if wv.is_zero() {
                                    continue;
                                }
                                for y in 0..oh {
                                    for x in 0..ow {
                                        values[l * block + cbi * cs + y * hs + x * ws] = wv.clone();
                                    }
                                }
                            }
                        }
                        let pt = backend.encode(&values, ps)?;
                        let term = backend.mul_plain(tap, pt)?;
                        backend.free(pt)?;
                        accumulate(backend, sum, term)?;
                    }
                    if tap_owned {
                        backend.free(tap)?;
                    }
                }
            }
            if rep_owned {
                backend.free(rep)?;
            }
        }
        // Fold the channel block: after the tree, replica l's channel 0
        // plane holds the sum over its block.
        for a in acc {
            let a = a.expect("at least one input group");
            let mut step = 1;
            while step < cb {
                let r = backend.rot_left(a, (cs * step) as u64)?;
                backend.add_assign(a, r)?;
                backend.free(r)?;
                step *= 2;
            }
            backend.div_scalar_assign(a, 1i64 << ps)?;
            out_handles.push(a);
        }
    }

    let out_meta = CipherTensorMeta {
        outer_dims: vec![bsz, g_out],
        inner_dims: vec![ocb, oh, ow],
        inner_strides: vec![block, hs, ws],
        logical_dims: vec![bsz, oc, oh, ow],
        dim_groups: vec![1, 2, 1, 1],
        scale_log: meta.scale_log,
        cipher_scale_log: meta.cipher_scale_log,
        has_invalid_slots: true,
    };
    CipherTensor::new(out_handles, out_meta)
}
