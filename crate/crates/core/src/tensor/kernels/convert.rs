//! Repacking between layouts. Works plane by plane: each (batch,
//! channel) image is extracted from its source cipher, shifted to its
//! destination slot base, and summed into the destination cipher. Both
//! layouts must agree on the spatial strides; changing those means
//! re-encrypting, which this instruction set cannot do.

use num::{One, Zero};

use crate::hisa::{CtHandle, HisaBackend};
use crate::tensor::{CipherTensor, CipherTensorMeta, TensorError};
use crate::Rat;

pub fn convert_layout<B: HisaBackend>(
    backend: &mut B,
    input: &CipherTensor,
    target: &CipherTensorMeta,
) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    if meta.logical_dims != target.logical_dims {
        return Err(TensorError::Shape(format!(
            "layout conversion cannot change dims {:?} to {:?}",
            meta.logical_dims, target.logical_dims
        )));
    }
    if meta.logical_dims.len() != 4 {
        return Err(TensorError::Layout(format!(
            "layout conversion handles rank-4 tensors, got {:?}",
            meta.logical_dims
        )));
    }
    if meta.outer_dims == target.outer_dims
        && meta.inner_dims == target.inner_dims
        && meta.inner_strides == target.inner_strides
    {
        return CipherTensor::new(input.handles.clone(), meta.clone());
    }
    let ni = meta.inner_strides.len();
    let nt = target.inner_strides.len();
    let (hs, ws) = (meta.inner_strides[ni - 2], meta.inner_strides[ni - 1]);
    if target.inner_strides[nt - 2] != hs || target.inner_strides[nt - 1] != ws {
        return Err(TensorError::Layout(format!(
            "spatial strides must match to repack: {:?} vs {:?}",
            meta.inner_strides, target.inner_strides
        )));
    }
    let (b, c, h, w) = (
        meta.logical_dims[0],
        meta.logical_dims[1],
        meta.logical_dims[2],
        meta.logical_dims[3],
    );
    let slots = backend.config().slot_count;
    let p = backend.config().plain_scale_log;
    // A plane travels alone if its cipher holds nothing else and no
    // garbage; otherwise it is masked out first.
    let multi_plane = meta.inner_dims.len() > 2 && meta.inner_dims[0] > 1;

    let mut acc: Vec<Option<CtHandle>> = vec![None; target.cipher_count()];
    for bi in 0..b {
        for ci in 0..c {
            let (sc, so) = meta.locate(&[bi, ci, 0, 0]);
            let (dc, dst_base) = target.locate(&[bi, ci, 0, 0]);
            let raw = input.handles[sc];
            let (mut plane, mut owned) = if meta.has_invalid_slots || multi_plane {
                let mut ones = vec![Rat::zero(); slots];
                for y in 0..h {
                    for x in 0..w {
                        ones[so + y * hs + x * ws] = Rat::one();
                    }
                }
                let mask = backend.encode(&ones, p)?;
                let e = backend.mul_plain(raw, mask)?;
                backend.div_scalar_assign(e, 1i64 << p)?;
                backend.free(mask)?;
                (e, true)
            } else {
                (raw, false)
            };
            let shift = dst_base as i64 - so as i64;
            if shift != 0 {
                if owned {
                    if shift > 0 {
                        backend.rot_right_assign(plane, shift as u64)?;
                    } else {
                        backend.rot_left_assign(plane, (-shift) as u64)?;
                    }
                } else {
                    plane = if shift > 0 {
                        backend.rot_right(plane, shift as u64)?
                    } else {
                        backend.rot_left(plane, (-shift) as u64)?
                    };
                    owned = true;
                }
            }
            match acc[dc] {
                None => {
                    acc[dc] = Some(if owned { plane } else { backend.copy(plane)? });
                }
                Some(a) => {
                    backend.add_assign(a, plane)?;
                    if owned {
                        backend.free(plane)?;
                    }
                }
            }
        }
    }

    let handles: Vec<CtHandle> = acc
        .into_iter()
        .map(|a| a.expect("every target cipher holds at least one plane"))
        .collect();
    let mut out_meta = target.clone();
    out_meta.scale_log = meta.scale_log;
    out_meta.cipher_scale_log = meta.cipher_scale_log;
    out_meta.has_invalid_slots = false;
    CipherTensor::new(handles, out_meta)
}
