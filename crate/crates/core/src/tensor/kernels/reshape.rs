//! Reshape is free: ciphertexts are shared and only the logical
//! dimension list and its grouping over the combined dimensions
//! change. Each new dimension must cover a consecutive run of old
//! dimensions, so merges (flattening) always work; splits do not.

use crate::tensor::{CipherTensor, TensorError};

pub fn reshape(input: &CipherTensor, shape: &[usize]) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    let old = &meta.logical_dims;
    let mut groups = Vec::with_capacity(shape.len());
    let mut oi = 0;
    for &e in shape {
        let mut prod = 1;
        let mut g = 0;
        // A unit dimension still has to own one unit dimension of the
        // packing; it cannot be conjured out of nothing.
        if e == 1 {
            if oi < old.len() && old[oi] == 1 {
                groups.push(meta.dim_groups[oi]);
                oi += 1;
                continue;
            }
            return Err(TensorError::Shape(format!(
                "cannot reshape {old:?} to {shape:?}: no unit dim to carry"
            )));
        }
        while prod < e {
            if oi == old.len() {
                return Err(TensorError::Shape(format!(
                    "cannot reshape {:?} to {:?}",
                    old, shape
                )));
            }
            prod *= old[oi];
            g += meta.dim_groups[oi];
            oi += 1;
        }
        if prod != e {
            return Err(TensorError::Shape(format!(
                "cannot reshape {old:?} to {shape:?}: {e} is not a product of consecutive dims"
            )));
        }
        groups.push(g);
    }
    while oi < old.len() && old[oi] == 1 {
        if let Some(last) = groups.last_mut() {
            *last += meta.dim_groups[oi];
        }
        oi += 1;
    }
    if oi != old.len() {
        return Err(TensorError::Shape(format!(
            "cannot reshape {:?} to {:?}: dims left over",
            old, shape
        )));
    }

    let mut out_meta = meta.clone();
    out_meta.logical_dims = shape.to_vec();
    out_meta.dim_groups = groups;
    CipherTensor::new(input.handles.clone(), out_meta)
}
