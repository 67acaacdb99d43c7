//! Fully connected layer over a rank-2 tensor. Each input cipher is
//! replicated r times at a power-of-two block stride; replica j of
//! output cipher blk is weighted for column blk*r + j, one plaintext
//! multiply per (input cipher, output cipher). A rotation fold then
//! collapses every replica span onto its base slot, so raising r
//! trades plaintext multiplies for replication rotations.

use num::Zero;

use super::accumulate;
use crate::hisa::{CtHandle, HisaBackend};
use crate::tensor::meta::prev_pow2;
use crate::tensor::{CipherTensor, CipherTensorMeta, PlainTensor, TensorError};
use crate::Rat;
use std::collections::BTreeMap;

fn replica_span(meta: &CipherTensorMeta) -> usize {
    meta.slot_span().next_power_of_two()
}

fn max_replicas(meta: &CipherTensorMeta, m: usize, slots: usize) -> usize {
    prev_pow2(slots / replica_span(meta)).min(m.next_power_of_two())
}

/// Whether one replica of the input fits a ciphertext; the output
/// always fits, spilling columns over extra ciphertexts if needed.
pub fn matmul_fits(meta: &CipherTensorMeta, slots: usize) -> bool {
    replica_span(meta) <= slots
}

/// `weights` has shape `[K, M]`. `replicas` overrides the replica
/// count (a power of two); `None` takes the largest that fits.
pub fn matmul<B: HisaBackend>(
    backend: &mut B,
    input: &CipherTensor,
    weights: &PlainTensor,
    replicas: Option<usize>,
) -> Result<CipherTensor, TensorError> {
    let meta = &input.meta;
    if meta.logical_dims.len() != 2 {
        return Err(TensorError::Shape(format!(
            "matmul expects a rank-2 tensor, got dims {:?}",
            meta.logical_dims
        )));
    }
    let (bsz, k) = (meta.logical_dims[0], meta.logical_dims[1]);
    if meta.dim_groups[0] > meta.outer_dims.len() {
        return Err(TensorError::Layout(
            "matmul needs the batch dimension fully outer".into(),
        ));
    }
    let fshape = weights.shape();
    let (wk, m) = (fshape[0], fshape[1]);
    if wk != k {
        return Err(TensorError::Shape(format!(
            "weights expect {wk} inputs, tensor has {k}"
        )));
    }
    let slots = backend.config().slot_count;
    let span = replica_span(meta);
    if span > slots {
        return Err(TensorError::CipherCapacity { need: span, slots });
    }
    let r = match replicas {
        Some(r) => {
            if !r.is_power_of_two() || r * span > slots {
                return Err(TensorError::Layout(format!(
                    "replica count {r} is not a power of two fitting {slots} slots"
                )));
            }
            r
        }
        None => max_replicas(meta, m, slots),
    };
    let nb = m.div_ceil(r);
    let p = backend.config().plain_scale_log;

    // ki -> (cipher, slot), grouped per batch.
    let mut per_batch: Vec<BTreeMap<usize, Vec<(usize, usize)>>> = vec![BTreeMap::new(); bsz];
    for (idx, cipher, slot) in meta.sites() {
        per_batch[idx[0]]
            .entry(cipher)
            .or_default()
            .push((idx[1], slot));
    }

    let mut out_handles = Vec::with_capacity(bsz);
    for ciphers in &per_batch {
        let mut reps: BTreeMap<usize, (CtHandle, bool)> = BTreeMap::new();
        for (&cipher, entries) in ciphers {
            let raw = input.handles[cipher];
            // Replication drags content above the replica span onto
            // weighted slots, so garbage there must be scrubbed first.
            let (clean, clean_owned) = if meta.has_invalid_slots && r > 1 {
                let mut ones = vec![Rat::zero(); slots];
                for &(_, slot) in entries {
                    ones[slot] = Rat::from_integer(1.into());
                }
                let mask = backend.encode(&ones, p)?;
                let c = backend.mul_plain(raw, mask)?;
                backend.div_scalar_assign(c, 1i64 << p)?;
                backend.free(mask)?;
                (c, true)
            } else {
                (raw, false)
            };
            let rep = if r == 1 {
                (clean, clean_owned)
            } else {
                let shifted = backend.rot_right(clean, span as u64)?;
                let rp = backend.add(clean, shifted)?;
                backend.free(shifted)?;
                if clean_owned {
                    backend.free(clean)?;
                }
                let mut copies = 2;
                while copies < r {
                    let s = backend.rot_right(rp, (span * copies) as u64)?;
                    backend.add_assign(rp, s)?;
                    backend.free(s)?;
                    copies *= 2;
                }
                (rp, true)
            };
            reps.insert(cipher, rep);
        }
        for blk in 0..nb {
            let mut bacc: Option<CtHandle> = None;
            for (&cipher, entries) in ciphers {
                let mut values = vec![Rat::zero(); slots];
                for j in 0..r {
                    let col = blk * r + j;
                    if col >= m {
                        continue;
                    }
                    for &(ki, slot) in entries {
                        values[j * span + slot] = weights.get(&[ki, col]).clone();
                    }
                }
                let pt = backend.encode(&values, p)?;
                let term = backend.mul_plain(reps[&cipher].0, pt)?;
                backend.free(pt)?;
                accumulate(backend, &mut bacc, term)?;
            }
            let a = bacc.expect("at least one input cipher");
            let mut step = span / 2;
            while step >= 1 {
                let rot = backend.rot_left(a, step as u64)?;
                backend.add_assign(a, rot)?;
                backend.free(rot)?;
                step /= 2;
            }
            backend.div_scalar_assign(a, 1i64 << p)?;
            out_handles.push(a);
        }
        for (_, (h, owned)) in reps {
            if owned {
                backend.free(h)?;
            }
        }
    }

    let out_meta = CipherTensorMeta {
        outer_dims: vec![bsz, nb],
        inner_dims: vec![r],
        inner_strides: vec![span],
        logical_dims: vec![bsz, m],
        dim_groups: vec![1, 2],
        scale_log: meta.scale_log,
        cipher_scale_log: meta.cipher_scale_log,
        has_invalid_slots: true,
    };
    CipherTensor::new(out_handles, out_meta)
}
