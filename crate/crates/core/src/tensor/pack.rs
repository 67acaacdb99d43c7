use super::{CipherTensor, CipherTensorMeta, PlainTensor, TensorError};
use crate::hisa::HisaBackend;
use crate::{pow2, Rat};
use num::Zero;

/// Encrypt a tensor into the slot layout `meta` describes. Slots not
/// claimed by a logical element are zero.
pub fn pack<B: HisaBackend>(
    backend: &mut B,
    tensor: &PlainTensor,
    meta: &CipherTensorMeta,
) -> Result<CipherTensor, TensorError> {
    meta.validate()?;
    if tensor.shape() != meta.logical_dims {
        return Err(TensorError::Shape(format!(
            "tensor {:?} does not match layout {:?}",
            tensor.shape(),
            meta.logical_dims
        )));
    }
    let slots = backend.config().slot_count;
    if meta.slot_span() > slots {
        return Err(TensorError::CipherCapacity {
            need: meta.slot_span(),
            slots,
        });
    }
    let mut per_cipher = vec![vec![Rat::zero(); slots]; meta.cipher_count()];
    for (idx, cipher, slot) in meta.sites() {
        per_cipher[cipher][slot] = tensor.get(&idx).clone();
    }
    let mut handles = Vec::with_capacity(per_cipher.len());
    for values in &per_cipher {
        let p = backend.encode(values, meta.scale_log)?;
        handles.push(backend.encrypt(p)?);
        backend.free(p)?;
    }
    CipherTensor::new(handles, meta.clone())
}

/// Decrypt an encrypted tensor back to its logical values. Reads
/// `decode * 2^(cipher_scale - value_scale)` so a tensor whose scales
/// have drifted apart still unpacks to its true values. The ciphertexts
/// stay live.
pub fn unpack<B: HisaBackend>(
    backend: &mut B,
    tensor: &CipherTensor,
) -> Result<PlainTensor, TensorError> {
    let meta = &tensor.meta;
    let adjust = pow2(meta.cipher_scale_log - meta.scale_log);
    let mut per_cipher = Vec::with_capacity(tensor.handles.len());
    for &c in &tensor.handles {
        let p = backend.decrypt(c)?;
        let values = backend.decode(p)?;
        backend.free(p)?;
        per_cipher.push(values);
    }
    let mut out = PlainTensor::zeros(meta.logical_dims.clone());
    for (idx, cipher, slot) in meta.sites() {
        out.set(&idx, &per_cipher[cipher][slot] * &adjust);
    }
    Ok(out)
}
