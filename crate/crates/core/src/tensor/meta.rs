use super::TensorError;
use crate::hisa::CtHandle;
use serde::{Deserialize, Serialize};

/// Zero-padding mode of a convolution.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

/// The two packing families. `Hw` gives every channel its own
/// ciphertext with a 2-d strided image inside; `Chw` packs a block of
/// channels per ciphertext at a uniform channel stride.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutFamily {
    Hw,
    Chw,
}

/// Describes how a logical tensor is spread over a grid of ciphertexts
/// and over the slots inside each one.
///
/// The combined dimension list is `outer_dims ++ inner_dims`, row
/// major. Each logical dimension owns a consecutive run of combined
/// dimensions (`dim_groups[i]` of them); a logical index decomposes
/// mixed-radix over its run, last combined dimension fastest. Runs may
/// have more capacity than the logical extent; the excess is padding
/// and is never enumerated. Outer coordinates select the ciphertext,
/// inner coordinates dot with `inner_strides` to give the slot.
///
/// `scale_log` is the fixed-point scale of the *values* the tensor
/// represents; `cipher_scale_log` is the scale tag the backend has for
/// the ciphertexts. They start equal and can drift apart when a kernel
/// rescales without changing values (the gap is tracked, not lost).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CipherTensorMeta {
    pub outer_dims: Vec<usize>,
    pub inner_dims: Vec<usize>,
    pub inner_strides: Vec<usize>,
    pub logical_dims: Vec<usize>,
    pub dim_groups: Vec<usize>,
    pub scale_log: i32,
    pub cipher_scale_log: i32,
    pub has_invalid_slots: bool,
}

impl CipherTensorMeta {
    /// Single-image-per-ciphertext layout: outer `[B, C]`, inner
    /// `[H, W]` at the given strides.
    pub fn hw(shape: [usize; 4], hs: usize, ws: usize, scale_log: i32) -> Self {
        let [b, c, h, w] = shape;
        CipherTensorMeta {
            outer_dims: vec![b, c],
            inner_dims: vec![h, w],
            inner_strides: vec![hs, ws],
            logical_dims: vec![b, c, h, w],
            dim_groups: vec![1, 1, 1, 1],
            scale_log,
            cipher_scale_log: scale_log,
            has_invalid_slots: false,
        }
    }

    /// Channel-blocked layout: outer `[B, G]`, inner `[Cb, H, W]` with
    /// channel stride `cs`. `Cb` is the largest power of two that fits
    /// the slot budget, capped at the channel count rounded up to a
    /// power of two.
    pub fn chw(
        shape: [usize; 4],
        cs: usize,
        hs: usize,
        ws: usize,
        scale_log: i32,
        slot_count: usize,
    ) -> Result<Self, TensorError> {
        let [b, c, h, w] = shape;
        if cs > slot_count {
            return Err(TensorError::CipherCapacity {
                need: cs,
                slots: slot_count,
            });
        }
        let max_fit = prev_pow2(slot_count / cs);
        let cb = max_fit.min(c.next_power_of_two());
        let g = c.div_ceil(cb);
        Ok(CipherTensorMeta {
            outer_dims: vec![b, g],
            inner_dims: vec![cb, h, w],
            inner_strides: vec![cs, hs, ws],
            logical_dims: vec![b, c, h, w],
            dim_groups: vec![1, 2, 1, 1],
            scale_log,
            cipher_scale_log: scale_log,
            has_invalid_slots: false,
        })
    }

    /// Rank-2 layout: one cipher per batch row, elements at stride 1.
    pub fn flat(b: usize, k: usize, scale_log: i32) -> Self {
        CipherTensorMeta {
            outer_dims: vec![b],
            inner_dims: vec![k],
            inner_strides: vec![1],
            logical_dims: vec![b, k],
            dim_groups: vec![1, 1],
            scale_log,
            cipher_scale_log: scale_log,
            has_invalid_slots: false,
        }
    }

    pub fn family(&self) -> LayoutFamily {
        if self.logical_dims.len() == 4 && self.dim_groups == [1, 2, 1, 1] {
            LayoutFamily::Chw
        } else {
            LayoutFamily::Hw
        }
    }

    /// The gap between value scale and cipher scale, in bits. Zero for
    /// freshly packed tensors.
    pub fn scale_divergence(&self) -> i32 {
        self.scale_log - self.cipher_scale_log
    }

    pub fn cipher_count(&self) -> usize {
        self.outer_dims.iter().product()
    }

    /// One past the highest slot any inner coordinate can address.
    pub fn slot_span(&self) -> usize {
        self.inner_dims
            .iter()
            .zip(&self.inner_strides)
            .map(|(&d, &s)| (d - 1) * s)
            .sum::<usize>()
            + 1
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let combined = self.combined_dims();
        if self.dim_groups.len() != self.logical_dims.len() {
            return Err(TensorError::Layout(format!(
                "{} dim groups for {} logical dims",
                self.dim_groups.len(),
                self.logical_dims.len()
            )));
        }
        if self.dim_groups.iter().sum::<usize>() != combined.len() {
            return Err(TensorError::Layout(
                "dim groups do not cover the combined dimensions".into(),
            ));
        }
        if self.inner_dims.len() != self.inner_strides.len() {
            return Err(TensorError::Layout(
                "stride per inner dimension required".into(),
            ));
        }
        let mut pos = 0;
        for (d, &g) in self.dim_groups.iter().enumerate() {
            if g == 0 {
                return Err(TensorError::Layout(format!("logical dim {d} owns no dims")));
            }
            let cap: usize = combined[pos..pos + g].iter().product();
            if cap < self.logical_dims[d] {
                return Err(TensorError::Layout(format!(
                    "logical dim {d} of extent {} exceeds its {cap}-element run",
                    self.logical_dims[d]
                )));
            }
            pos += g;
        }
        Ok(())
    }

    fn combined_dims(&self) -> Vec<usize> {
        let mut v = self.outer_dims.clone();
        v.extend_from_slice(&self.inner_dims);
        v
    }

    /// Ciphertext index and slot of one logical element.
    pub fn locate(&self, idx: &[usize]) -> (usize, usize) {
        let combined = self.combined_dims();
        let mut coord = vec![0usize; combined.len()];
        let mut pos = 0;
        for (d, &x) in idx.iter().enumerate() {
            let g = self.dim_groups[d];
            let mut rem = x;
            for j in (0..g).rev() {
                let e = combined[pos + j];
                coord[pos + j] = rem % e;
                rem /= e;
            }
            debug_assert_eq!(rem, 0, "logical index outside its run");
            pos += g;
        }
        let no = self.outer_dims.len();
        let mut cipher = 0;
        for (j, &e) in self.outer_dims.iter().enumerate() {
            cipher = cipher * e + coord[j];
        }
        let mut slot = 0;
        for j in 0..self.inner_dims.len() {
            slot += coord[no + j] * self.inner_strides[j];
        }
        (cipher, slot)
    }

    /// Every logical element as `(logical index, ciphertext, slot)`,
    /// logical row-major order.
    pub fn sites(&self) -> Vec<(Vec<usize>, usize, usize)> {
        enumerate_indices(&self.logical_dims)
            .into_iter()
            .map(|idx| {
                let (cipher, slot) = self.locate(&idx);
                (idx, cipher, slot)
            })
            .collect()
    }
}

/// Largest power of two at most `x`; zero stays zero.
pub(crate) fn prev_pow2(x: usize) -> usize {
    if x == 0 {
        0
    } else {
        1 << x.ilog2()
    }
}

/// Row-major enumeration of all multi-indices of a shape.
pub(crate) fn enumerate_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let count: usize = dims.iter().product();
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..count {
        out.push(idx.clone());
        for d in (0..dims.len()).rev() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// An encrypted tensor: one ciphertext handle per outer grid cell, in
/// row-major outer order, plus the metadata to address them.
#[derive(Clone, Debug)]
pub struct CipherTensor {
    pub handles: Vec<CtHandle>,
    pub meta: CipherTensorMeta,
}

impl CipherTensor {
    pub fn new(handles: Vec<CtHandle>, meta: CipherTensorMeta) -> Result<Self, TensorError> {
        meta.validate()?;
        if handles.len() != meta.cipher_count() {
            return Err(TensorError::Layout(format!(
                "{} handles for a {}-ciphertext grid",
                handles.len(),
                meta.cipher_count()
            )));
        }
        Ok(CipherTensor { handles, meta })
    }

    pub fn shape(&self) -> &[usize] {
        &self.meta.logical_dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hw_addresses_with_row_stride() {
        let meta = CipherTensorMeta::hw([1, 2, 2, 2], 4, 1, 10);
        assert_eq!(meta.cipher_count(), 2);
        assert_eq!(meta.locate(&[0, 1, 0, 0]), (1, 0));
        assert_eq!(meta.locate(&[0, 0, 1, 1]), (0, 5));
        assert_eq!(meta.slot_span(), 6);
        assert_eq!(meta.family(), LayoutFamily::Hw);
    }

    #[test]
    fn chw_splits_channels_over_group_and_block() {
        let meta = CipherTensorMeta::chw([1, 6, 2, 2], 8, 2, 1, 10, 32).unwrap();
        // 32 slots / cs 8 allows 4 channels per ciphertext.
        assert_eq!(meta.inner_dims, vec![4, 2, 2]);
        assert_eq!(meta.outer_dims, vec![1, 2]);
        assert_eq!(meta.family(), LayoutFamily::Chw);
        // Channel 5 is block 1, position 1; row 1, col 0.
        assert_eq!(meta.locate(&[0, 5, 1, 0]), (1, 8 + 2));
    }

    #[test]
    fn chw_rejects_oversized_channel_stride() {
        assert!(matches!(
            CipherTensorMeta::chw([1, 2, 4, 4], 64, 4, 1, 10, 32),
            Err(TensorError::CipherCapacity { .. })
        ));
    }

    #[test]
    fn group_capacity_is_validated() {
        let mut meta = CipherTensorMeta::hw([1, 2, 2, 2], 4, 1, 10);
        meta.logical_dims[1] = 3;
        assert!(meta.validate().is_err());
    }
}
