use std::collections::BTreeSet;

use super::*;
use crate::analysis::{op_counts, rotation_analyze};
use crate::sim::{SimBackend, SimConfig};
use crate::tensor::{
    avg_pool_plain, conv2d_plain, matmul_plain, pack, poly_act_plain, unpack, CipherTensorMeta,
    PlainTensor, TensorError,
};
use crate::{Padding, Rat};

fn be(log_n: u32) -> SimBackend {
    SimBackend::new(SimConfig::exact(log_n, 600))
        .unwrap()
        .with_scales(30, 16)
}

/// Deterministic dyadic fill: multiples of 1/16, sign-alternating.
fn dyadic(shape: Vec<usize>) -> PlainTensor {
    let n: usize = shape.iter().product();
    let vals: Vec<f64> = (0..n)
        .map(|i| ((i * 7 % 23) as f64 - 11.0) / 16.0)
        .collect();
    PlainTensor::from_f64(shape, &vals).unwrap()
}

fn assert_exact(got: &PlainTensor, want: &PlainTensor) {
    assert_eq!(got.shape(), want.shape());
    for (i, (g, w)) in got.data().iter().zip(want.data()).enumerate() {
        assert_eq!(g, w, "slot {i} diverged");
    }
}

fn assert_close(got: &PlainTensor, want: &PlainTensor, tol_log: i32) {
    assert_eq!(got.shape(), want.shape());
    let tol = crate::pow2(tol_log);
    for (i, (g, w)) in got.data().iter().zip(want.data()).enumerate() {
        let d = if g > w { g - w } else { w - g };
        assert!(d <= tol, "slot {i} off by {}", crate::rat_to_f64(&d));
    }
}

#[test]
fn hw_valid_conv_matches_reference() {
    let mut b = be(8);
    let input = dyadic(vec![1, 2, 4, 4]);
    let weights = dyadic(vec![3, 3, 2, 3]);
    let meta = CipherTensorMeta::hw([1, 2, 4, 4], 5, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let out = conv2d_hw(&mut b, &ct, &weights, Padding::Valid).unwrap();
    assert!(out.meta.has_invalid_slots);
    assert_eq!(out.meta.inner_strides, vec![5, 1]);
    let got = unpack(&mut b, &out).unwrap();
    assert_exact(
        &got,
        &conv2d_plain(&input, &weights, Padding::Valid).unwrap(),
    );

    // Tap offsets dy*5 + dx for a 3x3 filter, zero offset reuses the raw
    // cipher.
    let rot: BTreeSet<u64> = [1, 2, 5, 6, 7, 10, 11, 12].into();
    assert_eq!(rotation_analyze(b.trace()), rot);
    let counts = op_counts(b.trace());
    assert_eq!(counts["rotLeft"], 8 * 2);
    assert_eq!(counts["mulScalar"], 3 * 3 * 2 * 3);
    assert_eq!(counts["divScalar"], 3);
    assert!(!counts.contains_key("mulPlain"));
}

#[test]
fn hw_same_conv_masks_invalid_slots() {
    // A valid convolution leaves partial sums in the dead slots and
    // flags the tensor; the following padded convolution must scrub
    // them before shifting content outward.
    let mut b = be(8);
    let input = dyadic(vec![1, 1, 6, 6]);
    let w1 = dyadic(vec![3, 3, 1, 2]);
    let w2 = dyadic(vec![3, 3, 2, 2]);
    let meta = CipherTensorMeta::hw([1, 1, 6, 6], 6, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let mid = conv2d_hw(&mut b, &ct, &w1, Padding::Valid).unwrap();
    let before = op_counts(b.trace());
    let out = conv2d_hw(&mut b, &mid, &w2, Padding::Same).unwrap();
    let after = op_counts(b.trace());

    // One mask multiply per input cipher, and nothing else plaintext.
    assert_eq!(
        after.get("mulPlain").copied().unwrap_or(0) - before.get("mulPlain").copied().unwrap_or(0),
        2
    );
    let got = unpack(&mut b, &out).unwrap();
    let mid_plain = conv2d_plain(&input, &w1, Padding::Valid).unwrap();
    assert_exact(&got, &conv2d_plain(&mid_plain, &w2, Padding::Same).unwrap());
}

#[test]
fn hw_same_conv_needs_margin() {
    let mut b = be(8);
    let input = dyadic(vec![1, 1, 6, 6]);
    let weights = dyadic(vec![3, 3, 1, 1]);
    // Row stride 6 leaves no room for horizontal padding.
    let meta = CipherTensorMeta::hw([1, 1, 6, 6], 6, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    match conv2d_hw(&mut b, &ct, &weights, Padding::Same) {
        Err(TensorError::InsufficientPadding { .. }) => {}
        other => panic!("expected a padding error, got {other:?}"),
    }
    // Stride 8 reserves one column each side and the tensor fits.
    let meta = CipherTensorMeta::hw([1, 1, 6, 6], 8, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let out = conv2d_hw(&mut b, &ct, &weights, Padding::Same).unwrap();
    let got = unpack(&mut b, &out).unwrap();
    assert_exact(
        &got,
        &conv2d_plain(&input, &weights, Padding::Same).unwrap(),
    );
}

#[test]
fn chw_conv_matches_reference() {
    let mut b = be(11);
    let input = dyadic(vec![1, 4, 4, 4]);
    let weights = dyadic(vec![3, 3, 4, 4]);
    let meta = CipherTensorMeta::chw([1, 4, 4, 4], 64, 8, 1, 30, 1024).unwrap();
    assert!(conv2d_chw_fits(&meta, 3, 3, 4, Padding::Same, 1024));
    let ct = pack(&mut b, &input, &meta).unwrap();
    let out = conv2d_chw(&mut b, &ct, &weights, Padding::Same).unwrap();
    let got = unpack(&mut b, &out).unwrap();
    assert_exact(
        &got,
        &conv2d_plain(&input, &weights, Padding::Same).unwrap(),
    );
}

#[test]
fn chw_conv_replicates_and_reduces_in_log_steps() {
    // Eight channels in one block: replication doubles the block three
    // times, the channel sum folds back in three rotations.
    let mut b = be(11);
    let input = dyadic(vec![1, 8, 4, 4]);
    let weights = dyadic(vec![1, 1, 8, 8]);
    let meta = CipherTensorMeta::chw([1, 8, 4, 4], 16, 4, 1, 30, 1024).unwrap();
    assert_eq!(meta.cipher_count(), 1);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let out = conv2d_chw(&mut b, &ct, &weights, Padding::Valid).unwrap();
    let counts = op_counts(b.trace());
    assert_eq!(counts["rotRight"], 3);
    assert_eq!(counts["rotLeft"], 3);
    assert_eq!(counts["mulPlain"], 1);
    assert_eq!(counts["divScalar"], 1);
    let got = unpack(&mut b, &out).unwrap();
    assert_exact(
        &got,
        &conv2d_plain(&input, &weights, Padding::Valid).unwrap(),
    );
}

#[test]
fn chw_conv_chain_masks_garbage() {
    // The first convolution leaves reduction garbage in its replicas;
    // the second must mask before replicating again.
    let mut b = be(11);
    let input = dyadic(vec![1, 4, 6, 6]);
    let w1 = dyadic(vec![3, 3, 4, 4]);
    let w2 = dyadic(vec![3, 3, 4, 4]);
    let meta = CipherTensorMeta::chw([1, 4, 6, 6], 64, 8, 1, 30, 1024).unwrap();
    let ct = pack(&mut b, &input, &meta).unwrap();
    let mid = conv2d_chw(&mut b, &ct, &w1, Padding::Valid).unwrap();
    assert!(mid.meta.has_invalid_slots);
    let out = conv2d_chw(&mut b, &mid, &w2, Padding::Same).unwrap();
    let got = unpack(&mut b, &out).unwrap();
    let mid_plain = conv2d_plain(&input, &w1, Padding::Valid).unwrap();
    assert_exact(&got, &conv2d_plain(&mid_plain, &w2, Padding::Same).unwrap());
}

#[test]
fn matmul_matches_reference_at_every_replica_count() {
    let input = dyadic(vec![1, 8]);
    let weights = dyadic(vec![8, 8]);
    let want = matmul_plain(&input, &weights).unwrap();
    let mut plain_mults = Vec::new();
    for r in [1usize, 2, 4] {
        let mut b = be(7);
        let meta = CipherTensorMeta::flat(1, 8, 30);
        let ct = pack(&mut b, &input, &meta).unwrap();
        let out = matmul(&mut b, &ct, &weights, Some(r)).unwrap();
        let got = unpack(&mut b, &out).unwrap();
        assert_exact(&got, &want);
        let counts = op_counts(b.trace());
        plain_mults.push(counts["mulPlain"]);
    }
    // Freshly packed input needs no mask, so every plaintext multiply
    // carries weights: one per output cipher, halved by doubling r.
    assert_eq!(plain_mults, vec![8, 4, 2]);
}

#[test]
fn matmul_contracts_across_ciphers() {
    // A reshaped convolution output spans several ciphertexts; every
    // source slot is addressed where it actually lives.
    let mut b = be(8);
    let input = dyadic(vec![1, 2, 2, 2]);
    let weights = dyadic(vec![8, 4]);
    let meta = CipherTensorMeta::hw([1, 2, 2, 2], 3, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let flat = reshape(&ct, &[1, 8]).unwrap();
    assert_eq!(flat.meta.cipher_count(), 2);
    let out = matmul(&mut b, &flat, &weights, None).unwrap();
    let got = unpack(&mut b, &out).unwrap();
    let flat_plain = input.reshape(vec![1, 8]).unwrap();
    assert_exact(&got, &matmul_plain(&flat_plain, &weights).unwrap());
}

#[test]
fn matmul_masks_replication_of_flagged_input() {
    let mut b = be(8);
    let input = dyadic(vec![1, 1, 2, 4]);
    let w1 = dyadic(vec![1, 3, 1, 1]);
    let weights = dyadic(vec![4, 4]);
    let meta = CipherTensorMeta::hw([1, 1, 2, 4], 4, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let mid = conv2d_hw(&mut b, &ct, &w1, Padding::Valid).unwrap();
    let flat = reshape(&mid, &[1, 4]).unwrap();
    let before = op_counts(b.trace());
    let out = matmul(&mut b, &flat, &weights, Some(2)).unwrap();
    let after = op_counts(b.trace());
    // Two weight plaintexts plus one scrub of the flagged input before
    // it is replicated.
    assert_eq!(
        after.get("mulPlain").copied().unwrap_or(0) - before.get("mulPlain").copied().unwrap_or(0),
        3
    );
    let got = unpack(&mut b, &out).unwrap();
    let mid_plain = conv2d_plain(&input, &w1, Padding::Valid).unwrap();
    let flat_plain = mid_plain.reshape(vec![1, 4]).unwrap();
    assert_exact(&got, &matmul_plain(&flat_plain, &weights).unwrap());
}

#[test]
fn pool_divisor_shifts_cipher_scale() {
    let mut b = be(6);
    let input = PlainTensor::from_f64(vec![1, 1, 2, 2], &[1.0, 3.0, 5.0, 7.0]).unwrap();
    let meta = CipherTensorMeta::hw([1, 1, 2, 2], 2, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let out = avg_pool(&mut b, &ct, 2, 2, PoolPath::Divisor).unwrap();
    assert_eq!(out.meta.scale_divergence(), 2);
    assert_eq!(out.meta.scale_log, 30);
    let got = unpack(&mut b, &out).unwrap();
    assert_exact(&got, &avg_pool_plain(&input, 2, 2).unwrap());
}

#[test]
fn pool_divisor_rejects_fractional_window() {
    let mut b = be(7);
    let input = dyadic(vec![1, 1, 6, 6]);
    let meta = CipherTensorMeta::hw([1, 1, 6, 6], 6, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    assert!(avg_pool(&mut b, &ct, 3, 3, PoolPath::Divisor).is_err());
}

#[test]
fn pool_reciprocal_keeps_scales_aligned() {
    let mut b = be(7);
    let input = dyadic(vec![1, 1, 6, 6]);
    let meta = CipherTensorMeta::hw([1, 1, 6, 6], 6, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let out = avg_pool(&mut b, &ct, 3, 3, PoolPath::Reciprocal).unwrap();
    assert_eq!(out.meta.scale_divergence(), 0);
    let got = unpack(&mut b, &out).unwrap();
    // 1/9 is quantised onto the plaintext grid, so the window average
    // carries that rounding.
    assert_close(&got, &avg_pool_plain(&input, 3, 3).unwrap(), -10);
}

#[test]
fn activation_is_one_multiply_one_rescale() {
    let mut b = be(6);
    let input = PlainTensor::from_f64(vec![1, 4], &[0.75, -0.5, 0.25, 1.0]).unwrap();
    let meta = CipherTensorMeta::flat(1, 4, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let a = Rat::new(1.into(), 4.into());
    let c = Rat::new(1.into(), 2.into());
    let out = poly_activation(&mut b, &ct, &a, &c).unwrap();
    let counts = op_counts(b.trace());
    assert_eq!(counts["mul"], 1);
    assert_eq!(counts["divScalar"], 1);
    let got = unpack(&mut b, &out).unwrap();
    assert_exact(&got, &poly_act_plain(&input, &a, &c));
}

#[test]
fn activation_rejects_diverged_scales() {
    let mut b = be(6);
    let input = PlainTensor::from_f64(vec![1, 1, 2, 2], &[1.0, 3.0, 5.0, 7.0]).unwrap();
    let meta = CipherTensorMeta::hw([1, 1, 2, 2], 2, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let pooled = avg_pool(&mut b, &ct, 2, 2, PoolPath::Divisor).unwrap();
    let a = Rat::new(1.into(), 4.into());
    let c = Rat::new(1.into(), 2.into());
    match poly_activation(&mut b, &pooled, &a, &c) {
        Err(TensorError::ScaleDivergence {
            value_scale: 30,
            cipher_scale: 28,
        }) => {}
        other => panic!("expected diverged scales, got {other:?}"),
    }
}

#[test]
fn convert_round_trips_between_families() {
    let mut b = be(11);
    let input = dyadic(vec![1, 4, 4, 4]);
    let hw = CipherTensorMeta::hw([1, 4, 4, 4], 5, 1, 30);
    let chw = CipherTensorMeta::chw([1, 4, 4, 4], 32, 5, 1, 30, 1024).unwrap();
    let ct = pack(&mut b, &input, &hw).unwrap();
    let mid = convert_layout(&mut b, &ct, &chw).unwrap();
    assert!(!mid.meta.has_invalid_slots);
    let back = convert_layout(&mut b, &mid, &hw).unwrap();
    for t in [&mid, &back] {
        let got = unpack(&mut b, t).unwrap();
        assert_exact(&got, &input);
    }
}

#[test]
fn convert_scrubs_garbage_for_unmasked_consumers() {
    // The converted tensor is unflagged, so the next convolution skips
    // its mask; any surviving garbage would leak into the reduction.
    let mut b = be(11);
    let input = dyadic(vec![1, 2, 6, 6]);
    let w1 = dyadic(vec![3, 3, 2, 4]);
    let w2 = dyadic(vec![1, 1, 4, 4]);
    let hw = CipherTensorMeta::hw([1, 2, 6, 6], 6, 1, 30);
    let ct = pack(&mut b, &input, &hw).unwrap();
    let mid = conv2d_hw(&mut b, &ct, &w1, Padding::Valid).unwrap();
    assert!(mid.meta.has_invalid_slots);
    let chw = CipherTensorMeta::chw([1, 4, 4, 4], 32, 6, 1, 30, 1024).unwrap();
    let conv = convert_layout(&mut b, &mid, &chw).unwrap();
    assert!(!conv.meta.has_invalid_slots);
    let out = conv2d_chw(&mut b, &conv, &w2, Padding::Valid).unwrap();
    let got = unpack(&mut b, &out).unwrap();
    let mid_plain = conv2d_plain(&input, &w1, Padding::Valid).unwrap();
    assert_exact(
        &got,
        &conv2d_plain(&mid_plain, &w2, Padding::Valid).unwrap(),
    );
}

#[test]
fn convert_to_same_layout_is_free() {
    let mut b = be(8);
    let input = dyadic(vec![1, 2, 4, 4]);
    let meta = CipherTensorMeta::hw([1, 2, 4, 4], 5, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let len = b.trace().entries().len();
    let out = convert_layout(&mut b, &ct, &meta).unwrap();
    assert_eq!(b.trace().entries().len(), len);
    assert_eq!(out.handles, ct.handles);
}

#[test]
fn reshape_flattens_without_instructions() {
    let mut b = be(8);
    let input = dyadic(vec![1, 2, 4, 4]);
    let meta = CipherTensorMeta::hw([1, 2, 4, 4], 5, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    let len = b.trace().entries().len();
    let flat = reshape(&ct, &[1, 32]).unwrap();
    assert_eq!(b.trace().entries().len(), len);
    assert_eq!(flat.handles, ct.handles);
    assert_eq!(flat.meta.logical_dims, vec![1, 32]);
    let got = unpack(&mut b, &flat).unwrap();
    assert_exact(&got, &input.reshape(vec![1, 32]).unwrap());
}

#[test]
fn reshape_cannot_split_a_packed_dimension() {
    let mut b = be(8);
    let input = dyadic(vec![1, 2, 4, 4]);
    let meta = CipherTensorMeta::hw([1, 2, 4, 4], 5, 1, 30);
    let ct = pack(&mut b, &input, &meta).unwrap();
    // Merging whole dimensions is free, halving one would need data
    // movement.
    assert!(reshape(&ct, &[1, 2, 16]).is_ok());
    assert!(reshape(&ct, &[1, 2, 2, 8]).is_err());
    assert!(reshape(&ct, &[1, 33]).is_err());
}
