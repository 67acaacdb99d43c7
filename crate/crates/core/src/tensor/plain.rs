use super::{Padding, TensorError};
use crate::{rat_from_f64, Rat};
use num::Zero;

/// Dense row-major tensor of exact rationals. Serves as the packing
/// source, the unpacking target, and the reference arithmetic that the
/// encrypted kernels are tested against.
#[derive(Clone, PartialEq, Debug)]
pub struct PlainTensor {
    shape: Vec<usize>,
    data: Vec<Rat>,
}

impl PlainTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Rat>) -> Result<Self, TensorError> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(TensorError::Shape(format!(
                "shape {shape:?} holds {len} elements, got {}",
                data.len()
            )));
        }
        Ok(PlainTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        PlainTensor {
            shape,
            data: vec![Rat::zero(); len],
        }
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape, values.iter().map(|&v| rat_from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Rat] {
        &self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &x) in idx.iter().enumerate() {
            debug_assert!(x < self.shape[i]);
            off = off * self.shape[i] + x;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> &Rat {
        &self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: Rat) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data.clone())
    }

    pub fn max_abs(&self) -> Rat {
        self.data
            .iter()
            .map(|v| if v < &Rat::zero() { -v } else { v.clone() })
            .max()
            .unwrap_or_else(Rat::zero)
    }
}

/// Spatial extents of a stride-1 convolution.
pub fn conv_output_hw(
    h: usize,
    w: usize,
    fh: usize,
    fw: usize,
    padding: Padding,
) -> (usize, usize) {
    match padding {
        Padding::Valid => (h + 1 - fh, w + 1 - fw),
        Padding::Same => (h, w),
    }
}

/// Reference convolution. Input `[B, C, H, W]`, weights
/// `[FH, FW, IC, OC]`, stride 1; `Same` zero-pads by `floor(F/2)` on
/// each side, which keeps the spatial extent for odd filters.
pub fn conv2d_plain(
    input: &PlainTensor,
    weights: &PlainTensor,
    padding: Padding,
) -> Result<PlainTensor, TensorError> {
    let [b, c, h, w]: [usize; 4] = input
        .shape()
        .try_into()
        .map_err(|_| TensorError::Shape("convolution input must be rank 4".into()))?;
    let [fh, fw, ic, oc]: [usize; 4] = weights
        .shape()
        .try_into()
        .map_err(|_| TensorError::Shape("convolution weights must be rank 4".into()))?;
    if ic != c {
        return Err(TensorError::Shape(format!(
            "weights expect {ic} input channels, tensor has {c}"
        )));
    }
    let (oh, ow) = conv_output_hw(h, w, fh, fw, padding);
    let (ph, pw) = match padding {
        Padding::Valid => (0usize, 0usize),
        Padding::Same => (fh / 2, fw / 2),
    };
    let mut out = PlainTensor::zeros(vec![b, oc, oh, ow]);
    for bi in 0..b {
        for o in 0..oc {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = Rat::zero();
                    for i in 0..c {
                        for dy in 0..fh {
                            for dx in 0..fw {
                                let sy = y + dy;
                                let sx = x + dx;
                                if sy < ph || sx < pw {
                                    continue;
                                }
                                let (sy, sx) = (sy - ph, sx - pw);
                                if sy >= h || sx >= w {
                                    continue;
                                }
                                acc += input.get(&[bi, i, sy, sx]) * weights.get(&[dy, dx, i, o]);
                            }
                        }
                    }
                    out.set(&[bi, o, y, x], acc);
                }
            }
        }
    }
    Ok(out)
}

/// Reference matrix product. Input `[B, K]`, weights `[K, M]`.
pub fn matmul_plain(
    input: &PlainTensor,
    weights: &PlainTensor,
) -> Result<PlainTensor, TensorError> {
    let [b, k]: [usize; 2] = input
        .shape()
        .try_into()
        .map_err(|_| TensorError::Shape("matmul input must be rank 2".into()))?;
    let [wk, m]: [usize; 2] = weights
        .shape()
        .try_into()
        .map_err(|_| TensorError::Shape("matmul weights must be rank 2".into()))?;
    if wk != k {
        return Err(TensorError::Shape(format!(
            "matmul contraction mismatch: input {k}, weights {wk}"
        )));
    }
    let mut out = PlainTensor::zeros(vec![b, m]);
    for bi in 0..b {
        for j in 0..m {
            let mut acc = Rat::zero();
            for i in 0..k {
                acc += input.get(&[bi, i]) * weights.get(&[i, j]);
            }
            out.set(&[bi, j], acc);
        }
    }
    Ok(out)
}

/// Reference average pooling with a square window; windows must land
/// fully inside the image.
pub fn avg_pool_plain(
    input: &PlainTensor,
    window: usize,
    stride: usize,
) -> Result<PlainTensor, TensorError> {
    let [b, c, h, w]: [usize; 4] = input
        .shape()
        .try_into()
        .map_err(|_| TensorError::Shape("pool input must be rank 4".into()))?;
    if window == 0 || stride == 0 || window > h || window > w {
        return Err(TensorError::Shape(format!(
            "pool window {window} stride {stride} does not fit {h}x{w}"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let n = Rat::from_integer(((window * window) as i64).into());
    let mut out = PlainTensor::zeros(vec![b, c, oh, ow]);
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = Rat::zero();
                    for dy in 0..window {
                        for dx in 0..window {
                            acc += input.get(&[bi, ci, y * stride + dy, x * stride + dx]);
                        }
                    }
                    out.set(&[bi, ci, y, x], acc / &n);
                }
            }
        }
    }
    Ok(out)
}

/// Reference degree-2 activation `a*x^2 + b*x`, elementwise.
pub fn poly_act_plain(input: &PlainTensor, a: &Rat, b: &Rat) -> PlainTensor {
    let data = input.data().iter().map(|x| a * x * x + b * x).collect();
    PlainTensor {
        shape: input.shape().to_vec(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], vals: &[i64]) -> PlainTensor {
        PlainTensor::new(
            shape.to_vec(),
            vals.iter().map(|&v| Rat::from_integer(v.into())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn valid_conv_matches_hand_computation() {
        let input = t(&[1, 1, 3, 3], &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let weights = t(&[2, 2, 1, 1], &[1, 0, 0, 1]);
        let out = conv2d_plain(&input, &weights, Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), t(&[1, 1, 2, 2], &[6, 8, 12, 14]).data());
    }

    #[test]
    fn same_conv_zero_pads() {
        let input = t(&[1, 1, 2, 2], &[1, 2, 3, 4]);
        let weights = t(&[3, 3, 1, 1], &[0, 0, 0, 0, 0, 1, 0, 0, 0]);
        // Weight right of centre: each output reads its right neighbour.
        let out = conv2d_plain(&input, &weights, Padding::Same).unwrap();
        assert_eq!(out.data(), t(&[1, 1, 2, 2], &[2, 0, 4, 0]).data());
    }

    #[test]
    fn pool_averages_windows() {
        let input = t(&[1, 1, 2, 2], &[1, 3, 5, 7]);
        let out = avg_pool_plain(&input, 2, 2).unwrap();
        assert_eq!(out.data()[0], Rat::from_integer(4.into()));
    }

    #[test]
    fn matmul_contracts() {
        let input = t(&[1, 3], &[1, 2, 3]);
        let weights = t(&[3, 2], &[1, 4, 2, 5, 3, 6]);
        let out = matmul_plain(&input, &weights).unwrap();
        assert_eq!(out.data(), t(&[1, 2], &[14, 32]).data());
    }
}
