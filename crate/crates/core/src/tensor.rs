//! Dense tensor storage and the 2-D kernels everything else builds on:
//! valid/full convolution, kernel flipping, 2x2 max pooling with argmax
//! switches, unpooling and the leaky-ReLU activation.
//!
//! Convention: the `*` in the encoder is cross-correlation (no kernel flip).
//! The decoder applies [`flip180`] to the shared filters before its full
//! convolution, which makes the encoder/decoder pair adjoint and keeps the
//! gradient algebra straightforward.
//!
//! Layouts are row-major and fixed: rank-3 activations are `[channels,
//! height, width]`, rank-4 filter banks are `[in_channels, kh, kw,
//! out_maps]`.

use rand::Rng;

use crate::error::{Error, Result};

/// Dense multi-dimensional array of `f64`, rank 1 through 4, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero-filled tensor with the given shape.
    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(
            !shape.is_empty() && shape.len() <= 4 && shape.iter().all(|&e| e >= 1),
            "tensor rank must be 1..=4 with extents >= 1, got {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Builds a tensor from raw data, validating extents and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.is_empty() || shape.len() > 4 || shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                detail: format!("rank must be 1..=4 with extents >= 1, got {shape:?}"),
            });
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                detail: format!("shape {shape:?} needs {expect} values, got {}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Tensor::from_vec",
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat offset for a `[c, i, j]` index into a rank-3 tensor.
    #[inline]
    pub fn idx3(&self, c: usize, i: usize, j: usize) -> usize {
        debug_assert_eq!(self.rank(), 3);
        (c * self.shape[1] + i) * self.shape[2] + j
    }

    /// Flat offset for a `[c, p, q, k]` index into a rank-4 filter bank.
    #[inline]
    pub fn idx4(&self, c: usize, p: usize, q: usize, k: usize) -> usize {
        debug_assert_eq!(self.rank(), 4);
        ((c * self.shape[1] + p) * self.shape[2] + q) * self.shape[3] + k
    }

    #[inline]
    pub fn get3(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx3(c, i, j)]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let idx = self.idx3(c, i, j);
        self.data[idx] = v;
    }

    #[inline]
    pub fn get4(&self, c: usize, p: usize, q: usize, k: usize) -> f64 {
        self.data[self.idx4(c, p, q, k)]
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "Tensor::zip_map",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// How unpooling picks the location inside each 2x2 block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnpoolMode {
    /// Place the value where max pooling found it (requires [`PoolIndices`]).
    Recorded,
    /// Draw the location uniformly from a seeded generator.
    Random,
}

/// Argmax switches recorded by 2x2 max pooling: for every pooled cell, the
/// row-major offset (0..=3) of the maximum inside its source block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    shape: Vec<usize>,
    offsets: Vec<u8>,
}

impl PoolIndices {
    pub fn new(shape: &[usize], offsets: Vec<u8>) -> Result<PoolIndices> {
        let expect: usize = shape.iter().product();
        if shape.len() != 3 || expect != offsets.len() {
            return Err(Error::ShapeMismatch {
                context: "PoolIndices::new",
                detail: format!("shape {shape:?} vs {} offsets", offsets.len()),
            });
        }
        if offsets.iter().any(|&o| o > 3) {
            return Err(Error::ShapeMismatch {
                context: "PoolIndices::new",
                detail: "offsets must be in 0..=3".to_string(),
            });
        }
        Ok(PoolIndices {
            shape: shape.to_vec(),
            offsets,
        })
    }

    /// Shape of the pooled tensor these switches belong to.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn offsets(&self) -> &[u8] {
        &self.offsets
    }

    #[inline]
    pub fn offset_at(&self, k: usize, i: usize, j: usize) -> u8 {
        self.offsets[(k * self.shape[1] + i) * self.shape[2] + j]
    }

    /// Draws a uniformly random switch per pooled cell.
    pub fn sample<R: Rng>(shape: &[usize], rng: &mut R) -> PoolIndices {
        let n: usize = shape.iter().product();
        PoolIndices {
            shape: shape.to_vec(),
            offsets: (0..n).map(|_| rng.random_range(0..4u8)).collect(),
        }
    }
}

fn check_conv_shapes(input: &Tensor, kernels: &Tensor, context: &'static str) -> Result<()> {
    if input.rank() != 3 {
        return Err(Error::ShapeMismatch {
            context,
            detail: format!("input must be rank 3 [c,h,w], got {:?}", input.shape()),
        });
    }
    if kernels.rank() != 4 || kernels.dim(1) != kernels.dim(2) {
        return Err(Error::ShapeMismatch {
            context,
            detail: format!(
                "kernels must be rank 4 [c,n,n,k], got {:?}",
                kernels.shape()
            ),
        });
    }
    if input.dim(0) != kernels.dim(0) {
        return Err(Error::ShapeMismatch {
            context,
            detail: format!(
                "input has {} channels but kernels expect {}",
                input.dim(0),
                kernels.dim(0)
            ),
        });
    }
    Ok(())
}

/// Valid 2-D cross-correlation summed over input channels.
///
/// `[c,h,w] x [c,n,n,k] -> [k, h-n+1, w-n+1]`; only fully overlapping
/// positions contribute.
pub fn conv2d_valid(input: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    check_conv_shapes(input, kernels, "conv2d_valid")?;
    let (c, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (n, k) = (kernels.dim(1), kernels.dim(3));
    if n > h || n > w {
        return Err(Error::ShapeMismatch {
            context: "conv2d_valid",
            detail: format!("{n}x{n} kernel exceeds {h}x{w} input"),
        });
    }
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut out = Tensor::zeros(&[k, oh, ow]);
    for kf in 0..k {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            acc += input.get3(ch, i + p, j + q) * kernels.get4(ch, p, q, kf);
                        }
                    }
                    out.data[(kf * oh + i) * ow + j] += acc;
                }
            }
        }
    }
    Ok(out)
}

/// Full 2-D cross-correlation summed over input channels.
///
/// `[c,h,w] x [c,n,n,k] -> [k, h+n-1, w+n-1]`; the input is implicitly
/// zero-padded so every partial overlap contributes. The central
/// `(h-n+1) x (w-n+1)` crop equals [`conv2d_valid`].
pub fn conv2d_full(input: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    check_conv_shapes(input, kernels, "conv2d_full")?;
    let (c, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (n, k) = (kernels.dim(1), kernels.dim(3));
    let (oh, ow) = (h + n - 1, w + n - 1);
    let mut out = Tensor::zeros(&[k, oh, ow]);
    for kf in 0..k {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for p in 0..n {
                        // source row = i + p - (n-1); skip out-of-range (zero pad)
                        let si = (i + p).checked_sub(n - 1);
                        let Some(si) = si else { continue };
                        if si >= h {
                            continue;
                        }
                        for q in 0..n {
                            let Some(sj) = (j + q).checked_sub(n - 1) else {
                                continue;
                            };
                            if sj >= w {
                                continue;
                            }
                            acc += input.get3(ch, si, sj) * kernels.get4(ch, p, q, kf);
                        }
                    }
                    out.data[(kf * oh + i) * ow + j] += acc;
                }
            }
        }
    }
    Ok(out)
}

/// Reverses every `n x n` filter slice along both spatial axes.
///
/// An involution: `flip180(flip180(k)) == k`.
pub fn flip180(kernels: &Tensor) -> Result<Tensor> {
    if kernels.rank() != 4 {
        return Err(Error::ShapeMismatch {
            context: "flip180",
            detail: format!("expected rank-4 kernels, got {:?}", kernels.shape()),
        });
    }
    let (c, n, k) = (kernels.dim(0), kernels.dim(1), kernels.dim(3));
    let mut out = Tensor::zeros(kernels.shape());
    for ch in 0..c {
        for p in 0..n {
            for q in 0..n {
                for kf in 0..k {
                    let idx = out.idx4(ch, n - 1 - p, n - 1 - q, kf);
                    out.data[idx] = kernels.get4(ch, p, q, kf);
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 stride-2 max pooling with argmax recording.
///
/// Ties break to the smallest row-major offset inside the block so pooling
/// is deterministic.
pub fn maxpool2x2(input: &Tensor) -> Result<(Tensor, PoolIndices)> {
    if input.rank() != 3 {
        return Err(Error::ShapeMismatch {
            context: "maxpool2x2",
            detail: format!("expected rank 3 [k,h,w], got {:?}", input.shape()),
        });
    }
    let (k, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddExtent {
            context: "maxpool2x2",
            height: h,
            width: w,
        });
    }
    let (ph, pw) = (h / 2, w / 2);
    let mut pooled = Tensor::zeros(&[k, ph, pw]);
    let mut offsets = vec![0u8; k * ph * pw];
    for ch in 0..k {
        for i in 0..ph {
            for j in 0..pw {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0u8;
                for (off, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let v = input.get3(ch, 2 * i + di, 2 * j + dj);
                    if v > best {
                        best = v;
                        arg = off as u8;
                    }
                }
                pooled.set3(ch, i, j, best);
                offsets[(ch * ph + i) * pw + j] = arg;
            }
        }
    }
    let indices = PoolIndices::new(&[k, ph, pw], offsets)?;
    Ok((pooled, indices))
}

/// Places each pooled value at one location of its 2x2 block, zeros elsewhere.
pub fn unpool_with_indices(pooled: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    if pooled.rank() != 3 || pooled.shape() != indices.shape() {
        return Err(Error::ShapeMismatch {
            context: "unpool_with_indices",
            detail: format!(
                "pooled {:?} vs indices {:?}",
                pooled.shape(),
                indices.shape()
            ),
        });
    }
    let (k, ph, pw) = (pooled.dim(0), pooled.dim(1), pooled.dim(2));
    let mut out = Tensor::zeros(&[k, 2 * ph, 2 * pw]);
    for ch in 0..k {
        for i in 0..ph {
            for j in 0..pw {
                let off = indices.offset_at(ch, i, j) as usize;
                let (di, dj) = (off / 2, off % 2);
                out.set3(ch, 2 * i + di, 2 * j + dj, pooled.get3(ch, i, j));
            }
        }
    }
    Ok(out)
}

/// Approximate inverse of max pooling. Doubles both spatial extents.
///
/// `Recorded` mode places values back at their argmax switches; `Random`
/// mode picks one location per block uniformly from `rng`.
pub fn unpool2x2<R: Rng>(
    pooled: &Tensor,
    mode: UnpoolMode,
    indices: Option<&PoolIndices>,
    rng: &mut R,
) -> Result<Tensor> {
    match mode {
        UnpoolMode::Recorded => {
            let indices = indices.ok_or(Error::MissingIndices)?;
            unpool_with_indices(pooled, indices)
        }
        UnpoolMode::Random => {
            let sampled = PoolIndices::sample(pooled.shape(), rng);
            unpool_with_indices(pooled, &sampled)
        }
    }
}

/// Elementwise leaky ReLU: `x` if `x >= 0`, else `slope * x`.
pub fn leaky_relu(input: &Tensor, slope: f64) -> Tensor {
    input.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// Derivative of [`leaky_relu`] evaluated at the pre-activation values.
pub fn leaky_relu_grad(pre: &Tensor, slope: f64) -> Tensor {
    pre.map(|v| if v >= 0.0 { 1.0 } else { slope })
}
