use serde::{Deserialize, Serialize};

use super::scalar::{dense, Scalar};
use crate::{Error, Result};

/// Spatial extent of a batch of square NHWC feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MapShape {
    pub batch: usize,
    pub side: usize,
}

impl MapShape {
    pub fn pixels(&self) -> usize {
        self.batch * self.side * self.side
    }
}

/// Stride-1, same-padded 2-D convolution with a square `1×1` or `3×3` kernel.
///
/// The kernel is stored as a `(kh·kw·in_ch) × out_ch` row-major matrix so a
/// forward pass is a single GEMM against the im2col buffer. [`ConvLayer::kernel_oihw`]
/// exposes the conventional `out × in × kh × kw` ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<T> {
    in_ch: usize,
    out_ch: usize,
    ksize: usize,
    weight: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, ksize: usize) -> Result<Self> {
        if ksize != 1 && ksize != 3 {
            return Err(Error::arg(format!("kernel size must be 1 or 3, got {ksize}")));
        }
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::arg("channel counts must be positive"));
        }
        Ok(Self {
            in_ch,
            out_ch,
            ksize,
            weight: vec![T::ZERO; ksize * ksize * in_ch * out_ch],
            bias: vec![T::ZERO; out_ch],
        })
    }

    /// Builds a layer from an `out × in × kh × kw` kernel and a bias.
    pub fn from_oihw(in_ch: usize, out_ch: usize, ksize: usize, kernel: &[T], bias: &[T]) -> Result<Self> {
        let mut layer = Self::zeros(in_ch, out_ch, ksize)?;
        Error::check_len("kernel", layer.weight.len(), kernel.len())?;
        Error::check_len("bias", out_ch, bias.len())?;
        let kk = ksize * ksize;
        for o in 0..out_ch {
            for c in 0..in_ch {
                for t in 0..kk {
                    layer.weight[(t * in_ch + c) * out_ch + o] = kernel[(o * in_ch + c) * kk + t];
                }
            }
        }
        layer.bias.copy_from_slice(bias);
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn kernel_size(&self) -> usize {
        self.ksize
    }

    /// Kernel in `out × in × kh × kw` order.
    pub fn kernel_oihw(&self) -> Vec<T> {
        let kk = self.ksize * self.ksize;
        let mut out = vec![T::ZERO; self.weight.len()];
        for o in 0..self.out_ch {
            for c in 0..self.in_ch {
                for t in 0..kk {
                    out[(o * self.in_ch + c) * kk + t] = self.weight[(t * self.in_ch + c) * self.out_ch + o];
                }
            }
        }
        out
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub(crate) fn weight(&self) -> &[T] {
        &self.weight
    }

    pub(crate) fn weight_mut(&mut self) -> &mut [T] {
        &mut self.weight
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub(crate) fn split_params_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weight, &mut self.bias)
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn fan_in(&self) -> usize {
        self.ksize * self.ksize * self.in_ch
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        ConvLayer {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            ksize: self.ksize,
            weight: self.weight.iter().map(|w| U::from_f64(w.to_f64())).collect(),
            bias: self.bias.iter().map(|w| U::from_f64(w.to_f64())).collect(),
        }
    }

    /// Fills `cols` with one row of `3·3·in_ch` patch values per pixel.
    fn im2col(&self, input: &[T], shape: MapShape, cols: &mut Vec<T>) {
        let (side, c) = (shape.side as isize, self.in_ch);
        let zeros = vec![T::ZERO; c];
        cols.clear();
        cols.reserve(shape.pixels() * 9 * c);
        for b in 0..shape.batch {
            let plane = &input[b * shape.side * shape.side * c..(b + 1) * shape.side * shape.side * c];
            for y in 0..side {
                for x in 0..side {
                    for ky in -1..=1isize {
                        let sy = y + ky;
                        for kx in -1..=1isize {
                            let sx = x + kx;
                            if sy < 0 || sy >= side || sx < 0 || sx >= side {
                                cols.extend_from_slice(&zeros);
                            } else {
                                let src = (sy * side + sx) as usize * c;
                                cols.extend_from_slice(&plane[src..src + c]);
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], shape: MapShape, out: &mut [T]) {
        let (side, c) = (shape.side as isize, self.in_ch);
        let width = 9 * c;
        for b in 0..shape.batch {
            for y in 0..side {
                for x in 0..side {
                    let row = ((b * shape.side + y as usize) * shape.side + x as usize) * width;
                    for ky in 0..3isize {
                        let sy = y + ky - 1;
                        if sy < 0 || sy >= side {
                            continue;
                        }
                        for kx in 0..3isize {
                            let sx = x + kx - 1;
                            if sx < 0 || sx >= side {
                                continue;
                            }
                            let dst = ((b * shape.side + sy as usize) * shape.side + sx as usize) * c;
                            let src = row + (ky * 3 + kx) as usize * c;
                            for (o, v) in out[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                                *o += *v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// NHWC forward pass: `input` is `pixels × in_ch`, result is `pixels × out_ch`.
    /// `scratch` is reused between calls to hold the im2col buffer.
    pub(crate) fn forward(&self, input: &[T], shape: MapShape, scratch: &mut Vec<T>) -> Vec<T> {
        let n = shape.pixels();
        debug_assert_eq!(input.len(), n * self.in_ch);
        let mut out = Vec::with_capacity(n * self.out_ch);
        for _ in 0..n {
            out.extend_from_slice(&self.bias);
        }
        if self.ksize == 1 {
            dense::mm(n, self.in_ch, self.out_ch, input, &self.weight, T::ONE, &mut out);
        } else {
            self.im2col(input, shape, scratch);
            dense::mm(n, 9 * self.in_ch, self.out_ch, scratch, &self.weight, T::ONE, &mut out);
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input` when `want_input` is set.
    pub(crate) fn backward(
        &self,
        input: &[T],
        shape: MapShape,
        upstream: &[T],
        grad: &mut ConvLayer<T>,
        want_input: bool,
        scratch: &mut Vec<T>,
    ) -> Option<Vec<T>> {
        let n = shape.pixels();
        let (ci, co) = (self.in_ch, self.out_ch);
        for row in upstream.chunks_exact(co) {
            for (g, u) in grad.bias.iter_mut().zip(row) {
                *g += *u;
            }
        }
        if self.ksize == 1 {
            dense::mtm(n, ci, co, input, upstream, T::ONE, &mut grad.weight);
            want_input.then(|| {
                let mut din = vec![T::ZERO; n * ci];
                dense::mmt(n, co, ci, upstream, &self.weight, T::ZERO, &mut din);
                din
            })
        } else {
            self.im2col(input, shape, scratch);
            dense::mtm(n, 9 * ci, co, scratch, upstream, T::ONE, &mut grad.weight);
            want_input.then(|| {
                dense::mmt(n, co, 9 * ci, upstream, &self.weight, T::ZERO, scratch);
                let mut din = vec![T::ZERO; n * ci];
                self.col2im(scratch, shape, &mut din);
                din
            })
        }
    }
}
