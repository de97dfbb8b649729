//! Strided 2-D convolution and its transpose, both with "same" padding.
//!
//! Convolution is cross-correlation with kernels stored `[kh, kw, in, out]`.
//! For input side `n` and stride `s` the output side is `ceil(n / s)`, with
//! `max((out - 1) * s + k - n, 0)` padding split floor-left / ceil-right.
//!
//! The transposed convolution owns a kernel stored `[kh, kw, out, in]`, i.e.
//! the kernel of the convolution mapping its (larger) output back onto its
//! input, and computes exactly that convolution's adjoint. Its output side is
//! `n * s`.
//!
//! Both lower to gemm over an im2col buffer of shape `[b*oh*ow, kh*kw*c]`.

use super::params::{column_sums, LayerParams, ParamGrads};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tensor, Trans};

/// Output side and leading pad of a same-padded strided convolution.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// Geometry of the underlying (downsampling) convolution.
#[derive(Debug, Clone, Copy)]
struct Geom {
    batch: usize,
    in_h: usize,
    in_w: usize,
    in_c: usize,
    out_h: usize,
    out_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geom {
    fn new(
        batch: usize,
        in_h: usize,
        in_w: usize,
        in_c: usize,
        kh: usize,
        kw: usize,
        stride: usize,
    ) -> Self {
        let (out_h, pad_top) = same_padding(in_h, kh, stride);
        let (out_w, pad_left) = same_padding(in_w, kw, stride);
        Geom {
            batch,
            in_h,
            in_w,
            in_c,
            out_h,
            out_w,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
        }
    }

    fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.in_c
    }

    fn image_len(&self) -> usize {
        self.batch * self.in_h * self.in_w * self.in_c
    }

    /// Calls `f(col_offset, image_offset)` for every in-bounds kernel tap;
    /// each tap covers `in_c` contiguous values on both sides.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let c = self.in_c;
        let patch = self.patch();
        let mut row = 0;
        for b in 0..self.batch {
            let img = b * self.in_h * self.in_w * c;
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let base = row * patch;
                    for ky in 0..self.kh {
                        let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            let col = base + (ky * self.kw + kx) * c;
                            let src = img + (iy as usize * self.in_w + ix as usize) * c;
                            f(col, src);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geom) -> Vec<T> {
    let mut cols = vec![T::zero(); g.rows() * g.patch()];
    let c = g.in_c;
    g.for_each_tap(|col, src| cols[col..col + c].copy_from_slice(&x[src..src + c]));
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &Geom) -> Vec<T> {
    let mut img = vec![T::zero(); g.image_len()];
    let c = g.in_c;
    g.for_each_tap(|col, src| {
        for (d, &s) in img[src..src + c].iter_mut().zip(&cols[col..col + c]) {
            *d += s;
        }
    });
    img
}

fn image_dims<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize, usize)> {
    match x.shape() {
        &[b, h, w, c] => Ok((b, h, w, c)),
        s => Err(Error::shape(format!(
            "{what} expects [batch, h, w, c], got {s:?}"
        ))),
    }
}

fn kernel_dims<T: Scalar>(params: &LayerParams<T>) -> Result<(usize, usize, usize, usize)> {
    match params.weights.shape() {
        &[kh, kw, a, b] => Ok((kh, kw, a, b)),
        s => Err(Error::shape(format!(
            "conv kernel must be rank 4, got {s:?}"
        ))),
    }
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    Ok(())
}

pub fn conv2d_forward<T: Scalar>(
    params: &LayerParams<T>,
    x: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    check_stride(stride)?;
    let (b, h, w, c) = image_dims(x, "conv2d")?;
    let (kh, kw, kc, f) = kernel_dims(params)?;
    if kc != c {
        return Err(Error::shape(format!(
            "conv2d kernel expects {kc} input channels, got {c}"
        )));
    }
    let g = Geom::new(b, h, w, c, kh, kw, stride);
    let cols = im2col(x.data(), &g);
    let mut out = vec![T::zero(); g.rows() * f];
    gemm(
        Trans::No,
        Trans::No,
        g.rows(),
        g.patch(),
        f,
        &cols,
        params.weights.data(),
        &mut out,
        false,
    );
    params.add_bias_rows(&mut out, f);
    Tensor::new([b, g.out_h, g.out_w, f], out)
}

pub fn conv2d_backward<T: Scalar>(
    params: &LayerParams<T>,
    x: &Tensor<T>,
    stride: usize,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, ParamGrads<T>)> {
    check_stride(stride)?;
    let (b, h, w, c) = image_dims(x, "conv2d")?;
    let (kh, kw, kc, f) = kernel_dims(params)?;
    if kc != c {
        return Err(Error::shape(format!(
            "conv2d kernel expects {kc} input channels, got {c}"
        )));
    }
    let g = Geom::new(b, h, w, c, kh, kw, stride);
    if grad_out.shape() != [b, g.out_h, g.out_w, f] {
        return Err(Error::shape(format!(
            "conv2d grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [b, g.out_h, g.out_w, f]
        )));
    }
    let cols = im2col(x.data(), &g);
    let mut gw = vec![T::zero(); g.patch() * f];
    gemm(
        Trans::Yes,
        Trans::No,
        g.patch(),
        g.rows(),
        f,
        &cols,
        grad_out.data(),
        &mut gw,
        false,
    );
    let gb = params
        .bias
        .as_ref()
        .map(|_| Tensor::new([f], column_sums(grad_out.data(), f)))
        .transpose()?;
    let gx = if need_input_grad {
        let mut gcols = cols;
        gemm(
            Trans::No,
            Trans::Yes,
            g.rows(),
            f,
            g.patch(),
            grad_out.data(),
            params.weights.data(),
            &mut gcols,
            false,
        );
        Some(Tensor::new([b, h, w, c], col2im(&gcols, &g))?)
    } else {
        None
    };
    Ok((
        gx,
        ParamGrads {
            weights: Tensor::new([kh, kw, c, f], gw)?,
            bias: gb,
        },
    ))
}

pub fn conv2d_transpose_forward<T: Scalar>(
    params: &LayerParams<T>,
    x: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    check_stride(stride)?;
    let (b, h, w, c) = image_dims(x, "conv2d_transpose")?;
    let (kh, kw, f, kc) = kernel_dims(params)?;
    if kc != c {
        return Err(Error::shape(format!(
            "conv2d_transpose kernel expects {kc} input channels, got {c}"
        )));
    }
    let g = Geom::new(b, h * stride, w * stride, f, kh, kw, stride);
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    let mut cols = vec![T::zero(); g.rows() * g.patch()];
    gemm(
        Trans::No,
        Trans::Yes,
        g.rows(),
        c,
        g.patch(),
        x.data(),
        params.weights.data(),
        &mut cols,
        false,
    );
    let mut out = col2im(&cols, &g);
    params.add_bias_rows(&mut out, f);
    Tensor::new([b, g.in_h, g.in_w, f], out)
}

pub fn conv2d_transpose_backward<T: Scalar>(
    params: &LayerParams<T>,
    x: &Tensor<T>,
    stride: usize,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, ParamGrads<T>)> {
    check_stride(stride)?;
    let (b, h, w, c) = image_dims(x, "conv2d_transpose")?;
    let (kh, kw, f, kc) = kernel_dims(params)?;
    if kc != c {
        return Err(Error::shape(format!(
            "conv2d_transpose kernel expects {kc} input channels, got {c}"
        )));
    }
    let g = Geom::new(b, h * stride, w * stride, f, kh, kw, stride);
    if grad_out.shape() != [b, g.in_h, g.in_w, f] {
        return Err(Error::shape(format!(
            "conv2d_transpose grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [b, g.in_h, g.in_w, f]
        )));
    }
    let gcols = im2col(grad_out.data(), &g);
    let mut gw = vec![T::zero(); g.patch() * c];
    gemm(
        Trans::Yes,
        Trans::No,
        g.patch(),
        g.rows(),
        c,
        &gcols,
        x.data(),
        &mut gw,
        false,
    );
    let gb = params
        .bias
        .as_ref()
        .map(|_| Tensor::new([f], column_sums(grad_out.data(), f)))
        .transpose()?;
    let gx = if need_input_grad {
        let mut gx = vec![T::zero(); g.rows() * c];
        gemm(
            Trans::No,
            Trans::No,
            g.rows(),
            g.patch(),
            c,
            &gcols,
            params.weights.data(),
            &mut gx,
            false,
        );
        Some(Tensor::new([b, h, w, c], gx)?)
    } else {
        None
    };
    Ok((
        gx,
        ParamGrads {
            weights: Tensor::new([kh, kw, f, c], gw)?,
            bias: gb,
        },
    ))
}
