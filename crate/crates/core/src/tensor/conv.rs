//! 2-D convolution (cross-correlation, zero padding) via im2col and GEMM.

use super::parallel::map_indexed;
use super::Tensor;
use crate::error::{Error, Result};

/// `floor((size + 2·pad − k) / stride) + 1`, or `None` when the window does not fit.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || size + 2 * pad < kernel {
        return None;
    }
    Some((size + 2 * pad - kernel) / stride + 1)
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// 1×1 stride-1 unpadded convolutions read the input directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn new(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        const OP: &str = "conv2d";
        let (n, c, h, w) = input.dims4(OP)?;
        let (o, i, kh, kw) = weight.dims4(OP)?;
        if c != i {
            return Err(Error::dim(
                OP,
                format!("input channels (axis 1 of input) = {c} but weight in-channels (axis 1 of weight) = {i}"),
            ));
        }
        if stride == 0 {
            return Err(Error::dim(OP, "stride must be positive"));
        }
        let oh = conv_output_size(h, kh, stride, pad).ok_or_else(|| {
            Error::dim(
                OP,
                format!("height axis: H + 2·pad = {} < Kh = {kh}", h + 2 * pad),
            )
        })?;
        let ow = conv_output_size(w, kw, stride, pad).ok_or_else(|| {
            Error::dim(
                OP,
                format!("width axis: W + 2·pad = {} < Kw = {kw}", w + 2 * pad),
            )
        })?;
        Ok(Geometry {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            oh,
            ow,
            stride,
            pad,
        })
    }
}

fn im2col(g: &Geometry, image: &[f64], cols: &mut [f64]) {
    let p = g.cols();
    for ci in 0..g.c {
        let plane = &image[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &Geometry, cols: &[f64], image: &mut [f64]) {
    let p = g.cols();
    for ci in 0..g.c {
        let plane = &mut image[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Strided matrix view for [`gemm`].
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl<'a> Mat<'a> {
    fn rows(data: &'a [f64], cols: usize) -> Self {
        Mat {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    fn transposed(data: &'a [f64], cols: usize) -> Self {
        Mat {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }

    fn covers(&self, rows: usize, cols: usize) -> bool {
        rows == 0
            || cols == 0
            || (rows - 1) * self.row_stride + (cols - 1) * self.col_stride < self.data.len()
    }
}

/// `c[m×n] = a[m×k] · b[k×n] + beta · c`, with `c` row-major.
fn gemm(m: usize, k: usize, n: usize, a: Mat, b: Mat, beta: f64, c: &mut [f64]) {
    assert!(a.covers(m, k) && b.covers(k, n) && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the assertion above bounds every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation of `input (N,C,H,W)` with `weight (O,C,Kh,Kw)`.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input, weight, stride, pad)?;
    if let Some(b) = bias {
        if b.len() != g.o {
            return Err(Error::dim(
                "conv2d",
                format!("bias length {} != out channels {}", b.len(), g.o),
            ));
        }
    }
    let (r, p) = (g.rows(), g.cols());
    let in_len = g.c * g.h * g.w;
    let wdata = weight.data();
    let per_image = map_indexed(g.n, |ni| {
        let image = &input.data()[ni * in_len..(ni + 1) * in_len];
        let mut out = vec![0.0; g.o * p];
        if g.is_pointwise() {
            gemm(
                g.o,
                r,
                p,
                Mat::rows(wdata, r),
                Mat::rows(image, p),
                0.0,
                &mut out,
            );
        } else {
            let mut cols = vec![0.0; r * p];
            im2col(&g, image, &mut cols);
            gemm(
                g.o,
                r,
                p,
                Mat::rows(wdata, r),
                Mat::rows(&cols, p),
                0.0,
                &mut out,
            );
        }
        if let Some(b) = bias {
            for (o, chunk) in out.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v += b[o]);
            }
        }
        out
    });
    Tensor::from_vec(&[g.n, g.o, g.oh, g.ow], per_image.concat())
}

/// Exact adjoint of [`conv2d_forward`].
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let (gi, gw, gb) = conv2d_backward_parts(grad_out, input, weight, stride, pad, true)?;
    Ok(ConvGrads {
        input: gi.expect("input gradient requested"),
        weight: gw,
        bias: gb,
    })
}

/// Backward pass that optionally skips the input gradient (used for the first layer).
pub(crate) fn conv2d_backward_parts(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Vec<f64>)> {
    let g = Geometry::new(input, weight, stride, pad)?;
    let expected = [g.n, g.o, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::dim(
            "conv2d_backward",
            format!(
                "grad_out shape {:?} != forward output shape {expected:?}",
                grad_out.shape()
            ),
        ));
    }
    let (r, p) = (g.rows(), g.cols());
    let in_len = g.c * g.h * g.w;
    let out_len = g.o * p;
    let wdata = weight.data();

    // Per-image partial gradients are reduced in index order below, so the sum
    // is the same for any thread count.
    let per_image = map_indexed(g.n, |ni| {
        let image = &input.data()[ni * in_len..(ni + 1) * in_len];
        let gout = &grad_out.data()[ni * out_len..(ni + 1) * out_len];
        let mut gw = vec![0.0; g.o * r];
        let mut gin = if want_input {
            vec![0.0; in_len]
        } else {
            Vec::new()
        };
        if g.is_pointwise() {
            gemm(
                g.o,
                p,
                r,
                Mat::rows(gout, p),
                Mat::transposed(image, p),
                0.0,
                &mut gw,
            );
            if want_input {
                gemm(
                    r,
                    g.o,
                    p,
                    Mat::transposed(wdata, r),
                    Mat::rows(gout, p),
                    0.0,
                    &mut gin,
                );
            }
        } else {
            let mut cols = vec![0.0; r * p];
            im2col(&g, image, &mut cols);
            gemm(
                g.o,
                p,
                r,
                Mat::rows(gout, p),
                Mat::transposed(&cols, p),
                0.0,
                &mut gw,
            );
            if want_input {
                gemm(
                    r,
                    g.o,
                    p,
                    Mat::transposed(wdata, r),
                    Mat::rows(gout, p),
                    0.0,
                    &mut cols,
                );
                col2im(&g, &cols, &mut gin);
            }
        }
        let gb: Vec<f64> = gout.chunks(p).map(|c| c.iter().sum()).collect();
        (gin, gw, gb)
    });

    let mut grad_weight = vec![0.0; g.o * r];
    let mut grad_bias = vec![0.0; g.o];
    let mut grad_input = Vec::with_capacity(if want_input { g.n * in_len } else { 0 });
    for (gin, gw, gb) in per_image {
        grad_weight.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
        grad_bias.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
        grad_input.extend_from_slice(&gin);
    }
    let grad_input = if want_input {
        Some(Tensor::from_vec(input.shape(), grad_input)?)
    } else {
        None
    };
    Ok((
        grad_input,
        Tensor::from_vec(weight.shape(), grad_weight)?,
        grad_bias,
    ))
}
