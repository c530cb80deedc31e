use super::Tensor;
use crate::error::{Error, Result};

/// Pooled values plus, for every output element, the flat input index it came from.
#[derive(Clone, Debug)]
pub struct MaxPoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Unpadded max pooling. Ties resolve to the lowest flat index in the window.
pub fn maxpool2d_forward(input: &Tensor, kernel: usize, stride: usize) -> Result<MaxPoolOutput> {
    const OP: &str = "maxpool2d";
    let (n, c, h, w) = input.dims4(OP)?;
    if kernel == 0 || stride == 0 {
        return Err(Error::dim(OP, "kernel and stride must be positive"));
    }
    if h < kernel || w < kernel {
        return Err(Error::dim(
            OP,
            format!("window {kernel}×{kernel} larger than input H×W = {h}×{w}"),
        ));
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = src[best_idx];
                for ky in 0..kernel {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for kx in 0..kernel {
                        let v = src[row + kx];
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(MaxPoolOutput {
        output: Tensor::from_vec(&[n, c, oh, ow], out)?,
        argmax,
    })
}

/// Routes each output gradient to the input position that produced the maximum.
pub fn maxpool2d_backward(
    grad_out: &Tensor,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(
            "maxpool2d_backward",
            format!(
                "grad_out has {} elements but {} argmax indices were recorded",
                grad_out.len(),
                argmax.len()
            ),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    let dst = grad.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        dst[i] += g;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_four() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(out.output.data(), &[4.0]);
        assert_eq!(out.argmax, vec![3]);
    }

    #[test]
    fn constant_input_routes_to_first_index() {
        let x = Tensor::full(&[1, 1, 4, 4], 2.5);
        let out = maxpool2d_forward(&x, 2, 2).unwrap();
        assert!(out.output.data().iter().all(|&v| v == 2.5));
        assert_eq!(out.argmax, vec![0, 2, 8, 10]);
        let g =
            maxpool2d_backward(&Tensor::full(&[1, 1, 2, 2], 1.0), &out.argmax, x.shape()).unwrap();
        let expected: Vec<f64> = (0..16)
            .map(|i| if [0, 2, 8, 10].contains(&i) { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(g.data(), expected.as_slice());
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::zeros(&[1, 1, 1, 3]);
        assert!(matches!(
            maxpool2d_forward(&x, 2, 2),
            Err(Error::Dimension { .. })
        ));
    }
}
