//! Dense tensors, the seeded generator, and the raw compute kernels.
//!
//! Activations use the `(N, C, H, W)` convention and convolution weights
//! `(O, I, Kh, Kw)`. Storage is contiguous row-major `f64`.

mod conv;
mod init;
mod parallel;
mod pool;
mod rng;

pub(crate) use conv::conv2d_backward_parts;
pub use conv::{conv2d_backward, conv2d_forward, conv_output_size, ConvGrads};
pub use init::xavier_init;
pub(crate) use parallel::map_indexed;
pub use parallel::thread_count;
pub use pool::{maxpool2d_backward, maxpool2d_forward, MaxPoolOutput};
pub use rng::{RngState, SeededRng};

use crate::error::{Error, Result};

/// Dense row-major tensor of up to four dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.len() <= 4, "tensors have at most four dimensions");
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::dim(
                "tensor",
                format!("rank {} outside 1..=4", shape.len()),
            ));
        }
        if shape.contains(&0) {
            return Err(Error::dim(
                "tensor",
                format!("zero-sized axis in {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(
                "tensor",
                format!(
                    "shape {shape:?} holds {expected} elements but data has {}",
                    data.len()
                ),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Splits a rank-4 shape into `(n, c, h, w)`.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::dim(
                op,
                format!("expected rank-4 NCHW tensor, got shape {:?}", self.shape),
            )),
        }
    }

    /// Flat offset of `(n, c, h, w)`: `((n·C + c)·H + h)·W + w`.
    pub fn index4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = [self.shape[0], self.shape[1], self.shape[2], self.shape[3]];
        ((n * cs + c) * hs + h) * ws + w
    }

    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index4(n, c, h, w)]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Euclidean norm over every element of every tensor, summed in list order.
///
/// An empty list has norm 0.
pub fn global_grad_l2_norm<'a, I>(grads: I) -> f64
where
    I: IntoIterator<Item = &'a Tensor>,
{
    grads
        .into_iter()
        .map(Tensor::sum_squares)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_formula_is_row_major() {
        let t = Tensor::from_vec(&[2, 3, 4, 5], (0..120).map(f64::from).collect()).unwrap();
        assert_eq!(t.index4(1, 2, 3, 4), ((3 + 2) * 4 + 3) * 5 + 4);
        assert_eq!(t.at4(1, 2, 3, 4), 119.0);
        assert_eq!(t.at4(0, 1, 0, 0), 20.0);
    }

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = Tensor::from_vec(&[2, 2], vec![1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(Tensor::from_vec(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn grad_norm_examples() {
        assert_eq!(global_grad_l2_norm(&[Tensor::zeros(&[3, 3])]), 0.0);
        let a = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![4.0]).unwrap();
        assert_eq!(global_grad_l2_norm([&a, &b]), 5.0);
        assert_eq!(global_grad_l2_norm(std::iter::empty()), 0.0);
    }

    #[test]
    fn grad_norm_is_homogeneous() {
        let mut a = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut b = Tensor::from_vec(&[2], vec![0.25, 4.0]).unwrap();
        let base = global_grad_l2_norm([&a, &b]);
        a.scale(-3.0);
        b.scale(-3.0);
        assert!((global_grad_l2_norm([&a, &b]) - 3.0 * base).abs() < 1e-12);
    }
}
