use super::{SeededRng, Tensor};
use crate::error::{Error, Result};

/// Glorot/Xavier uniform initialization on `[−a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
///
/// For a conv weight `(O, I, Kh, Kw)`: `fan_in = I·Kh·Kw`, `fan_out = O·Kh·Kw`.
/// For an affine weight `(O, I)`: `fan_in = I`, `fan_out = O`.
pub fn xavier_init(shape: &[usize], rng: &mut SeededRng) -> Result<Tensor> {
    let (fan_in, fan_out) = match *shape {
        [o, i, kh, kw] => (i * kh * kw, o * kh * kw),
        [o, i] => (i, o),
        _ => {
            return Err(Error::dim(
                "xavier_init",
                format!("expected a (O,I) or (O,I,Kh,Kw) shape, got {shape:?}"),
            ))
        }
    };
    if shape.contains(&0) {
        return Err(Error::dim(
            "xavier_init",
            format!("zero-sized axis in {shape:?}"),
        ));
    }
    let bound = xavier_bound(fan_in, fan_out);
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| bound * (2.0 * rng.uniform() - 1.0))
        .collect();
    Tensor::from_vec(shape, data)
}

pub(crate) fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
