use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Normal;

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Uniform in `±√(6 / (fan_in + fan_out))`, shape `[fan_in, fan_out]`.
pub fn xavier_uniform<S: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<S> {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data: Vec<S> = (0..fan_in * fan_out).map(|_| S::lit(dist.sample(rng))).collect();
    Tensor::new(&[fan_in, fan_out], data).expect("consistent shape")
}

pub fn normal<S: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<S> {
    let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n).map(|_| S::lit(dist.sample(rng))).collect();
    Tensor::new(shape, data).expect("consistent shape")
}
