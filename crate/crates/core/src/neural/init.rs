use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::scalar::Real;

/// Uniform Xavier (Glorot) initialization.
pub fn xavier_uniform<S: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| S::lit(rng.random_range(-limit..limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

/// Random `n x n` orthogonal matrix (row-major) from the QR factorization of a
/// Gaussian matrix, sign-corrected so the distribution is uniform.
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    (0..n * n).map(|k| q[(k / n, k % n)]).collect()
}

pub fn gaussian_unit<S: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<S> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    v.iter_mut().for_each(|x| *x /= norm);
    v.into_iter().map(S::lit).collect()
}
