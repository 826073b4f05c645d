#![allow(dead_code)]

use agmf_core::{GaussianComponent, GaussianMixture};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vec_of(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

pub fn normal_vec<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `A Aᵀ + 0.1 I` with standard-normal `A`.
pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn random_component<R: Rng>(n: usize, rng: &mut R) -> GaussianComponent {
    GaussianComponent::new(rng.random_range(0.1..1.0), normal_vec(n, rng) * 3.0, random_spd(n, rng)).unwrap()
}

pub fn random_mixture<R: Rng>(n: usize, count: usize, rng: &mut R) -> GaussianMixture {
    GaussianMixture::normalized((0..count).map(|_| random_component(n, rng)).collect()).unwrap()
}

/// Textbook Kalman predictor for `x' = F x + c + w`.
pub fn kalman_predict(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    f: &DMatrix<f64>,
    c: &DVector<f64>,
    q: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    (f * mean + c, f * cov * f.transpose() + q)
}

/// Textbook Kalman update for `z = H x + d + v`, explicit inverse.
pub fn kalman_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h: &DMatrix<f64>,
    d: &DVector<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = h * cov * h.transpose() + r;
    let k = cov * h.transpose() * s.try_inverse().unwrap();
    let mean = mean + &k * (z - (h * mean + d));
    let cov = cov - &k * h * cov;
    (mean, (&cov + cov.transpose()) * 0.5)
}
