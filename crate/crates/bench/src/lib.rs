//! Fixtures shared by the criterion benchmarks.

use agmf_core::scenarios::BicycleRadar;
use agmf_core::{GaussianComponent, GaussianMixture};
use nalgebra::{DMatrix, DVector};

/// Deterministic 3-D mixture with `n` well-spread components.
pub fn spread_mixture(n: usize) -> GaussianMixture {
    let comps = (0..n)
        .map(|i| {
            let t = i as f64;
            GaussianComponent::new(
                1.0 + (t * 0.7).sin().abs(),
                DVector::from_row_slice(&[t.sin() * 5.0, (t * 0.3).cos() * 3.0, t * 0.01]),
                DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0 + 0.1 * t.cos(), 0.5, 0.2])),
            )
            .expect("valid fixture component")
        })
        .collect();
    GaussianMixture::normalized(comps).expect("positive weights")
}

/// The tracking model with glint probability 0.4.
pub fn radar_model() -> BicycleRadar {
    BicycleRadar::new(0.4, 1.0).expect("valid glint probability")
}
