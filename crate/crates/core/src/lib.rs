//! Adaptive Gaussian mixture filtering.
//!
//! Nonlinear transformations are statistically linearized per mixture
//! component. Components whose linearization error is large are split along the
//! eigendirection where the error concentrates, and the mixture is reduced back
//! to a budget after every filter step.
//!
//! ```
//! use agmf_core::{linearize, SchemeConfig};
//! use nalgebra::{DMatrix, DVector};
//!
//! let square = |x: &DVector<f64>| DVector::from_element(1, x[0] * x[0]);
//! let lin = linearize(&square, &DVector::zeros(1), &DMatrix::identity(1, 1), &SchemeConfig::unscented(0.5)).unwrap();
//! assert!((lin.error_trace() - 0.5).abs() < 1e-12);
//! ```

pub mod baselines;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod mixture;
pub mod quadrature;
pub mod reduction;
pub mod scenarios;
pub mod splitting;
pub mod statlin;

pub use error::{Error, Result};
pub use filter::{
    adapt, joint_components, predict, update, AdaptOutcome, FilterConfig, FilterState, FnModel,
    SplitPolicy, StateSpaceModel, StepDiagnostics,
};
pub use mixture::{
    eigendecompose, evaluate_density, gaussian_product_integral, mixture_moments, normalized_isd,
    EigenDecomposition, GaussianComponent, GaussianMixture,
};
pub use reduction::{merge_cost, merge_pair, reduce};
pub use splitting::{
    direction_scores, select_and_split, selection_scores, split_component, SplitLibrary, SplitScore,
};
pub use statlin::{
    error_trace, linearize, regression_points, residual_at, Linearization, PointScheme,
    RegressionPointSet, SchemeConfig, SchemeKind,
};
