//! Regression points and statistical linear regression.
//!
//! A nonlinear map `y = g(x)` with `x ~ N(x̂, Cˣ)` is replaced by the affine fit
//! `y ≈ G x + b` that minimizes the weighted squared residual over a set of
//! deterministic regression points. The residual scatter `Cᵉ` quantifies how
//! far `g` is from affine on the support of the Gaussian.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{repair_psd, semidefinite_cholesky, symmetrize};
use crate::mixture::{eigendecompose, EigenDecomposition};

/// Scaling factors of the two-factor Gaussian estimator (one-dimensional values).
pub const GE_N2_FACTORS: [f64; 2] = [-1.2245, 1.2245];
/// Scaling factors of the four-factor Gaussian estimator (one-dimensional values).
pub const GE_N4_FACTORS: [f64; 4] = [-1.4795, -0.5578, 0.5578, 1.4795];

/// Which square root of the covariance spans the regression points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRoot {
    /// Columns of the lower Cholesky factor.
    Cholesky,
    /// `V · diag(√λ)` from the eigendecomposition.
    Eigen,
}

/// A point-selection rule: `x₁ = x̂`, `xᵢ = x̂ + νⱼ Pₗ`, `i = l + 1 + (j − 1) n`.
///
/// Implement this to plug in a scheme that is not shipped with the crate.
pub trait PointScheme: fmt::Debug + Send + Sync {
    fn root(&self) -> MatrixRoot;

    /// Scaling factors `νⱼ` for an `n`-dimensional input.
    fn scaling_factors(&self, n: usize) -> Result<Vec<f64>>;

    /// Weight of the center point and of every other point.
    fn weights(&self, n: usize) -> Result<(f64, f64)>;
}

#[derive(Debug, Clone)]
pub enum SchemeKind {
    UnscentedTransform,
    GaussianEstimatorN2,
    GaussianEstimatorN4,
    Custom(Arc<dyn PointScheme>),
}

/// Regression-point scheme selector. `kappa` is only read by the unscented transform.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub kappa: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::unscented(0.5)
    }
}

impl SchemeConfig {
    pub fn unscented(kappa: f64) -> Self {
        Self {
            kind: SchemeKind::UnscentedTransform,
            kappa,
        }
    }

    pub fn gaussian_estimator_n2() -> Self {
        Self {
            kind: SchemeKind::GaussianEstimatorN2,
            kappa: 0.5,
        }
    }

    pub fn gaussian_estimator_n4() -> Self {
        Self {
            kind: SchemeKind::GaussianEstimatorN4,
            kappa: 0.5,
        }
    }

    pub fn custom(scheme: Arc<dyn PointScheme>) -> Self {
        Self {
            kind: SchemeKind::Custom(scheme),
            kappa: 0.0,
        }
    }

    /// Short identifier used in CLI flags and reports.
    pub fn name(&self) -> &'static str {
        match self.kind {
            SchemeKind::UnscentedTransform => "ut",
            SchemeKind::GaussianEstimatorN2 => "ge2",
            SchemeKind::GaussianEstimatorN4 => "ge4",
            SchemeKind::Custom(_) => "custom",
        }
    }

    fn as_scheme(&self) -> &dyn PointScheme {
        match &self.kind {
            SchemeKind::Custom(s) => s.as_ref(),
            _ => self,
        }
    }
}

impl PointScheme for SchemeConfig {
    fn root(&self) -> MatrixRoot {
        match &self.kind {
            SchemeKind::UnscentedTransform => MatrixRoot::Cholesky,
            SchemeKind::GaussianEstimatorN2 | SchemeKind::GaussianEstimatorN4 => MatrixRoot::Eigen,
            SchemeKind::Custom(s) => s.root(),
        }
    }

    fn scaling_factors(&self, n: usize) -> Result<Vec<f64>> {
        match &self.kind {
            SchemeKind::UnscentedTransform => {
                let spread = n as f64 + self.kappa;
                if spread <= 0.0 {
                    return Err(invalid(format!("unscented transform needs n + kappa > 0, got {spread}")));
                }
                let nu = spread.sqrt();
                Ok(vec![nu, -nu])
            }
            SchemeKind::GaussianEstimatorN2 => Ok(equal_weight_factors(&GE_N2_FACTORS, n)),
            SchemeKind::GaussianEstimatorN4 => Ok(equal_weight_factors(&GE_N4_FACTORS, n)),
            SchemeKind::Custom(s) => s.scaling_factors(n),
        }
    }

    fn weights(&self, n: usize) -> Result<(f64, f64)> {
        match &self.kind {
            SchemeKind::UnscentedTransform => {
                let spread = n as f64 + self.kappa;
                if spread <= 0.0 {
                    return Err(invalid(format!("unscented transform needs n + kappa > 0, got {spread}")));
                }
                Ok((self.kappa / spread, 0.5 / spread))
            }
            SchemeKind::GaussianEstimatorN2 => {
                let w = 1.0 / (2 * n + 1) as f64;
                Ok((w, w))
            }
            SchemeKind::GaussianEstimatorN4 => {
                let w = 1.0 / (4 * n + 1) as f64;
                Ok((w, w))
            }
            SchemeKind::Custom(s) => s.weights(n),
        }
    }
}

/// The tabulated Gaussian-estimator factors are the one-dimensional solution.
/// With all `L = n N + 1` points weighted `1/L`, the spread along each axis is
/// `Σ νⱼ² / L`; the factors are rescaled so that this equals one for every `n`.
fn equal_weight_factors(base: &[f64], n: usize) -> Vec<f64> {
    let count = (n * base.len() + 1) as f64;
    let energy: f64 = base.iter().map(|v| v * v).sum();
    let scale = (count / energy).sqrt();
    base.iter().map(|v| v * scale).collect()
}

/// Factorization of `Cˣ` kept alongside the points so `(Cˣ)⁻¹` is applied
/// through the same root that generated them.
#[derive(Debug, Clone)]
enum RootFactor {
    Cholesky { lower: DMatrix<f64>, rank: usize },
    Eigen(EigenDecomposition),
}

/// Weighted deterministic points capturing the first two moments of a Gaussian.
#[derive(Debug, Clone)]
pub struct RegressionPointSet {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    root: RootFactor,
}

impl RegressionPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Weighted mean and scatter of the points.
    pub fn captured_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.mean.len();
        let mut mean = DVector::zeros(n);
        for (p, &w) in self.points.iter().zip(&self.weights) {
            mean.axpy(w, p, 1.0);
        }
        let mut cov = DMatrix::zeros(n, n);
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let d = p - &mean;
            cov += &d * d.transpose() * w;
        }
        (mean, cov)
    }

    /// Applies `(Cˣ)⁻¹` (pseudo-inverse on rank-deficient directions) to `rhs`.
    fn solve_cov(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.root {
            RootFactor::Cholesky { lower, rank } if *rank == lower.nrows() => {
                let half = lower
                    .solve_lower_triangular(rhs)
                    .ok_or_else(|| crate::error::numerical("triangular solve failed"))?;
                lower
                    .transpose()
                    .solve_upper_triangular(&half)
                    .ok_or_else(|| crate::error::numerical("triangular solve failed"))
            }
            RootFactor::Cholesky { .. } => {
                let eig = eigendecompose(&self.cov)?;
                Ok(pseudo_solve(&eig, rhs))
            }
            RootFactor::Eigen(eig) => Ok(pseudo_solve(eig, rhs)),
        }
    }
}

fn pseudo_solve(eig: &EigenDecomposition, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let max = eig.eigenvalues.max();
    let inv = eig
        .eigenvalues
        .map(|l| if l > 1e-13 * max { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * (eig.eigenvectors.transpose() * rhs)
}

/// Generates the regression points of `N(mean, cov)` for `scheme`.
pub fn regression_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    scheme: &SchemeConfig,
) -> Result<RegressionPointSet> {
    let n = mean.len();
    if n == 0 || cov.nrows() != n || cov.ncols() != n {
        return Err(invalid("mean and covariance dimensions are inconsistent"));
    }
    let rule = scheme.as_scheme();
    let factors = rule.scaling_factors(n)?;
    let (center_weight, point_weight) = rule.weights(n)?;

    let (root, columns) = match rule.root() {
        MatrixRoot::Cholesky => {
            let (lower, rank) = semidefinite_cholesky(&symmetrize(cov))?;
            let cols = lower.clone();
            (RootFactor::Cholesky { lower, rank }, cols)
        }
        MatrixRoot::Eigen => {
            let eig = eigendecompose(cov)?;
            let sqrt = eig.eigenvalues.map(f64::sqrt);
            let cols = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
            (RootFactor::Eigen(eig), cols)
        }
    };

    let mut points = Vec::with_capacity(n * factors.len() + 1);
    let mut weights = Vec::with_capacity(points.capacity());
    points.push(mean.clone());
    weights.push(center_weight);
    for nu in &factors {
        for l in 0..n {
            points.push(mean + columns.column(l) * *nu);
            weights.push(point_weight);
        }
    }
    Ok(RegressionPointSet {
        points,
        weights,
        mean: mean.clone(),
        cov: symmetrize(cov),
        root,
    })
}

/// Result of statistically linearizing `g` at a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// Regression matrix `G` (`n_y × n_x`).
    pub g: DMatrix<f64>,
    /// Offset `b = ŷ − G x̂`.
    pub b: DVector<f64>,
    pub y_mean: DVector<f64>,
    pub y_cov: DMatrix<f64>,
    /// Cross-covariance `Cˣʸ` (`n_x × n_y`).
    pub xy_cross: DMatrix<f64>,
    /// Linearization-error covariance `Cᵉ`.
    pub err_cov: DMatrix<f64>,
}

impl Linearization {
    pub fn output_dim(&self) -> usize {
        self.b.len()
    }

    /// `ε = trace(Cᵉ)`.
    pub fn error_trace(&self) -> f64 {
        error_trace(self)
    }
}

fn evaluate<F>(g: &F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    let y = g(x);
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(Error::NonFinite {
            point: x.iter().copied().collect(),
        })
    }
}

/// Statistically linearizes `g` at `N(mean, cov)`.
pub fn linearize<F>(
    g: &F,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    scheme: &SchemeConfig,
) -> Result<Linearization>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    let points = regression_points(mean, cov, scheme)?;
    linearize_with_points(g, &points)
}

/// Linearizes `g` over an existing point set.
pub fn linearize_with_points<F>(g: &F, set: &RegressionPointSet) -> Result<Linearization>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    let ys = set
        .points
        .iter()
        .map(|x| evaluate(g, x))
        .collect::<Result<Vec<_>>>()?;
    let ny = ys[0].len();
    if ys.iter().any(|y| y.len() != ny) {
        return Err(invalid("function output dimension varies between points"));
    }
    let nx = set.mean.len();

    let mut y_mean = DVector::zeros(ny);
    for (y, &w) in ys.iter().zip(&set.weights) {
        y_mean.axpy(w, y, 1.0);
    }
    let mut y_cov = DMatrix::zeros(ny, ny);
    let mut xy_cross = DMatrix::zeros(nx, ny);
    for ((x, y), &w) in set.points.iter().zip(&ys).zip(&set.weights) {
        let dy = y - &y_mean;
        let dx = x - &set.mean;
        y_cov += &dy * dy.transpose() * w;
        xy_cross += &dx * dy.transpose() * w;
    }
    let y_cov = symmetrize(&y_cov);

    // G = (Cˣʸ)ᵀ (Cˣ)⁻¹, i.e. Gᵀ solves Cˣ Gᵀ = Cˣʸ.
    let g_mat = set.solve_cov(&xy_cross)?.transpose();
    let b = &y_mean - &g_mat * &set.mean;

    // Weighted residual scatter; equals Cʸ − G Cˣ Gᵀ and is PSD by construction
    // when all weights are non-negative.
    let mut err_cov = DMatrix::zeros(ny, ny);
    for ((x, y), &w) in set.points.iter().zip(&ys).zip(&set.weights) {
        let e = y - (&g_mat * x + &b);
        err_cov += &e * e.transpose() * w;
    }
    let mut err_cov = symmetrize(&err_cov);
    if set.weights.iter().any(|&w| w < 0.0) {
        err_cov = repair_psd(&(&y_cov - &g_mat * &set.cov * g_mat.transpose()))?;
    }

    Ok(Linearization {
        g: g_mat,
        b,
        y_mean,
        y_cov,
        xy_cross,
        err_cov,
    })
}

/// Deviation `e = g(x) − (G x + b)` of `g` from its affine fit.
pub fn residual_at<F>(lin: &Linearization, g: &F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    if x.len() != lin.g.ncols() {
        return Err(invalid(format!(
            "point has dimension {} but the linearization expects {}",
            x.len(),
            lin.g.ncols()
        )));
    }
    let y = evaluate(g, x)?;
    if y.len() != lin.b.len() {
        return Err(invalid("function output dimension does not match the linearization"));
    }
    Ok(y - (&lin.g * x + &lin.b))
}

/// `ε = trace(Cᵉ)`, clamped at zero.
pub fn error_trace(lin: &Linearization) -> f64 {
    lin.err_cov.trace().max(0.0)
}
