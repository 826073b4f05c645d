//! Gaussian and Gaussian-mixture value types.
//!
//! Every density in the filter (state, noise, predicted and posterior) is a
//! [`GaussianMixture`]. Components are immutable once built; construction
//! symmetrizes the covariance and clamps roundoff-level negative eigenvalues.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use std::f64::consts::PI;

use crate::error::{invalid, numerical, Result};
use crate::linalg::{self, ln_gaussian_chol, repair_psd, PSD_TOLERANCE};

/// Tolerance on `Σ ωᵢ = 1` for a mixture to count as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Condition number above which density evaluation refuses a covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// A weighted Gaussian `ω · N(x; x̂, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(invalid(format!("component weight must be finite and >= 0, got {weight}")));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(invalid(format!(
                "covariance is {}x{} but mean has dimension {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        if mean.is_empty() {
            return Err(invalid("component dimension must be at least 1"));
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(invalid("component mean contains non-finite entries"));
        }
        let cov = repair_psd(&cov)?;
        Ok(Self { weight, mean, cov })
    }

    /// Scalar convenience constructor for one-dimensional components.
    pub fn scalar(weight: f64, mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            weight,
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(invalid(format!("component weight must be finite and >= 0, got {weight}")));
        }
        Ok(Self { weight, ..self.clone() })
    }

    /// Weighted density `ω · N(x; x̂, C)`.
    pub fn density(&self, x: &DVector<f64>) -> Result<f64> {
        let eval = ComponentDensity::new(self)?;
        Ok(eval.evaluate(x))
    }
}

/// An ordered, non-empty list of equal-dimension components.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    normalized: bool,
}

impl GaussianMixture {
    /// Builds a mixture without touching the weights. The `normalized` flag
    /// records whether they already sum to one.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid("a mixture needs at least one component"))?;
        let dim = first.dim();
        if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
            return Err(invalid(format!(
                "component dimensions differ: {} vs {}",
                dim,
                bad.dim()
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        Ok(Self {
            normalized: (total - 1.0).abs() <= NORMALIZATION_TOLERANCE,
            components,
        })
    }

    /// Builds a mixture and rescales the weights to sum to one.
    pub fn normalized(components: Vec<GaussianComponent>) -> Result<Self> {
        let mut m = Self::new(components)?;
        m.normalize()?;
        Ok(m)
    }

    pub fn single(component: GaussianComponent) -> Self {
        let normalized = (component.weight - 1.0).abs() <= NORMALIZATION_TOLERANCE;
        Self {
            components: vec![component],
            normalized,
        }
    }

    /// Unit-weight Gaussian `N(mean, cov)`.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Ok(Self::single(GaussianComponent::new(1.0, mean, cov)?))
    }

    fn normalize(&mut self) -> Result<()> {
        let total = self.total_weight();
        if !(total > 0.0 && total.is_finite()) {
            return Err(numerical(format!("cannot normalize mixture with total weight {total}")));
        }
        for c in &mut self.components {
            c.weight /= total;
        }
        self.normalized = true;
        Ok(())
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn into_components(self) -> Vec<GaussianComponent> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Overall mean and covariance of the mixture.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        mixture_moments(self)
    }

    /// Precomputes the factorizations needed for repeated density evaluation.
    pub fn density_evaluator(&self) -> Result<MixtureDensity> {
        let parts = self
            .components
            .iter()
            .map(ComponentDensity::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(MixtureDensity { parts })
    }
}

/// Orthonormal eigenvectors (columns) and nonincreasing eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvectors: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, l: usize) -> DVector<f64> {
        self.eigenvectors.column(l).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues)
            * self.eigenvectors.transpose()
    }
}

/// Overall moments `x̂ = Σ ωᵢ x̂ᵢ`, `C = Σ ωᵢ (Cᵢ + x̂ᵢ x̂ᵢᵀ) − x̂ x̂ᵀ`.
///
/// The weights are divided by their sum, so unnormalized mixtures yield the
/// moments of their normalized counterpart. Deviations are accumulated around
/// the mixture mean, which is algebraically the same formula but loses less
/// precision when the means are large.
pub fn mixture_moments(m: &GaussianMixture) -> (DVector<f64>, DMatrix<f64>) {
    let total = m.total_weight();
    let n = m.dim();
    let mut mean = DVector::zeros(n);
    for c in &m.components {
        mean.axpy(c.weight / total, &c.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for c in &m.components {
        let w = c.weight / total;
        let d = &c.mean - &mean;
        cov += (&c.cov + &d * d.transpose()) * w;
    }
    (mean, linalg::symmetrize(&cov))
}

/// Mixture density `Σ ωᵢ N(x; x̂ᵢ, Cᵢ)`.
pub fn evaluate_density(m: &GaussianMixture, x: &DVector<f64>) -> Result<f64> {
    if x.len() != m.dim() {
        return Err(invalid(format!(
            "point has dimension {} but mixture has dimension {}",
            x.len(),
            m.dim()
        )));
    }
    Ok(m.density_evaluator()?.evaluate(x))
}

/// Cached factorization of one component for repeated evaluation.
#[derive(Debug, Clone)]
struct ComponentDensity {
    ln_weight: f64,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl ComponentDensity {
    fn new(c: &GaussianComponent) -> Result<Self> {
        let eig = SymmetricEigen::new(c.cov.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 0.0) || max / min > MAX_CONDITION {
            return Err(numerical(format!(
                "covariance is singular or ill-conditioned (eigenvalues {min:e}..{max:e})"
            )));
        }
        let chol = c
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| numerical("Cholesky factorization of covariance failed"))?;
        Ok(Self {
            ln_weight: c.weight.ln(),
            mean: c.mean.clone(),
            chol,
        })
    }

    fn ln_evaluate(&self, x: &DVector<f64>) -> f64 {
        self.ln_weight + ln_gaussian_chol(x, &self.mean, &self.chol)
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.ln_evaluate(x).exp()
    }
}

/// A mixture prepared for fast repeated density evaluation.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    parts: Vec<ComponentDensity>,
}

impl MixtureDensity {
    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.parts.iter().map(|p| p.evaluate(x)).sum()
    }

    /// `ln` of the density, computed with a log-sum-exp so tails do not underflow.
    pub fn ln_evaluate(&self, x: &DVector<f64>) -> f64 {
        let logs: Vec<f64> = self.parts.iter().map(|p| p.ln_evaluate(x)).collect();
        log_sum_exp(&logs)
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Closed form of `∫ ωₐ N(x; x̂ₐ, Cₐ) · ω_b N(x; x̂_b, C_b) dx = ωₐ ω_b N(x̂ₐ; x̂_b, Cₐ + C_b)`.
pub fn gaussian_product_integral(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(invalid("product integral of components with different dimensions"));
    }
    if a.weight == 0.0 || b.weight == 0.0 {
        return Ok(0.0);
    }
    let sum = &a.cov + &b.cov;
    let chol = sum
        .cholesky()
        .ok_or_else(|| numerical("sum of covariances is singular"))?;
    Ok((a.weight.ln() + b.weight.ln() + ln_gaussian_chol(&a.mean, &b.mean, &chol)).exp())
}

fn cross_energy(f: &[GaussianComponent], g: &[GaussianComponent]) -> Result<f64> {
    let mut total = 0.0;
    for a in f {
        for b in g {
            total += gaussian_product_integral(a, b)?;
        }
    }
    Ok(total)
}

fn self_energy(f: &[GaussianComponent]) -> Result<f64> {
    let mut total = 0.0;
    for (i, a) in f.iter().enumerate() {
        total += gaussian_product_integral(a, a)?;
        for b in &f[i + 1..] {
            total += 2.0 * gaussian_product_integral(a, b)?;
        }
    }
    Ok(total)
}

fn isd_from_energies(ff: f64, gg: f64, fg: f64) -> f64 {
    let denom = ff + gg;
    if denom <= 0.0 {
        return 0.0;
    }
    ((ff + gg - 2.0 * fg) / denom).clamp(0.0, 1.0)
}

/// Normalized integral squared distance `∫(f−g)² / (∫f² + ∫g²)`, in `[0, 1]`.
pub fn normalized_isd(f: &GaussianMixture, g: &GaussianMixture) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(invalid("ISD between mixtures of different dimensions"));
    }
    let ff = self_energy(&f.components)?;
    let gg = self_energy(&g.components)?;
    let fg = cross_energy(&f.components, &g.components)?;
    Ok(isd_from_energies(ff, gg, fg))
}

/// Incrementally tracks the ISD between a fixed reference mixture and a
/// mixture that evolves by replacing one component with several.
///
/// Each candidate replacement costs O(L) product integrals instead of O(L²).
#[derive(Debug, Clone)]
pub struct IsdTracker {
    reference: Vec<GaussianComponent>,
    current: Vec<GaussianComponent>,
    ff: f64,
    gg: f64,
    fg: f64,
}

/// Energies of a not-yet-committed replacement.
#[derive(Debug, Clone, Copy)]
pub struct IsdCandidate {
    gg: f64,
    fg: f64,
    deviation: f64,
}

impl IsdCandidate {
    pub fn deviation(&self) -> f64 {
        self.deviation
    }
}

impl IsdTracker {
    pub fn new(reference: &GaussianMixture) -> Result<Self> {
        let ff = self_energy(&reference.components)?;
        Ok(Self {
            reference: reference.components.clone(),
            current: reference.components.clone(),
            ff,
            gg: ff,
            fg: ff,
        })
    }

    pub fn deviation(&self) -> f64 {
        isd_from_energies(self.ff, self.gg, self.fg)
    }

    /// Evaluates replacing `current[index]` by `children` without committing.
    pub fn candidate(&self, index: usize, children: &[GaussianComponent]) -> Result<IsdCandidate> {
        let parent = &self.current[index];
        let mut g_parent = 0.0;
        let mut rest_children = 0.0;
        for (k, c) in self.current.iter().enumerate() {
            g_parent += gaussian_product_integral(c, parent)?;
            if k != index {
                for child in children {
                    rest_children += gaussian_product_integral(c, child)?;
                }
            }
        }
        let pp = gaussian_product_integral(parent, parent)?;
        let cc = self_energy(children)?;
        let gg = self.gg - 2.0 * g_parent + pp + 2.0 * rest_children + cc;
        let f_parent: f64 = self
            .reference
            .iter()
            .map(|r| gaussian_product_integral(r, parent))
            .sum::<Result<f64>>()?;
        let f_children = cross_energy(&self.reference, children)?;
        let fg = self.fg - f_parent + f_children;
        Ok(IsdCandidate {
            gg,
            fg,
            deviation: isd_from_energies(self.ff, gg, fg),
        })
    }

    pub fn commit(&mut self, index: usize, children: &[GaussianComponent], candidate: IsdCandidate) {
        self.current.splice(index..=index, children.iter().cloned());
        self.gg = candidate.gg;
        self.fg = candidate.fg;
    }
}

/// Eigendecomposition with eigenvalues sorted nonincreasing and each
/// eigenvector's first non-negligible entry made positive.
pub fn eigendecompose(cov: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(invalid("eigendecomposition needs a non-empty square matrix"));
    }
    if linalg::asymmetry(cov) > 1e-9 {
        return Err(invalid("matrix is not symmetric"));
    }
    let sym = linalg::symmetrize(cov);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the solver's order among equal eigenvalues.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let floor = -PSD_TOLERANCE * eig.eigenvalues[order[0]].max(cov.amax());
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[src];
        if lambda < 0.0 {
            if lambda < floor {
                return Err(numerical(format!(
                    "matrix is not positive semi-definite (eigenvalue {lambda:e})"
                )));
            }
            lambda = 0.0;
        }
        values[dst] = lambda;
        let mut v = eig.eigenvectors.column(src).into_owned();
        let pivot = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if pivot < 0.0 {
            v = -v;
        }
        vectors.set_column(dst, &v);
    }
    Ok(EigenDecomposition {
        eigenvectors: vectors,
        eigenvalues: values,
    })
}

/// Univariate normal density, used by the grid-based routines.
pub(crate) fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}
