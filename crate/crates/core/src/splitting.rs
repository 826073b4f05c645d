//! Component selection, split-direction scoring and moment-preserving splits.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::mixture::{eigendecompose, EigenDecomposition, GaussianComponent, GaussianMixture};
use crate::quadrature::QuadratureRule;
use crate::statlin::{error_trace, residual_at, Linearization};

/// Tolerance on the standard-Gaussian moment constraints of a library.
const LIBRARY_TOLERANCE: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest are treated as deterministic directions.
const ZERO_EIGENVALUE: f64 = 1e-12;

/// Replacement of `N(0, 1)` by a mixture with the same first two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitLibrary {
    offsets: Vec<f64>,
    weights: Vec<f64>,
    variances: Vec<f64>,
}

impl Default for SplitLibrary {
    /// `0.5 N(−0.5, 0.75) + 0.5 N(0.5, 0.75)`.
    fn default() -> Self {
        Self {
            offsets: vec![-0.5, 0.5],
            weights: vec![0.5, 0.5],
            variances: vec![0.75, 0.75],
        }
    }
}

impl SplitLibrary {
    pub fn new(offsets: Vec<f64>, weights: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() || offsets.len() != weights.len() || offsets.len() != variances.len() {
            return Err(invalid("split library lists must be non-empty and of equal length"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || variances.iter().any(|&s| !(s >= 0.0)) {
            return Err(invalid("split library needs positive weights and non-negative variances"));
        }
        let mass: f64 = weights.iter().sum();
        let mean: f64 = weights.iter().zip(&offsets).map(|(w, z)| w * z).sum();
        let second: f64 = weights
            .iter()
            .zip(&offsets)
            .zip(&variances)
            .map(|((w, z), s)| w * (s + z * z))
            .sum();
        if (mass - 1.0).abs() > LIBRARY_TOLERANCE
            || mean.abs() > LIBRARY_TOLERANCE
            || (second - 1.0).abs() > LIBRARY_TOLERANCE
        {
            return Err(invalid(format!(
                "split library does not preserve standard-Gaussian moments (mass {mass}, mean {mean}, second moment {second})"
            )));
        }
        Ok(Self {
            offsets,
            weights,
            variances,
        })
    }

    /// Single-entry library that leaves a component unchanged.
    pub fn identity() -> Self {
        Self {
            offsets: vec![0.0],
            weights: vec![1.0],
            variances: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

/// Selection criterion of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub component_index: usize,
    pub score: f64,
    pub epsilon: f64,
}

/// `ω^γ · (1 − e^{−ε})^{1−γ}` with `0⁰ = 1`.
pub fn selection_score(weight: f64, epsilon: f64, gamma: f64) -> f64 {
    let error_term = -(-epsilon.max(0.0)).exp_m1();
    let s = weight.max(0.0).powf(gamma) * error_term.powf(1.0 - gamma);
    s.clamp(0.0, 1.0)
}

pub fn selection_scores(
    mixture: &GaussianMixture,
    linearizations: &[Linearization],
    gamma: f64,
) -> Result<Vec<SplitScore>> {
    if linearizations.len() != mixture.len() {
        return Err(invalid(format!(
            "{} linearizations for {} components",
            linearizations.len(),
            mixture.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(mixture
        .components()
        .iter()
        .zip(linearizations)
        .enumerate()
        .map(|(i, (c, lin))| {
            let epsilon = error_trace(lin);
            SplitScore {
                component_index: i,
                score: selection_score(c.weight(), epsilon, gamma),
                epsilon,
            }
        })
        .collect())
}

/// Accumulated squared residual along each eigenvector,
/// `d_l = Σ_j α_j ‖e(x̂ + t_j √λ_l v_l)‖²` over the standard-normal rule `(t_j, α_j)`.
///
/// Directions with zero variance yield `None`.
pub fn direction_scores<F>(
    component: &GaussianComponent,
    eig: &EigenDecomposition,
    g: &F,
    lin: &Linearization,
    rule: &QuadratureRule,
) -> Result<Vec<Option<f64>>>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    if eig.dim() != component.dim() {
        return Err(invalid("eigendecomposition does not match the component dimension"));
    }
    let top = eig.eigenvalues.max();
    (0..eig.dim())
        .map(|l| {
            let lambda = eig.eigenvalues[l];
            if !(lambda > ZERO_EIGENVALUE * top) || lambda <= 0.0 {
                return Ok(None);
            }
            let step = eig.vector(l) * lambda.sqrt();
            let mut d = 0.0;
            for (&t, &a) in rule.nodes.iter().zip(&rule.weights) {
                let x = component.mean() + &step * t;
                d += a * residual_at(lin, g, &x)?.norm_squared();
            }
            Ok(Some(d))
        })
        .collect()
}

/// Index of the first maximal score; `None` when no direction is splittable.
pub fn best_direction(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (l, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((l, s));
            }
        }
    }
    best.map(|(l, _)| l)
}

/// Splits `component` along eigenvector `direction` with the library.
pub fn split_component(
    component: &GaussianComponent,
    direction: usize,
    eig: &EigenDecomposition,
    lib: &SplitLibrary,
) -> Result<Vec<GaussianComponent>> {
    if direction >= eig.dim() || eig.dim() != component.dim() {
        return Err(invalid(format!(
            "split direction {direction} is out of range for dimension {}",
            component.dim()
        )));
    }
    let lambda = eig.eigenvalues[direction];
    if !(lambda > 0.0) {
        return Err(invalid("cannot split along a zero-variance direction"));
    }
    let v = eig.vector(direction);
    let outer = &v * v.transpose();
    let root = lambda.sqrt();
    lib.offsets
        .iter()
        .zip(&lib.weights)
        .zip(&lib.variances)
        .map(|((&z, &w), &s2)| {
            GaussianComponent::new(
                component.weight() * w,
                component.mean() + &v * (root * z),
                component.cov() + &outer * (lambda * (s2 - 1.0)),
            )
        })
        .collect()
}

/// Result of one selection-and-split step.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub mixture: GaussianMixture,
    pub component_index: usize,
    pub direction: usize,
}

/// Index of the first maximal score.
pub fn best_component(scores: &[SplitScore]) -> Option<usize> {
    let mut best: Option<&SplitScore> = None;
    for s in scores {
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best.map(|s| s.component_index)
}

/// Splits the best-scoring component along its best direction; children take
/// the parent's position in the component order.
pub fn select_and_split<F>(
    mixture: &GaussianMixture,
    linearizations: &[Linearization],
    g: &F,
    gamma: f64,
    rule: &QuadratureRule,
    lib: &SplitLibrary,
) -> Result<SplitOutcome>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    let scores = selection_scores(mixture, linearizations, gamma)?;
    let index = best_component(&scores).ok_or_else(|| invalid("empty mixture"))?;
    let component = &mixture.components()[index];
    let eig = eigendecompose(component.cov())?;
    let d = direction_scores(component, &eig, g, &linearizations[index], rule)?;
    let direction =
        best_direction(&d).ok_or_else(|| invalid("selected component has no splittable direction"))?;
    let children = split_component(component, direction, &eig, lib)?;
    let mut comps = mixture.components().to_vec();
    comps.splice(index..=index, children);
    Ok(SplitOutcome {
        mixture: GaussianMixture::new(comps)?,
        component_index: index,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::mixture_moments;
    use crate::quadrature::gauss_hermite;
    use crate::statlin::{linearize, SchemeConfig};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn score_examples() {
        assert_relative_eq!(selection_score(0.7, 3.0, 1.0), 0.7);
        assert_relative_eq!(selection_score(0.3, 0.0, 1.0), 0.3);
        assert_eq!(selection_score(0.5, 0.0, 0.0), 0.0);
        assert_relative_eq!(selection_score(0.5, 2.0, 0.0), 1.0 - (-2.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(selection_score(0.5, 0.5, 0.5), 0.443_5, epsilon = 1e-4);
        assert_relative_eq!(selection_score(0.1, 3.0, 0.5), 0.308, epsilon = 1e-3);
        assert_relative_eq!(selection_score(0.9, 0.01, 0.5), 0.0945, epsilon = 2e-4);
    }

    #[test]
    fn library_validation() {
        assert!(SplitLibrary::new(vec![-0.5, 0.5], vec![0.5, 0.5], vec![0.75, 0.75]).is_ok());
        assert!(SplitLibrary::new(vec![-0.5, 0.5], vec![0.5, 0.5], vec![1.0, 1.0]).is_err());
        assert!(SplitLibrary::new(vec![0.0], vec![1.0], vec![1.0]).is_ok());
    }

    #[test]
    fn split_along_major_axis() {
        let c = GaussianComponent::new(1.0, v(&[0.0, 0.0]), DMatrix::from_diagonal(&v(&[4.0, 1.0]))).unwrap();
        let eig = eigendecompose(c.cov()).unwrap();
        let kids = split_component(&c, 0, &eig, &SplitLibrary::default()).unwrap();
        assert_eq!(kids.len(), 2);
        assert_relative_eq!(kids[0].mean()[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(kids[1].mean()[0], 1.0, epsilon = 1e-12);
        for k in &kids {
            assert_relative_eq!(k.weight(), 0.5);
            assert!((k.cov() - DMatrix::from_diagonal(&v(&[3.0, 1.0]))).amax() < 1e-12);
        }
        let (m, cov) = mixture_moments(&GaussianMixture::new(kids).unwrap());
        assert!(m.amax() < 1e-12);
        assert!((cov - c.cov()).amax() < 1e-12);
    }

    #[test]
    fn standard_gaussian_split_and_identity_library() {
        let c = GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap();
        let eig = eigendecompose(c.cov()).unwrap();
        let kids = split_component(&c, 0, &eig, &SplitLibrary::default()).unwrap();
        assert_eq!(kids[0], GaussianComponent::scalar(0.5, -0.5, 0.75).unwrap());
        assert_eq!(kids[1], GaussianComponent::scalar(0.5, 0.5, 0.75).unwrap());
        let same = split_component(&c, 0, &eig, &SplitLibrary::identity()).unwrap();
        assert_eq!(same, vec![c]);
    }

    #[test]
    fn direction_scores_follow_the_nonlinearity() {
        let rule = gauss_hermite(5).unwrap();
        let sq = |x: &DVector<f64>| v(&[x[0] * x[0]]);
        let c = GaussianComponent::new(1.0, v(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        for scheme in [SchemeConfig::unscented(0.5), SchemeConfig::gaussian_estimator_n2(), SchemeConfig::gaussian_estimator_n4()] {
            let lin = linearize(&sq, c.mean(), c.cov(), &scheme).unwrap();
            let eig = eigendecompose(c.cov()).unwrap();
            let d = direction_scores(&c, &eig, &sq, &lin, &rule).unwrap();
            // Eigenvectors of I are e1, e2 in that order.
            assert!(eig.vector(0)[0].abs() > 0.99);
            assert!(d[0].unwrap() > d[1].unwrap(), "{d:?}");
        }

        let cube = |x: &DVector<f64>| v(&[x[1].powi(3)]);
        let c = GaussianComponent::new(1.0, v(&[0.0, 0.0]), DMatrix::from_diagonal(&v(&[9.0, 1.0]))).unwrap();
        let lin = linearize(&cube, c.mean(), c.cov(), &SchemeConfig::gaussian_estimator_n4()).unwrap();
        let eig = eigendecompose(c.cov()).unwrap();
        let d = direction_scores(&c, &eig, &cube, &lin, &rule).unwrap();
        assert_eq!(best_direction(&d), Some(1));
    }

    #[test]
    fn affine_direction_scores_vanish() {
        let rule = gauss_hermite(5).unwrap();
        let f = |x: &DVector<f64>| v(&[3.0 * x[0] - x[1] + 2.0]);
        let c = GaussianComponent::new(1.0, v(&[1.0, 2.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let lin = linearize(&f, c.mean(), c.cov(), &SchemeConfig::default()).unwrap();
        let eig = eigendecompose(c.cov()).unwrap();
        for d in direction_scores(&c, &eig, &f, &lin, &rule).unwrap() {
            assert!(d.unwrap() < 1e-18);
        }
    }

    #[test]
    fn zero_variance_direction_is_excluded() {
        let rule = gauss_hermite(5).unwrap();
        let f = |x: &DVector<f64>| v(&[x[0] * x[0] + x[1] * x[1]]);
        let c = GaussianComponent::new(1.0, v(&[0.0, 0.0]), DMatrix::from_diagonal(&v(&[1.0, 0.0]))).unwrap();
        let lin = linearize(&f, c.mean(), c.cov(), &SchemeConfig::gaussian_estimator_n4()).unwrap();
        let eig = eigendecompose(c.cov()).unwrap();
        let d = direction_scores(&c, &eig, &f, &lin, &rule).unwrap();
        assert!(d[0].is_some());
        assert!(d[1].is_none());
    }

    #[test]
    fn heavier_error_component_is_selected() {
        let rule = gauss_hermite(5).unwrap();
        // ε = 0 for the affine-looking heavy component, large for the light one.
        let f = |x: &DVector<f64>| v(&[if x[0] > 5.0 { (x[0] - 10.0).powi(2) } else { x[0] }]);
        let m = GaussianMixture::new(vec![
            GaussianComponent::scalar(0.9, 0.0, 0.01).unwrap(),
            GaussianComponent::scalar(0.1, 10.0, 1.0).unwrap(),
        ])
        .unwrap();
        let lins: Vec<_> = m
            .components()
            .iter()
            .map(|c| linearize(&f, c.mean(), c.cov(), &SchemeConfig::default()).unwrap())
            .collect();
        let out = select_and_split(&m, &lins, &f, 0.5, &rule, &SplitLibrary::default()).unwrap();
        assert_eq!(out.component_index, 1);
        assert_eq!(out.mixture.len(), 3);
        assert_relative_eq!(out.mixture.components()[0].weight(), 0.9);
        let (m0, c0) = mixture_moments(&m);
        let (m1, c1) = mixture_moments(&out.mixture);
        assert!((m0 - m1).amax() < 1e-10);
        assert!((c0 - c1).amax() < 1e-10);
    }

    #[test]
    fn ties_pick_the_lowest_index() {
        let scores = vec![
            SplitScore { component_index: 0, score: 0.5, epsilon: 1.0 },
            SplitScore { component_index: 1, score: 0.5, epsilon: 1.0 },
        ];
        assert_eq!(best_component(&scores), Some(0));
        assert_eq!(best_direction(&[None, Some(1.0), Some(1.0)]), Some(1));
    }
}
