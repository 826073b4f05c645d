//! One-dimensional Gaussian quadrature rules.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre rule with `n` nodes on `[a, b]`, ascending nodes.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(invalid("quadrature needs at least one node"));
    }
    if !(a < b) {
        return Err(invalid(format!("empty interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Probabilists' Gauss–Hermite rule: `E[f(Z)]`, `Z ~ N(0, 1)`, weights sum to one.
///
/// Nodes are ascending and symmetric about zero.
pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(invalid("quadrature needs at least one node"));
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
    // Enforce exact symmetry so odd moments vanish.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(5, -1.0, 3.0).unwrap();
        // Exact up to degree 9.
        let exact = (3.0f64.powi(9) + 1.0) / 9.0;
        assert_relative_eq!(rule.integrate(|x| x.powi(8)), exact, max_relative = 1e-13);
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 4.0, epsilon = 1e-13);
    }

    #[test]
    fn legendre_many_nodes_stays_accurate() {
        let rule = gauss_legendre(2000, -7.0, 9.0).unwrap();
        let v = rule.integrate(|x| (-0.5 * (x - 1.0) * (x - 1.0)).exp());
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-10);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hermite_matches_gaussian_moments() {
        let rule = gauss_hermite(5).unwrap();
        assert_relative_eq!(rule.integrate(|x| x * x), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rule.integrate(|x| x.powi(4)), 3.0, epsilon = 1e-11);
        assert_relative_eq!(rule.integrate(|x| x.powi(8)), 105.0, max_relative = 1e-10);
        assert_relative_eq!(rule.integrate(|x| x.powi(3)), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn hermite_three_nodes_are_closed_form() {
        let rule = gauss_hermite(3).unwrap();
        assert_relative_eq!(rule.nodes[2], 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(rule.weights[1], 2.0 / 3.0, epsilon = 1e-12);
    }
}
