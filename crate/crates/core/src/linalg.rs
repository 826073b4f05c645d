//! Small dense linear-algebra helpers shared by the filter modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{numerical, Result};

/// Relative tolerance below which negative eigenvalues are treated as roundoff.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// `(C + Cᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute deviation from symmetry, relative to the largest entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

/// Symmetrizes `cov` and clamps roundoff-level negative eigenvalues to zero.
///
/// Eigenvalues below `-PSD_TOLERANCE * λ_max` are reported as an error rather
/// than silently repaired.
pub fn repair_psd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(cov);
    if !sym.iter().all(|v| v.is_finite()) {
        return Err(numerical("covariance contains non-finite entries"));
    }
    if sym.clone().cholesky().is_some() {
        return Ok(sym);
    }
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.max().max(0.0);
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(sym);
    }
    if min < -PSD_TOLERANCE * max || max == 0.0 && min < 0.0 {
        return Err(numerical(format!(
            "covariance is not positive semi-definite (eigenvalue {min:e}, largest {max:e})"
        )));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// Lower-triangular `L` with `L Lᵀ = C` for symmetric PSD `C`.
///
/// Pivots that fall below a relative tolerance are treated as zero, so rank
/// deficient inputs produce a valid (singular) root instead of failing. Returns
/// the root together with its numerical rank.
pub fn semidefinite_cholesky(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let n = c.nrows();
    let scale = (0..n).map(|i| c[(i, i)]).fold(0.0_f64, f64::max);
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut rank = 0;
    for j in 0..n {
        let mut d = c[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(numerical(format!(
                "Cholesky pivot {d:e} at column {j} is negative; input not PSD"
            )));
        }
        if d <= tol {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        rank += 1;
        for i in (j + 1)..n {
            let mut s = c[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok((l, rank))
}

/// `ln det C` for symmetric positive definite `C`.
pub fn ln_det_spd(c: &DMatrix<f64>) -> Result<f64> {
    let chol = c
        .clone()
        .cholesky()
        .ok_or_else(|| numerical("matrix is singular or not positive definite"))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `ln N(x; mean, cov)` via a Cholesky factorization.
pub fn ln_gaussian(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| numerical("covariance is singular or not positive definite"))?;
    Ok(ln_gaussian_chol(x, mean, &chol))
}

pub(crate) fn ln_gaussian_chol(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> f64 {
    let n = x.len() as f64;
    let diff = x - mean;
    let half_ln_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let mut w = diff;
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut w);
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + w.norm_squared()) - half_ln_det
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}

/// Stacks two vectors into `[a; b]`.
pub fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}
