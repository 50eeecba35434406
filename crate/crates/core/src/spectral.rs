//! Spectrum of the cross-sectional average covariance and factor counting.

use nalgebra::{DMatrix, DVector};

use crate::error::{HdcceError, Result};
use crate::linalg::{complete_basis, fix_signs, sym_eigen_desc, RANK_TOL};

/// Eigenstructure of `Σ̂ = X̄ᵀX̄ / T`.
///
/// When `p > T` only the leading `T` eigenvectors are stored (`eigvecs` is
/// `p × T`); the trailing `p − T` eigenvalues are exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub xbar: DMatrix<f64>,
    /// Descending, non-negative.
    pub eigvals: DVector<f64>,
    /// Column `k` pairs with `eigvals[k]`.
    pub eigvecs: DMatrix<f64>,
}

impl SpectralSummary {
    pub fn t(&self) -> usize {
        self.xbar.nrows()
    }

    pub fn p(&self) -> usize {
        self.xbar.ncols()
    }

    /// The `p × p` matrix `Σ̂`. Materialized on demand since it can be large.
    pub fn sigma_hat(&self) -> DMatrix<f64> {
        self.xbar.transpose() * &self.xbar / self.t() as f64
    }

    pub fn lambda1(&self) -> f64 {
        self.eigvals[0]
    }

    /// Leading `k` eigenvectors as a `p × k` matrix.
    pub fn leading(&self, k: usize) -> DMatrix<f64> {
        self.eigvecs.columns(0, k).into_owned()
    }
}

/// Eigendecomposition of `Σ̂` built from the `T × p` cross-sectional means.
pub fn spectral_summary(xbar: &DMatrix<f64>) -> Result<SpectralSummary> {
    let (t, p) = xbar.shape();
    if t == 0 || p == 0 {
        return Err(HdcceError::Dimension("spectral summary needs T >= 1 and p >= 1".into()));
    }
    if let Some(pos) = xbar.iter().position(|v| !v.is_finite()) {
        return Err(HdcceError::NonFiniteInput(format!(
            "cross-sectional mean entry (t={}, j={}) is not finite",
            pos % t + 1,
            pos / t + 1
        )));
    }
    let tf = t as f64;

    if p <= t {
        let sigma = xbar.transpose() * xbar / tf;
        let (mut vals, vecs) = sym_eigen_desc(sigma);
        vals.apply(|v| *v = v.max(0.0));
        return Ok(SpectralSummary { xbar: xbar.clone(), eigvals: vals, eigvecs: vecs });
    }

    // p > T: the non-zero spectrum of Σ̂ equals that of X̄X̄ᵀ/T, with
    // eigenvectors u = X̄ᵀv / √(Tλ).
    let dual = xbar * xbar.transpose() / tf;
    let (vals, v) = sym_eigen_desc(dual);
    let top = vals[0].max(0.0);
    let mut eigvals = DVector::zeros(p);
    let mut cols = Vec::with_capacity(t);
    for k in 0..t {
        if top > 0.0 && vals[k] > RANK_TOL * top {
            eigvals[k] = vals[k];
            let u = xbar.transpose() * v.column(k) / (tf * vals[k]).sqrt();
            cols.push(u);
        } else {
            break;
        }
    }
    let kept = if cols.is_empty() { DMatrix::zeros(p, 0) } else { DMatrix::from_columns(&cols) };
    let mut eigvecs = complete_basis(&kept, t);
    fix_signs(&mut eigvecs);
    Ok(SpectralSummary { xbar: xbar.clone(), eigvals, eigvecs })
}

/// `K̂ = #{j : λ̂_j ≥ τ}`.
pub fn khat_threshold(eigvals: &[f64], tau: f64) -> usize {
    eigvals.iter().filter(|&&v| v >= tau).count()
}

/// `τ = α · λ̂₁`.
pub fn default_tau(eigvals: &[f64], alpha: f64) -> Result<f64> {
    let top = eigvals.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(HdcceError::ZeroSpectrum);
    }
    Ok(alpha * top)
}

/// Smallest `k` whose cumulative eigenvalue share reaches `1 − α`.
pub fn ktilde_ratio(eigvals: &[f64], alpha: f64) -> Result<usize> {
    let total: f64 = eigvals.iter().sum();
    if !(total > 0.0) {
        return Err(HdcceError::ZeroSpectrum);
    }
    // Relative slack of 1e-12 keeps exact ties (e.g. a flat spectrum) on the
    // right side of the comparison despite summation rounding.
    let target = (1.0 - alpha) * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (k, v) in eigvals.iter().enumerate() {
        cum += v;
        if cum >= target {
            return Ok(k + 1);
        }
    }
    Ok(eigvals.len())
}

/// Rows of the `k,eigval,share,cumshare` scree table.
pub fn scree_rows(eigvals: &[f64]) -> Vec<(usize, f64, f64, f64)> {
    let total: f64 = eigvals.iter().sum();
    let mut cum = 0.0;
    eigvals
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            cum += v;
            let (share, cumshare) = if total > 0.0 { (v / total, cum / total) } else { (0.0, 0.0) };
            (k + 1, v, share, cumshare)
        })
        .collect()
}
