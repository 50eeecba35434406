//! Projections that remove (an estimate of) the factor space from every
//! unit's time series.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{HdcceError, Result};
use crate::linalg::{complement_projector, orthonormal_range};
use crate::panel::PanelDataset;
use crate::solvers::TransformedPanel;
use crate::spectral::SpectralSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionKind {
    HdCce { k_hat: usize },
    Oracle { k: usize },
    ClassicalCce,
    Identity,
}

/// Symmetric idempotent `T × T` matrix `I − Q Qᵀ`, where `Q` is an
/// orthonormal basis of the column space of `basis`.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub mat: DMatrix<f64>,
    pub kind: ProjectionKind,
    /// Columns spanning the removed space (`Ŵ`, `F` or `X̄`).
    pub basis: DMatrix<f64>,
    /// `T − trace(mat)`.
    pub rank_removed: usize,
    pub warning: Option<String>,
    range: DMatrix<f64>,
}

impl ProjectionMatrix {
    fn from_basis(basis: DMatrix<f64>, kind: ProjectionKind) -> Self {
        let t = basis.nrows();
        let range = orthonormal_range(&basis);
        let rank_removed = range.ncols();
        let mat = if rank_removed == t {
            DMatrix::zeros(t, t)
        } else {
            complement_projector(&range)
        };
        Self { mat, kind, basis, rank_removed, warning: None, range }
    }

    pub fn identity(t: usize) -> Self {
        Self {
            mat: DMatrix::identity(t, t),
            kind: ProjectionKind::Identity,
            basis: DMatrix::zeros(t, 0),
            rank_removed: 0,
            warning: None,
            range: DMatrix::zeros(t, 0),
        }
    }

    pub fn t(&self) -> usize {
        self.mat.nrows()
    }

    /// Orthonormal basis of the removed space.
    pub fn range(&self) -> &DMatrix<f64> {
        &self.range
    }

    /// Projects every column of a `T × m` matrix.
    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.t();
        let r = self.rank_removed;
        if r == t {
            DMatrix::zeros(a.nrows(), a.ncols())
        } else if 2 * r < t {
            let coef = self.range.transpose() * a;
            let mut out = a.clone();
            out.gemm(-1.0, &self.range, &coef, 1.0);
            out
        } else {
            &self.mat * a
        }
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.mat * v
    }
}

/// `Π̂ = I − Ŵ(ŴᵀŴ)⁻Ŵᵀ` with `Ŵ = X̄Û` built from the leading `k_hat`
/// eigenvectors. `k_hat = 0` yields the identity with a warning attached.
pub fn hd_projection(xbar: &DMatrix<f64>, spectral: &SpectralSummary, k_hat: usize) -> Result<ProjectionMatrix> {
    let (t, p) = xbar.shape();
    if spectral.p() != p || spectral.t() != t {
        return Err(HdcceError::Dimension(format!(
            "spectral summary is for T={}, p={} but X̄ is {}x{}",
            spectral.t(),
            spectral.p(),
            t,
            p
        )));
    }
    if k_hat == 0 {
        let mut proj = ProjectionMatrix::identity(t);
        proj.kind = ProjectionKind::HdCce { k_hat: 0 };
        proj.warning = Some("no factors detected; projection is the identity".into());
        return Ok(proj);
    }
    if k_hat > p.min(t) || k_hat > spectral.eigvecs.ncols() {
        return Err(HdcceError::InvalidConfig(format!(
            "k_hat = {k_hat} exceeds min(p, T) = {}",
            p.min(t)
        )));
    }
    let w = xbar * spectral.leading(k_hat);
    Ok(ProjectionMatrix::from_basis(w, ProjectionKind::HdCce { k_hat }))
}

/// `Π = I − F(FᵀF)⁻Fᵀ` from the true factors.
pub fn oracle_projection(factors: &DMatrix<f64>) -> ProjectionMatrix {
    let k = factors.ncols();
    ProjectionMatrix::from_basis(factors.clone(), ProjectionKind::Oracle { k })
}

/// `Π̄ = I − X̄(X̄ᵀX̄)⁻X̄ᵀ`. Equals the null matrix once `X̄` has rank `T`.
pub fn classical_cce_projection(xbar: &DMatrix<f64>) -> ProjectionMatrix {
    ProjectionMatrix::from_basis(xbar.clone(), ProjectionKind::ClassicalCce)
}

/// Apply the projection to every unit and stack the result unit-major.
pub fn transform_panel(proj: &ProjectionMatrix, panel: &PanelDataset) -> Result<TransformedPanel> {
    let (n, t, p) = (panel.n, panel.t, panel.p);
    if proj.t() != t {
        return Err(HdcceError::Dimension(format!(
            "projection is {}x{} but panel has T = {}",
            proj.t(),
            proj.t(),
            t
        )));
    }
    let mut x = DMatrix::zeros(n * t, p);
    let mut y = DVector::zeros(n * t);
    for i in 0..n {
        let px = proj.apply(&panel.x[i]);
        x.view_mut((i * t, 0), (t, p)).copy_from(&px);
        let py = proj.apply(&DMatrix::from_column_slice(t, 1, panel.y[i].as_slice()));
        y.rows_mut(i * t, t).copy_from(&py.column(0));
    }
    Ok(TransformedPanel::new(y, x, n, t))
}
