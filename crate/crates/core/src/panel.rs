use nalgebra::{DMatrix, DVector};

use crate::error::{HdcceError, Result};

/// Observed panel: per-unit response series and regressor blocks.
///
/// `y[i]` has length `t` and `x[i]` is the `t × p` regressor matrix of unit
/// `i`, so `x[i][(s, j)]` is regressor `j` of unit `i` at time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub n: usize,
    pub t: usize,
    pub p: usize,
    pub y: Vec<DVector<f64>>,
    pub x: Vec<DMatrix<f64>>,
}

impl PanelDataset {
    /// Build a panel after checking shapes and finiteness. Locations in
    /// `NonFinite` errors are 1-based.
    pub fn new(y: Vec<DVector<f64>>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(HdcceError::Dimension("panel has no units".into()));
        }
        if x.len() != n {
            return Err(HdcceError::Dimension(format!(
                "{} response series but {} regressor blocks",
                n,
                x.len()
            )));
        }
        let t = y[0].len();
        let p = x[0].ncols();
        if t == 0 || p == 0 {
            return Err(HdcceError::Dimension("panel needs T >= 1 and p >= 1".into()));
        }
        for (i, (yi, xi)) in y.iter().zip(&x).enumerate() {
            if yi.len() != t || xi.nrows() != t || xi.ncols() != p {
                return Err(HdcceError::Dimension(format!(
                    "unit {} has shape (T={}, X={}x{}), expected (T={}, X={}x{})",
                    i + 1,
                    yi.len(),
                    xi.nrows(),
                    xi.ncols(),
                    t,
                    t,
                    p
                )));
            }
            for s in 0..t {
                if !yi[s].is_finite() {
                    return Err(HdcceError::NonFinite { unit: i + 1, time: s + 1, j: 0 });
                }
                for j in 0..p {
                    if !xi[(s, j)].is_finite() {
                        return Err(HdcceError::NonFinite { unit: i + 1, time: s + 1, j: j + 1 });
                    }
                }
            }
        }
        Ok(Self { n, t, p, y, x })
    }

    /// Cross-sectional averages `X̄` (`t × p`).
    pub fn cross_sectional_means(&self) -> DMatrix<f64> {
        cross_sectional_means(&self.x).expect("panel shapes are validated at construction")
    }

    /// Panel restricted to a subset of regressor columns (0-based).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p) {
            return Err(HdcceError::InvalidConfig(format!(
                "column {} out of range for p = {}",
                bad + 1,
                self.p
            )));
        }
        let x = self.x.iter().map(|xi| xi.select_columns(cols)).collect();
        Ok(Self { n: self.n, t: self.t, p: cols.len(), y: self.y.clone(), x })
    }
}

/// `X̄_{t,j} = n⁻¹ Σ_i X_{it,j}` over a slice of unit blocks.
pub fn cross_sectional_means(x: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = x
        .first()
        .ok_or_else(|| HdcceError::Dimension("no units to average".into()))?;
    let (t, p) = first.shape();
    let mut acc = DMatrix::zeros(t, p);
    for (i, xi) in x.iter().enumerate() {
        if xi.shape() != (t, p) {
            return Err(HdcceError::Dimension(format!(
                "unit {} is {}x{}, expected {}x{}",
                i + 1,
                xi.nrows(),
                xi.ncols(),
                t,
                p
            )));
        }
        acc += xi;
    }
    acc /= x.len() as f64;
    Ok(acc)
}
