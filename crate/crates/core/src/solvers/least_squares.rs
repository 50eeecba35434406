use nalgebra::DVector;

use super::lasso::{dot, residual};
use super::{LassoFit, TransformedPanel};
use crate::linalg::pinv_solve_psd;

/// Unpenalized fit through the normal equations `X̂ᵀX̂ b = X̂ᵀŶ`, solved with
/// a rank-tolerant pseudo-inverse (minimum-norm under rank deficiency).
pub fn least_squares(panel: &TransformedPanel) -> LassoFit {
    let rows = panel.rows();
    if panel.p > rows {
        log::warn!("least squares with p = {} > nT = {}; solution is minimum-norm", panel.p, rows);
    }
    let gram = panel.x.transpose() * &panel.x;
    let rhs: DVector<f64> = panel.x.transpose() * &panel.y;
    let (b, rank) = pinv_solve_psd(&gram, &rhs);
    let beta_hat: Vec<f64> = b.iter().copied().collect();
    let r = residual(panel, &beta_hat);
    LassoFit {
        objective: dot(&r, &r) / rows as f64,
        active_set: (0..panel.p).filter(|&j| beta_hat[j] != 0.0).collect(),
        beta_hat,
        lambda: 0.0,
        iterations: 0,
        converged: true,
        zero_variance: Vec::new(),
        rank_deficient: rank < panel.p,
        objective_trace: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn identity_design() {
        let v = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let tp = TransformedPanel::new(v.clone(), DMatrix::identity(3, 3), 3, 1);
        let fit = least_squares(&tp);
        for j in 0..3 {
            assert!((fit.beta_hat[j] - v[j]).abs() < 1e-12);
        }
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn duplicated_column_flags_rank() {
        let x = DMatrix::from_fn(6, 2, |r, _| r as f64 + 1.0);
        let y = DVector::from_fn(6, |r, _| 2.0 * (r as f64 + 1.0));
        let fit = least_squares(&TransformedPanel::new(y, x, 3, 2));
        assert!(fit.rank_deficient);
        assert!((fit.beta_hat[0] - 1.0).abs() < 1e-8 && (fit.beta_hat[1] - 1.0).abs() < 1e-8);
    }
}
