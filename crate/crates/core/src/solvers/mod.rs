//! Penalized and unpenalized least squares on a projected panel, plus
//! penalty selection.

mod cv;
mod lasso;
mod least_squares;
mod noise;

pub use cv::{auto_grid, cv_lambda, fold_assignment, CvResult, LambdaGrid, AUTO_GRID_LEN, AUTO_GRID_RATIO, CV_STOP_RISE};
pub use lasso::{kkt_violation, lambda_max, lasso, lasso_path, objective, LassoFit, LassoOptions};
pub use least_squares::least_squares;
pub use noise::{effective_noise_draws, effective_noise_lambda, theory_lambda_rate};

use nalgebra::{DMatrix, DVector};

/// Stacked projected data: `y` has `n·T` entries, `x` is `n·T × p`, both
/// unit-major (rows `i·T .. (i+1)·T` belong to unit `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub n: usize,
    pub t: usize,
    pub p: usize,
}

impl TransformedPanel {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, n: usize, t: usize) -> Self {
        assert_eq!(y.len(), n * t, "response length must be n*T");
        assert_eq!(x.nrows(), n * t, "design rows must be n*T");
        let p = x.ncols();
        Self { y, x, n, t, p }
    }

    pub fn rows(&self) -> usize {
        self.n * self.t
    }

    /// Column `j` of the stacked design.
    pub fn column(&self, j: usize) -> &[f64] {
        let rows = self.rows();
        &self.x.as_slice()[j * rows..(j + 1) * rows]
    }

    /// Copy of the panel restricted to the given units, in the given order.
    pub fn subset_units(&self, units: &[usize]) -> Self {
        let t = self.t;
        let rows = units.len() * t;
        let mut x = DMatrix::zeros(rows, self.p);
        let mut y = DVector::zeros(rows);
        for (dst, &u) in units.iter().enumerate() {
            y.rows_mut(dst * t, t).copy_from(&self.y.rows(u * t, t));
        }
        for j in 0..self.p {
            let src = self.column(j);
            let col = &mut x.as_mut_slice()[j * rows..(j + 1) * rows];
            for (dst, &u) in units.iter().enumerate() {
                col[dst * t..(dst + 1) * t].copy_from_slice(&src[u * t..(u + 1) * t]);
            }
        }
        Self { y, x, n: units.len(), t, p: self.p }
    }
}
