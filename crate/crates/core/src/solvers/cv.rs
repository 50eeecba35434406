use rand::seq::SliceRandom;
use serde::Serialize;

use std::ops::Range;

use super::lasso::{dot, lambda_max, CovarianceDesign, Design, Gram, PathWalker, ResidualDesign, GRAM_MAX_P};
use super::{LassoOptions, TransformedPanel};
use crate::error::{HdcceError, Result};
use crate::rng::{stream_rng, Stream};

pub const AUTO_GRID_LEN: usize = 50;
/// Smallest grid point as a fraction of `λ_max`.
pub const AUTO_GRID_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// `AUTO_GRID_LEN` log-spaced points from `λ_max` down to
    /// `AUTO_GRID_RATIO · λ_max` of the full data.
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    /// Evaluated grid points, in walking order.
    pub lambda_grid: Vec<f64>,
    /// Mean held-out squared error per grid point.
    pub cv_errors: Vec<f64>,
    pub lambda_star: f64,
    /// Fold index of each unit.
    pub fold_assignment: Vec<usize>,
    /// Number of path fits that hit the sweep cap.
    pub nonconverged_fits: usize,
}

/// Log-spaced descending grid from `λ_max` of `panel`.
pub fn auto_grid(panel: &TransformedPanel) -> Vec<f64> {
    let mut top = lambda_max(panel);
    if !(top > 0.0) {
        top = 1.0;
    }
    let n = AUTO_GRID_LEN;
    let step = AUTO_GRID_RATIO.ln() / (n - 1) as f64;
    (0..n).map(|k| top * (step * k as f64).exp()).collect()
}

/// Random balanced assignment of `n` units to `folds` folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::CrossValidation));
    let mut assignment = vec![0; n];
    for (pos, &unit) in order.iter().enumerate() {
        assignment[unit] = pos % folds;
    }
    assignment
}

/// K-fold cross-validation over units. All `T` rows of a unit stay in the
/// same fold; each training fit walks the grid with warm starts.
///
/// The walk stops early once the mean held-out error exceeds
/// `(1 + CV_STOP_RISE)` times its running minimum; `lambda_grid` and
/// `cv_errors` then cover only the evaluated prefix.
pub fn cv_lambda(
    panel: &TransformedPanel,
    folds: usize,
    grid: &LambdaGrid,
    seed: u64,
    opts: &LassoOptions,
) -> Result<CvResult> {
    if folds < 2 {
        return Err(HdcceError::InvalidConfig("cross-validation needs at least 2 folds".into()));
    }
    if panel.n < folds {
        return Err(HdcceError::InvalidConfig(format!(
            "{} units cannot fill {} folds",
            panel.n, folds
        )));
    }
    let lambda_grid = match grid {
        LambdaGrid::Auto => auto_grid(panel),
        LambdaGrid::Explicit(g) => {
            if g.is_empty() || g.iter().any(|v| !(*v > 0.0)) || g.windows(2).any(|w| w[0] < w[1]) {
                return Err(HdcceError::InvalidConfig("lambda grid must be descending positive values".into()));
            }
            g.clone()
        }
    };
    let assignment = fold_assignment(panel.n, folds, seed);
    let t = panel.t;
    // Units ordered by fold, so every held-out block is one contiguous row range.
    let mut order: Vec<usize> = (0..panel.n).collect();
    order.sort_by_key(|&i| (assignment[i], i));
    let stacked = panel.subset_units(&order);
    let mut blocks: Vec<Range<usize>> = Vec::with_capacity(folds);
    let mut at = 0;
    for f in 0..folds {
        let len = assignment.iter().filter(|&&a| a == f).count() * t;
        blocks.push(at..at + len);
        at += len;
    }
    let rows = stacked.rows();
    let path_opts = LassoOptions { warm_start: None, ..opts.clone() };
    let (errors, nonconverged) = if panel.p <= GRAM_MAX_P {
        let full = Gram::from_panel(&stacked);
        let grams: Vec<Gram> = blocks
            .iter()
            .map(|h| {
                let diag = (0..stacked.p)
                    .map(|j| {
                        let x = stacked.column(j);
                        dot(&x[..h.start], &x[..h.start]) + dot(&x[h.end..], &x[h.end..])
                    })
                    .collect();
                full.without(&Gram::from_rows(&stacked, h.clone()), diag)
            })
            .collect();
        let walkers = grams.iter().map(|g| PathWalker::new(CovarianceDesign::new(g), &path_opts)).collect();
        lockstep(walkers, &stacked, &blocks, &lambda_grid)
    } else {
        let walkers = blocks
            .iter()
            .map(|h| PathWalker::new(ResidualDesign::new(&stacked, &[0..h.start, h.end..rows]), &path_opts))
            .collect();
        lockstep(walkers, &stacked, &blocks, &lambda_grid)
    };
    let lambda_grid = lambda_grid[..errors.len()].to_vec();
    if nonconverged > 0 {
        log::warn!("cross-validation: {nonconverged} path fit(s) did not converge");
    }
    let mut best = 0;
    for k in 1..errors.len() {
        if errors[k] < errors[best] {
            best = k;
        }
    }
    Ok(CvResult {
        lambda_star: lambda_grid[best],
        lambda_grid,
        cv_errors: errors,
        fold_assignment: assignment,
        nonconverged_fits: nonconverged,
    })
}

/// Held-out error rises this far above its running minimum before the
/// remaining grid points are skipped.
pub const CV_STOP_RISE: f64 = 0.1;

/// Advances every fold's path one grid point at a time and returns the mean
/// held-out error per evaluated point plus the count of non-converged fits.
fn lockstep<D: Design>(
    mut walkers: Vec<PathWalker<D>>,
    stacked: &TransformedPanel,
    blocks: &[Range<usize>],
    grid: &[f64],
) -> (Vec<f64>, usize) {
    let folds = walkers.len() as f64;
    let mut errors = Vec::with_capacity(grid.len());
    let mut nonconverged = 0;
    let mut best = f64::INFINITY;
    for &lambda in grid {
        let mut total = 0.0;
        for (walker, hold) in walkers.iter_mut().zip(blocks) {
            let fit = walker.fit(lambda);
            if !fit.converged {
                nonconverged += 1;
            }
            total += held_out_mse(stacked, hold, &fit.beta_hat);
        }
        let e = total / folds;
        errors.push(e);
        best = best.min(e);
        if e > (1.0 + CV_STOP_RISE) * best {
            break;
        }
    }
    (errors, nonconverged)
}

fn held_out_mse(panel: &TransformedPanel, hold: &Range<usize>, b: &[f64]) -> f64 {
    let mut r = panel.y.as_slice()[hold.clone()].to_vec();
    for (j, &bj) in b.iter().enumerate() {
        if bj != 0.0 {
            for (ri, xi) in r.iter_mut().zip(&panel.column(j)[hold.clone()]) {
                *ri -= bj * xi;
            }
        }
    }
    dot(&r, &r) / hold.len() as f64
}
