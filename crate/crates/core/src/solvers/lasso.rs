use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::TransformedPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions {
    /// Convergence tolerance on the largest coordinate change, relative to
    /// `max(1, ‖b‖_∞)`.
    pub tol: f64,
    /// Cap on coordinate sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
    pub warm_start: Option<Vec<f64>>,
    /// Keep the objective value after every sweep.
    pub record_objective: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000, warm_start: None, record_objective: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub beta_hat: Vec<f64>,
    pub lambda: f64,
    /// `(nT)⁻¹‖Ŷ − X̂b‖² + λ‖b‖₁` at `beta_hat`.
    pub objective: f64,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Columns with zero norm that were left untouched (only flagged when
    /// `λ = 0`, where their coefficient is not identified).
    pub zero_variance: Vec<usize>,
    /// Set by the least-squares solver when the normal equations are singular.
    pub rank_deficient: bool,
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Smallest penalty with an all-zero solution: `2‖X̂ᵀŶ‖_∞ / (nT)`.
pub fn lambda_max(panel: &TransformedPanel) -> f64 {
    let rows = panel.rows() as f64;
    (0..panel.p)
        .map(|j| dot(panel.column(j), panel.y.as_slice()).abs())
        .fold(0.0, f64::max)
        * 2.0
        / rows
}

/// Objective value at `b`.
pub fn objective(panel: &TransformedPanel, b: &[f64], lambda: f64) -> f64 {
    let r = residual(panel, b);
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    dot(&r, &r) / panel.rows() as f64 + lambda * l1
}

/// Largest violation of the lasso optimality conditions at `b`, using the
/// gradient `g_j = 2(nT)⁻¹ X̂_jᵀ(X̂b − Ŷ)`: `|g_j| − λ` (clamped at 0) for
/// zero coordinates, `|g_j + λ·sign(b_j)|` otherwise.
pub fn kkt_violation(panel: &TransformedPanel, b: &[f64], lambda: f64) -> f64 {
    let r = residual(panel, b);
    kkt_from_residual(panel, b, lambda, &r)
}

fn kkt_from_residual(panel: &TransformedPanel, b: &[f64], lambda: f64, r: &[f64]) -> f64 {
    let scale = -2.0 / panel.rows() as f64;
    let mut worst = 0.0_f64;
    for (j, &bj) in b.iter().enumerate() {
        worst = worst.max(kkt_term(scale * dot(panel.column(j), r), bj, lambda));
    }
    worst
}

/// Designs with at most this many columns are fitted along a path in
/// covariance mode (precomputed Gram matrix).
pub(crate) const GRAM_MAX_P: usize = 1000;

/// Cyclic coordinate descent for `(nT)⁻¹‖Ŷ − X̂b‖² + λ‖b‖₁`.
///
/// Sweeps alternate between the working coordinate set and the current
/// active set. A fit is reported converged only when a working sweep moves no
/// coordinate by more than the tolerance and the optimality conditions hold
/// to `10·tol` over all coordinates.
pub fn lasso(panel: &TransformedPanel, lambda: f64, opts: &LassoOptions) -> LassoFit {
    let all = [0..panel.rows()];
    PathWalker::new(ResidualDesign::new(panel, &all), opts).fit(lambda)
}

/// Fits along a grid with warm starts. The grid is used in the given order;
/// from the second point on, coordinates are screened with the sequential
/// strong rule and re-admitted whenever the optimality check flags them.
pub fn lasso_path(panel: &TransformedPanel, grid: &[f64], opts: &LassoOptions) -> Vec<LassoFit> {
    if panel.p <= GRAM_MAX_P {
        let gram = Gram::from_panel(panel);
        let mut walker = PathWalker::new(CovarianceDesign::new(&gram), opts);
        grid.iter()
            .map(|&lambda| {
                let mut fit = walker.fit(lambda);
                fit.objective = objective(panel, &fit.beta_hat, lambda);
                fit
            })
            .collect()
    } else {
        let all = [0..panel.rows()];
        let mut walker = PathWalker::new(ResidualDesign::new(panel, &all), opts);
        grid.iter().map(|&lambda| walker.fit(lambda)).collect()
    }
}

/// Warm-started fits at successive penalties on one design.
pub(crate) struct PathWalker<D> {
    design: D,
    b: Vec<f64>,
    /// Previous penalty and `|g|` at its solution, for strong-rule screening.
    prev: Option<(f64, Vec<f64>)>,
    opts: LassoOptions,
}

impl<D: Design> PathWalker<D> {
    pub fn new(design: D, opts: &LassoOptions) -> Self {
        let p = design.sq().len();
        let b = match &opts.warm_start {
            Some(w) if w.len() == p => w.clone(),
            _ => vec![0.0; p],
        };
        Self { design, b, prev: None, opts: LassoOptions { warm_start: None, ..opts.clone() } }
    }

    pub fn fit(&mut self, lambda: f64) -> LassoFit {
        let screen = self.prev.as_ref().map(|(lp, grad)| {
            let cut = 2.0 * lambda - lp;
            grad.iter().map(|&g| g >= cut).collect::<Vec<bool>>()
        });
        let out = descend(&mut self.design, &mut self.b, lambda, screen.as_deref(), &self.opts);
        let b = self.b.clone();
        let l1: f64 = b.iter().map(|v| v.abs()).sum();
        let objective = self.design.rss(&b) / self.design.rows() as f64 + lambda * l1;
        self.prev = Some((lambda, out.abs_grad));
        LassoFit {
            active_set: (0..b.len()).filter(|&j| b[j] != 0.0).collect(),
            beta_hat: b,
            lambda,
            objective,
            iterations: out.iterations,
            converged: out.converged,
            zero_variance: out.zero_variance,
            rank_deficient: false,
            objective_trace: out.trace,
        }
    }
}

/// Sufficient statistics `X̂ᵀX̂`, `X̂ᵀŶ`, `ŶᵀŶ` of a stacked design.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    pub g: DMatrix<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
    /// Exact diagonal of `g`, kept separately so that zero columns stay zero.
    pub diag: Vec<f64>,
    pub rows: usize,
}

impl Gram {
    pub fn from_panel(panel: &TransformedPanel) -> Self {
        Self::from_rows(panel, 0..panel.rows())
    }

    /// Statistics of a contiguous block of rows.
    pub fn from_rows(panel: &TransformedPanel, range: Range<usize>) -> Self {
        let x = panel.x.rows(range.start, range.len()).into_owned();
        let g = x.transpose() * &x;
        let y = &panel.y.as_slice()[range.clone()];
        let xty = (0..panel.p).map(|j| dot(&panel.column(j)[range.clone()], y)).collect();
        let diag = (0..panel.p).map(|j| sq_norm(&panel.column(j)[range.clone()])).collect();
        Self { g, xty, yty: dot(y, y), diag, rows: range.len() }
    }

    /// Statistics of the rows of `self` that are not in `part`. `diag` is the
    /// directly computed diagonal of the remainder.
    pub fn without(&self, part: &Gram, diag: Vec<f64>) -> Self {
        let mut g = &self.g - &part.g;
        for (j, &v) in diag.iter().enumerate() {
            g[(j, j)] = v;
        }
        let xty = self.xty.iter().zip(&part.xty).map(|(a, b)| a - b).collect();
        Self { g, xty, yty: self.yty - part.yty, diag, rows: self.rows - part.rows }
    }
}

/// Access to a design during coordinate descent.
pub(crate) trait Design {
    fn sq(&self) -> &[f64];
    fn rows(&self) -> usize;
    /// `x_jᵀ r` at the current iterate.
    fn corr(&self, j: usize) -> f64;
    /// Accounts for `b_j ← b_j + delta`.
    fn shift(&mut self, j: usize, delta: f64);
    /// Rebuilds the cached state from `b`.
    fn refresh(&mut self, b: &[f64]);
    /// `‖Ŷ − X̂b‖²` at the current iterate.
    fn rss(&self, b: &[f64]) -> f64;
    /// `X̂_AᵀX̂_A` for the coordinates in `a`.
    fn gram_block(&self, a: &[usize]) -> DMatrix<f64>;
    /// Stalled active-set sweeps to wait before a Newton step on `m`
    /// coordinates, chosen so that the step costs about as much as the wait.
    fn newton_after(&self, m: usize) -> usize;
}

/// Keeps the residual over a set of row ranges of a panel; rows outside the
/// ranges are ignored.
pub(crate) struct ResidualDesign<'a> {
    panel: &'a TransformedPanel,
    ranges: Vec<Range<usize>>,
    rows: usize,
    sq: Vec<f64>,
    r: Vec<f64>,
}

impl<'a> ResidualDesign<'a> {
    pub fn new(panel: &'a TransformedPanel, ranges: &[Range<usize>]) -> Self {
        let ranges: Vec<Range<usize>> = ranges.iter().filter(|r| !r.is_empty()).cloned().collect();
        let rows = ranges.iter().map(|r| r.len()).sum();
        let sq = (0..panel.p)
            .map(|j| ranges.iter().map(|rg| sq_norm(&panel.column(j)[rg.clone()])).sum())
            .collect();
        Self { panel, ranges, rows, sq, r: vec![0.0; panel.rows()] }
    }
}

impl Design for ResidualDesign<'_> {
    fn sq(&self) -> &[f64] {
        &self.sq
    }
    fn rows(&self) -> usize {
        self.rows
    }
    fn corr(&self, j: usize) -> f64 {
        let x = self.panel.column(j);
        self.ranges.iter().map(|rg| dot(&x[rg.clone()], &self.r[rg.clone()])).sum()
    }
    fn shift(&mut self, j: usize, delta: f64) {
        let x = self.panel.column(j);
        for rg in &self.ranges {
            for (ri, xi) in self.r[rg.clone()].iter_mut().zip(&x[rg.clone()]) {
                *ri -= delta * xi;
            }
        }
    }
    fn refresh(&mut self, b: &[f64]) {
        let y = self.panel.y.as_slice();
        for rg in &self.ranges {
            self.r[rg.clone()].copy_from_slice(&y[rg.clone()]);
        }
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                self.shift(j, bj);
            }
        }
    }
    fn rss(&self, _b: &[f64]) -> f64 {
        self.ranges.iter().map(|rg| sq_norm(&self.r[rg.clone()])).sum()
    }
    fn gram_block(&self, a: &[usize]) -> DMatrix<f64> {
        let mut xa = DMatrix::zeros(self.rows, a.len());
        for (k, &j) in a.iter().enumerate() {
            let x = self.panel.column(j);
            let dst = &mut xa.as_mut_slice()[k * self.rows..(k + 1) * self.rows];
            let mut at = 0;
            for rg in &self.ranges {
                dst[at..at + rg.len()].copy_from_slice(&x[rg.clone()]);
                at += rg.len();
            }
        }
        xa.transpose() * &xa
    }
    fn newton_after(&self, m: usize) -> usize {
        (m / 8 + m * m / (6 * self.rows.max(1))).max(5)
    }
}

/// Keeps `c = X̂ᵀŶ − X̂ᵀX̂ b` instead of the residual.
pub(crate) struct CovarianceDesign<'a> {
    gram: &'a Gram,
    c: Vec<f64>,
}

impl<'a> CovarianceDesign<'a> {
    pub fn new(gram: &'a Gram) -> Self {
        Self { gram, c: gram.xty.clone() }
    }
}

impl Design for CovarianceDesign<'_> {
    fn sq(&self) -> &[f64] {
        &self.gram.diag
    }
    fn rows(&self) -> usize {
        self.gram.rows
    }
    fn corr(&self, j: usize) -> f64 {
        self.c[j]
    }
    fn shift(&mut self, j: usize, delta: f64) {
        let p = self.c.len();
        let col = &self.gram.g.as_slice()[j * p..(j + 1) * p];
        for (ci, gi) in self.c.iter_mut().zip(col) {
            *ci -= delta * gi;
        }
    }
    fn refresh(&mut self, b: &[f64]) {
        self.c.copy_from_slice(&self.gram.xty);
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                self.shift(j, bj);
            }
        }
    }
    fn rss(&self, b: &[f64]) -> f64 {
        // ‖y − Xb‖² = yᵀy − bᵀX̂ᵀŶ − bᵀc.
        let cross: f64 = b.iter().zip(self.gram.xty.iter().zip(&self.c)).map(|(bj, (x, c))| bj * (x + c)).sum();
        (self.gram.yty - cross).max(0.0)
    }
    fn gram_block(&self, a: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), a.len(), |r, c| self.gram.g[(a[r], a[c])])
    }
    fn newton_after(&self, m: usize) -> usize {
        (m * m / (3 * self.c.len().max(1))).max(5)
    }
}

struct Descent {
    iterations: usize,
    converged: bool,
    zero_variance: Vec<usize>,
    trace: Vec<f64>,
    /// `|g_j|` at the returned iterate.
    abs_grad: Vec<f64>,
}

fn descend<D: Design>(d: &mut D, b: &mut [f64], lambda: f64, screen: Option<&[bool]>, opts: &LassoOptions) -> Descent {
    assert!(lambda >= 0.0, "penalty must be non-negative");
    let p = b.len();
    let rows = d.rows();
    let half = lambda * rows as f64 / 2.0;
    let sq = d.sq().to_vec();
    let mut zero_variance = Vec::new();
    for (j, &a) in sq.iter().enumerate() {
        if a == 0.0 {
            if lambda > 0.0 && b[j] != 0.0 {
                b[j] = 0.0;
            } else if lambda == 0.0 {
                zero_variance.push(j);
            }
        }
    }
    if !zero_variance.is_empty() {
        log::warn!("lasso: {} zero-variance column(s) left at their start value", zero_variance.len());
    }
    d.refresh(b);
    let mut working: Vec<bool> =
        (0..p).map(|j| sq[j] > 0.0 && (b[j] != 0.0 || screen.map_or(true, |s| s[j]))).collect();
    let grad_scale = 2.0 / rows as f64;
    let kkt_tol = 10.0 * opts.tol;
    let mut tol = opts.tol;
    let mut iterations = 0;
    let mut converged = false;
    let mut trace = Vec::new();
    let mut abs_grad = vec![0.0; p];
    let record = |d: &D, b: &[f64], trace: &mut Vec<f64>| {
        if opts.record_objective {
            let l1: f64 = b.iter().map(|v| v.abs()).sum();
            trace.push(d.rss(b) / rows as f64 + lambda * l1);
        }
    };
    record(d, b, &mut trace);

    while iterations < opts.max_iter {
        let coords: Vec<usize> = (0..p).filter(|&j| working[j]).collect();
        let change = sweep(d, &sq, half, &coords, b);
        iterations += 1;
        record(d, b, &mut trace);
        if change <= tol * scale(b) {
            // Rebuild the cached state to shed accumulated rounding before certifying.
            d.refresh(b);
            let mut worst = 0.0_f64;
            let mut admitted = false;
            for j in 0..p {
                let g = -grad_scale * d.corr(j);
                abs_grad[j] = g.abs();
                let v = kkt_term(g, b[j], lambda);
                worst = worst.max(v);
                if !working[j] && sq[j] > 0.0 && v > kkt_tol {
                    working[j] = true;
                    admitted = true;
                }
            }
            if worst <= kkt_tol {
                converged = true;
                break;
            }
            if admitted {
                continue;
            }
            if tol < 1e-15 {
                break;
            }
            tol /= 10.0;
            continue;
        }
        let mut stalled = 0;
        let mut newton_failed_on: Option<Vec<usize>> = None;
        while iterations < opts.max_iter {
            let active: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0 && sq[j] > 0.0).collect();
            let change = sweep(d, &sq, half, &active, b);
            iterations += 1;
            record(d, b, &mut trace);
            if change <= tol * scale(b) {
                break;
            }
            stalled += 1;
            if stalled >= d.newton_after(active.len()) && newton_failed_on.as_ref() != Some(&active) {
                stalled = 0;
                if !newton_step(d, b, &active, half) {
                    newton_failed_on = Some(active);
                }
            }
        }
    }
    if !converged {
        log::warn!("lasso: no convergence after {iterations} sweeps at lambda = {lambda:e}");
        d.refresh(b);
        for (j, g) in abs_grad.iter_mut().enumerate() {
            *g = (grad_scale * d.corr(j)).abs();
        }
    }
    Descent { iterations, converged, zero_variance, trace, abs_grad }
}

/// For a singular active block: slides along a null direction of the block
/// (leaving the fit unchanged up to its tiny eigenvalue) in the direction
/// that lowers the penalty, until one coordinate reaches zero. Applied only
/// when the exact change of the objective is non-positive.
fn null_step<D: Design>(d: &mut D, b: &mut [f64], active: &[usize], half: f64, block: DMatrix<f64>) -> bool {
    let eig = block.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let Some((k, &mu)) = eig.eigenvalues.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)) else {
        return false;
    };
    if !(mu <= 1e-10 * top) {
        return false;
    }
    let mu = mu.max(0.0);
    let mut v = eig.eigenvectors.column(k).into_owned();
    // Half the derivative of n·objective along v at t = 0.
    let mut slope: f64 = active.iter().zip(v.iter()).map(|(&j, &vk)| vk * (half * b[j].signum() - d.corr(j))).sum();
    if slope > 0.0 {
        v.neg_mut();
        slope = -slope;
    }
    let mut step = f64::INFINITY;
    let mut blocking = None;
    for (k, &j) in active.iter().enumerate() {
        if b[j] * v[k] < 0.0 {
            let reach = -b[j] / v[k];
            if reach < step {
                step = reach;
                blocking = Some(k);
            }
        }
    }
    let Some(stop) = blocking else {
        return false;
    };
    if step * step * mu + 2.0 * step * slope > 0.0 {
        return false;
    }
    for (k, &j) in active.iter().enumerate() {
        let mut new = b[j] + step * v[k];
        if k == stop || new * b[j] < 0.0 {
            new = 0.0;
        }
        let delta = new - b[j];
        if delta != 0.0 {
            d.shift(j, delta);
            b[j] = new;
        }
    }
    true
}

/// Moves the active coordinates toward the minimizer of the objective
/// restricted to their current sign pattern, stopping at the first
/// coordinate that would cross zero (which is set to zero). The objective
/// cannot increase. Returns `false` when the restricted Gram block is not
/// numerically positive definite.
fn newton_step<D: Design>(d: &mut D, b: &mut [f64], active: &[usize], half: f64) -> bool {
    if active.is_empty() {
        return false;
    }
    let rhs = DVector::from_iterator(active.len(), active.iter().map(|&j| d.corr(j) - half * b[j].signum()));
    let block = d.gram_block(active);
    let Some(chol) = block.clone().cholesky() else {
        return null_step(d, b, active, half, block);
    };
    let dir = chol.solve(&rhs);
    if dir.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let mut step = 1.0;
    let mut blocking = None;
    for (k, &j) in active.iter().enumerate() {
        if b[j] * dir[k] < 0.0 {
            let reach = -b[j] / dir[k];
            if reach < step {
                step = reach;
                blocking = Some(k);
            }
        }
    }
    for (k, &j) in active.iter().enumerate() {
        let mut new = b[j] + step * dir[k];
        if blocking == Some(k) || new * b[j] < 0.0 {
            new = 0.0;
        }
        let delta = new - b[j];
        if delta != 0.0 {
            d.shift(j, delta);
            b[j] = new;
        }
    }
    true
}

fn kkt_term(g: f64, bj: f64, lambda: f64) -> f64 {
    if bj == 0.0 {
        (g.abs() - lambda).max(0.0)
    } else {
        (g + lambda * bj.signum()).abs()
    }
}

fn sweep<D: Design>(d: &mut D, sq: &[f64], half: f64, coords: &[usize], b: &mut [f64]) -> f64 {
    let mut max_change = 0.0_f64;
    for &j in coords {
        let a = sq[j];
        let old = b[j];
        let c = d.corr(j) + a * old;
        let new = soft_threshold(c, half) / a;
        let delta = new - old;
        if delta != 0.0 {
            d.shift(j, delta);
            b[j] = new;
            max_change = max_change.max(delta.abs());
        }
    }
    max_change
}

fn soft_threshold(c: f64, k: f64) -> f64 {
    if c > k {
        c - k
    } else if c < -k {
        c + k
    } else {
        0.0
    }
}

fn scale(b: &[f64]) -> f64 {
    b.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn residual(panel: &TransformedPanel, b: &[f64]) -> Vec<f64> {
    let mut r = panel.y.as_slice().to_vec();
    for (j, &bj) in b.iter().enumerate() {
        if bj != 0.0 {
            for (ri, xi) in r.iter_mut().zip(panel.column(j)) {
                *ri -= bj * xi;
            }
        }
    }
    r
}

pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    // Independent accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0_f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
