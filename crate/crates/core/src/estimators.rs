//! End-to-end pipelines: factor counting, projection, then lasso or least
//! squares on the projected panel.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::diagnostics::projection_quality;
use crate::error::{HdcceError, Result};
use crate::projection::{
    classical_cce_projection, hd_projection, oracle_projection, transform_panel, ProjectionKind, ProjectionMatrix,
};
use crate::solvers::{
    cv_lambda, effective_noise_lambda, lasso, lasso_path, least_squares, LambdaGrid, LassoFit, LassoOptions,
    TransformedPanel,
};
use crate::panel::PanelDataset;
use crate::spectral::{default_tau, khat_threshold, spectral_summary, SpectralSummary};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { lambda: f64 },
    Cv { folds: usize },
    EffectiveNoise { q: f64, nsim: usize, noise_sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Lasso { lambda_rule: LambdaRule },
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOptions {
    pub method: Method,
    /// Threshold share: `τ = alpha_tau · λ̂₁`.
    pub alpha_tau: f64,
    pub k_override: Option<usize>,
    /// 0-based columns used to build the projection; it is still applied to
    /// every column.
    pub raw_columns: Option<Vec<usize>>,
    /// Seed for cross-validation folds and effective-noise draws.
    pub seed: u64,
    pub lasso: LassoOptions,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            method: Method::Lasso { lambda_rule: LambdaRule::Cv { folds: 10 } },
            alpha_tau: 0.05,
            k_override: None,
            raw_columns: None,
            seed: 0,
            lasso: LassoOptions::default(),
        }
    }
}

impl EstimatorOptions {
    pub fn least_squares() -> Self {
        Self { method: Method::LeastSquares, ..Default::default() }
    }

    pub fn lasso(rule: LambdaRule) -> Self {
        Self { method: Method::Lasso { lambda_rule: rule }, ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.alpha_tau > 0.0 && self.alpha_tau < 1.0) {
            return Err(HdcceError::InvalidConfig(format!("alpha_tau = {} not in (0, 1)", self.alpha_tau)));
        }
        if let Some(cols) = &self.raw_columns {
            if cols.is_empty() || cols.iter().any(|&c| c >= p) {
                return Err(HdcceError::InvalidConfig("raw columns must be a non-empty subset of 1..p".into()));
            }
        }
        match &self.method {
            Method::Lasso { lambda_rule: LambdaRule::Fixed { lambda } } if !(*lambda >= 0.0) => {
                Err(HdcceError::InvalidConfig("lambda must be non-negative".into()))
            }
            Method::Lasso { lambda_rule: LambdaRule::EffectiveNoise { q, noise_sd, .. } }
                if !(*q > 0.0 && *q < 1.0 && *noise_sd > 0.0) =>
            {
                Err(HdcceError::InvalidConfig("effective-noise rule needs q in (0,1) and noise_sd > 0".into()))
            }
            _ => Ok(()),
        }
    }

    fn tag(&self, prefix: &str) -> String {
        match self.method {
            Method::Lasso { .. } => format!("{prefix}_lasso"),
            Method::LeastSquares => format!("{prefix}_ls"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct FitDiagnostics {
    /// `‖ΠF‖_F / ‖F‖_F` when the true factors are known.
    pub projection_ratio: Option<f64>,
    /// Leading eigenvalues of `Σ̂` (at most five).
    pub eig_head: Vec<f64>,
    pub converged: bool,
    pub rank_deficient: bool,
    pub degenerate: bool,
    pub iterations: usize,
    pub cv_errors: Option<Vec<f64>>,
    pub cv_grid: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub beta_hat: Vec<f64>,
    pub method: String,
    pub k_used: usize,
    pub lambda_used: f64,
    pub projection_kind: ProjectionKind,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub diagnostics: FitDiagnostics,
}

/// Steps 1–2 of the high-dimensional estimator: spectrum, factor count and
/// projection.
#[derive(Debug, Clone)]
pub struct HdStep {
    pub spectral: SpectralSummary,
    pub k_hat: usize,
    pub projection: ProjectionMatrix,
}

pub fn hd_step(panel: &PanelDataset, alpha_tau: f64, k_override: Option<usize>, raw_columns: Option<&[usize]>) -> Result<HdStep> {
    let mut xbar = panel.cross_sectional_means();
    if let Some(cols) = raw_columns {
        xbar = xbar.select_columns(cols);
    }
    let spectral = spectral_summary(&xbar)?;
    let k_hat = match k_override {
        Some(k) => k,
        None => match default_tau(spectral.eigvals.as_slice(), alpha_tau) {
            Ok(tau) => khat_threshold(spectral.eigvals.as_slice(), tau),
            Err(HdcceError::ZeroSpectrum) => 0,
            Err(e) => return Err(e),
        },
    };
    let projection = hd_projection(&xbar, &spectral, k_hat)?;
    Ok(HdStep { spectral, k_hat, projection })
}

/// High-dimensional CCE estimator.
pub fn estimate_hdcce(panel: &PanelDataset, opts: &EstimatorOptions) -> Result<FitReport> {
    estimate_hdcce_with_truth(panel, opts, None)
}

/// As [`estimate_hdcce`], additionally reporting projection quality against
/// known factors.
pub fn estimate_hdcce_with_truth(
    panel: &PanelDataset,
    opts: &EstimatorOptions,
    factors: Option<&DMatrix<f64>>,
) -> Result<FitReport> {
    opts.validate(panel.p)?;
    let step = hd_step(panel, opts.alpha_tau, opts.k_override, opts.raw_columns.as_deref())?;
    let tp = transform_panel(&step.projection, panel)?;
    let mut report = fit_transformed(&tp, opts, &opts.tag("hd"))?;
    finish(&mut report, &step.projection, step.k_hat, factors);
    report.diagnostics.eig_head = step.spectral.eigvals.iter().take(5).copied().collect();
    Ok(report)
}

/// Infeasible benchmark using the true factor projection.
pub fn estimate_oracle(panel: &PanelDataset, factors: &DMatrix<f64>, opts: &EstimatorOptions) -> Result<FitReport> {
    opts.validate(panel.p)?;
    if factors.nrows() != panel.t {
        return Err(HdcceError::Dimension(format!(
            "factor matrix has {} rows but T = {}",
            factors.nrows(),
            panel.t
        )));
    }
    let proj = oracle_projection(factors);
    let tp = transform_panel(&proj, panel)?;
    let mut report = fit_transformed(&tp, opts, &opts.tag("oracle"))?;
    finish(&mut report, &proj, factors.ncols(), Some(factors));
    Ok(report)
}

/// Pooled classical CCE with equal unit weights. Flags degeneracy (and
/// returns the zero vector) when the cross-sectional means span all of `R^T`.
pub fn estimate_cce_pooled(panel: &PanelDataset) -> Result<FitReport> {
    let xbar = panel.cross_sectional_means();
    let proj = classical_cce_projection(&xbar);
    let degenerate = proj.rank_removed == panel.t;
    let fit = if degenerate {
        log::warn!("classical CCE projection is the null matrix (p = {}, T = {})", panel.p, panel.t);
        LassoFit {
            beta_hat: vec![0.0; panel.p],
            lambda: 0.0,
            objective: 0.0,
            active_set: Vec::new(),
            iterations: 0,
            converged: true,
            zero_variance: Vec::new(),
            rank_deficient: true,
            objective_trace: Vec::new(),
        }
    } else {
        least_squares(&transform_panel(&proj, panel)?)
    };
    let mut report = report_from_fit(fit, "cce".into());
    report.diagnostics.degenerate = degenerate;
    if degenerate {
        report.diagnostics.warnings.push("classical CCE projection is the null matrix".into());
    }
    report.projection_kind = proj.kind;
    report.k_used = proj.rank_removed;
    Ok(report)
}

/// Step 3 on an already projected panel.
pub fn fit_transformed(tp: &TransformedPanel, opts: &EstimatorOptions, tag: &str) -> Result<FitReport> {
    let mut cv = None;
    let fit = match &opts.method {
        Method::LeastSquares => least_squares(tp),
        Method::Lasso { lambda_rule } => match lambda_rule {
            LambdaRule::Fixed { lambda: l } => lasso(tp, *l, &opts.lasso),
            LambdaRule::EffectiveNoise { q, nsim, noise_sd } => {
                let l = effective_noise_lambda(tp, *q, *nsim, *noise_sd, opts.seed);
                lasso(tp, l, &opts.lasso)
            }
            LambdaRule::Cv { folds } => {
                let res = cv_lambda(tp, *folds, &LambdaGrid::Auto, opts.seed, &opts.lasso)?;
                let stop = res.lambda_grid.iter().position(|&l| l == res.lambda_star).unwrap_or(0);
                let mut path = lasso_path(tp, &res.lambda_grid[..=stop], &opts.lasso);
                cv = Some(res);
                path.pop().expect("grid is non-empty")
            }
        },
    };
    let mut report = report_from_fit(fit, tag.to_string());
    if let Some(res) = cv {
        report.diagnostics.cv_errors = Some(res.cv_errors);
        report.diagnostics.cv_grid = Some(res.lambda_grid);
    }
    if report.beta_hat.iter().any(|v| !v.is_finite()) {
        return Err(HdcceError::Numerical(format!("{tag}: non-finite coefficient estimate")));
    }
    Ok(report)
}

fn report_from_fit(fit: LassoFit, method: String) -> FitReport {
    let mut diagnostics = FitDiagnostics {
        converged: fit.converged,
        rank_deficient: fit.rank_deficient,
        iterations: fit.iterations,
        ..Default::default()
    };
    if !fit.converged {
        diagnostics.warnings.push("solver did not converge".into());
    }
    if !fit.zero_variance.is_empty() {
        diagnostics.warnings.push(format!("zero-variance columns: {:?}", fit.zero_variance));
    }
    FitReport {
        beta_hat: fit.beta_hat,
        method,
        k_used: 0,
        lambda_used: fit.lambda,
        projection_kind: ProjectionKind::Identity,
        active_set: fit.active_set,
        objective: fit.objective,
        diagnostics,
    }
}

fn finish(report: &mut FitReport, proj: &ProjectionMatrix, k: usize, factors: Option<&DMatrix<f64>>) {
    report.k_used = k;
    report.projection_kind = proj.kind;
    if let Some(w) = &proj.warning {
        report.diagnostics.warnings.push(w.clone());
    }
    if let Some(f) = factors {
        if f.nrows() == proj.t() {
            report.diagnostics.projection_ratio = Some(projection_quality(proj, f).ratio);
        }
    }
}
