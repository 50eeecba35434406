//! Seeded Monte Carlo harness over the simulation design.
//!
//! Each run draws a fresh panel from a seed derived from `(master_seed, run)`
//! and fits every requested estimator on that same panel. Runs are
//! independent work items; results are keyed by run index, so the report
//! does not depend on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{eigen_spike_report, projection_quality};
use crate::error::{HdcceError, Result};
use crate::estimators::{estimate_cce_pooled, fit_transformed, hd_step, EstimatorOptions, FitReport, LambdaRule, Method};
use crate::projection::{oracle_projection, transform_panel};
use crate::rng::derive_seed;
use crate::simulate::{simulate_panel, SimulationConfig, DESIGN_FACTORS};
use crate::solvers::{kkt_violation, LassoOptions};
use crate::stats::{mean, quantile_sorted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    HdLasso,
    HdLs,
    OracleLasso,
    OracleLs,
    Cce,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::HdLasso => "hd_lasso",
            Self::HdLs => "hd_ls",
            Self::OracleLasso => "oracle_lasso",
            Self::OracleLs => "oracle_ls",
            Self::Cce => "cce",
        }
    }

    fn is_lasso(self) -> bool {
        matches!(self, Self::HdLasso | Self::OracleLasso)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = HdcceError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "hd_lasso" => Self::HdLasso,
            "hd_ls" => Self::HdLs,
            "oracle_lasso" => Self::OracleLasso,
            "oracle_ls" => Self::OracleLs,
            "cce" => Self::Cce,
            other => return Err(HdcceError::InvalidConfig(format!("unknown estimator '{other}'"))),
        })
    }
}

/// Regime label: A (`p < T`), B (`T ≤ p < nT`), C (`nT ≤ p`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
    Custom,
}

impl FromStr for Scenario {
    type Err = HdcceError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "A" => Self::A,
            "B" => Self::B,
            "C" => Self::C,
            "CUSTOM" => Self::Custom,
            other => return Err(HdcceError::InvalidConfig(format!("unknown scenario '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub label: Scenario,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub p: usize,
    pub estimators: Vec<EstimatorKind>,
    pub runs: usize,
    pub master_seed: u64,
    pub rho: f64,
    pub alpha_tau: f64,
    pub cv_folds: usize,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
}

impl ScenarioSpec {
    pub fn new(label: Scenario, n: usize, t: usize, p: usize, estimators: Vec<EstimatorKind>, runs: usize, master_seed: u64) -> Self {
        Self {
            label,
            n,
            t,
            p,
            estimators,
            runs,
            master_seed,
            rho: 0.25,
            alpha_tau: 0.05,
            cv_folds: 10,
            lasso_tol: 1e-8,
            lasso_max_iter: 10_000,
        }
    }

    pub fn d(&self) -> usize {
        (self.p - 3) / 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 || (self.p - 3) % 3 != 0 {
            return Err(HdcceError::InvalidConfig(format!("p = {} is not of the form 3 + 3d", self.p)));
        }
        if self.estimators.is_empty() {
            return Err(HdcceError::InvalidConfig("no estimators requested".into()));
        }
        if self.runs == 0 || self.n == 0 || self.t == 0 {
            return Err(HdcceError::InvalidConfig("runs, n and T must be positive".into()));
        }
        let nt = self.n * self.t;
        let ok = match self.label {
            Scenario::A => self.p < self.t,
            Scenario::B => self.t <= self.p && self.p < nt,
            Scenario::C => nt <= self.p,
            Scenario::Custom => true,
        };
        if !ok {
            return Err(HdcceError::InvalidConfig(format!(
                "(n, T, p) = ({}, {}, {}) is outside the regime of scenario {:?}",
                self.n, self.t, self.p, self.label
            )));
        }
        if self.estimators.iter().any(|e| e.is_lasso()) && self.n < self.cv_folds {
            return Err(HdcceError::InvalidConfig(format!("{} units cannot fill {} folds", self.n, self.cv_folds)));
        }
        Ok(())
    }

    /// 1-based representative regressors `1, 4, 4+d, 4+2d` (only `1` when d = 0).
    pub fn coordinates(&self) -> Vec<usize> {
        representative_coordinates(self.d())
    }
}

pub fn representative_coordinates(d: usize) -> Vec<usize> {
    if d == 0 {
        vec![1]
    } else {
        vec![1, 4, 4 + d, 4 + 2 * d]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRecord {
    /// `β̂_j − β_j` at the representative coordinates.
    pub deltas: Vec<f64>,
    /// Whether `β̂_j` is exactly zero at each representative coordinate.
    pub exact_zero: Vec<bool>,
    pub l1_error: f64,
    pub converged: bool,
    pub degenerate: bool,
    pub lambda: f64,
    /// The true support is contained in the active set.
    pub support_recovered: bool,
    pub active_size: usize,
    /// Optimality-condition violation of a lasso fit, recomputed on the
    /// projected panel.
    pub kkt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub k_hat: Option<usize>,
    /// `‖Π̂F‖_F / ‖F‖_F` for the estimated projection.
    pub projection_ratio: Option<f64>,
    /// `λ̂_3 / λ̂_4`.
    pub gap_ratio: Option<f64>,
    /// `λ̂_3 / p`.
    pub head_over_p: Option<f64>,
    /// One entry per requested estimator, in request order.
    pub fits: Vec<std::result::Result<EstimatorRecord, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub spec: ScenarioSpec,
    pub coordinates: Vec<usize>,
    pub runs: Vec<RunRecord>,
}

impl McReport {
    fn slot(&self, est: EstimatorKind) -> Option<usize> {
        self.spec.estimators.iter().position(|&e| e == est)
    }

    /// Included (converged, error-free) records for an estimator, by run.
    pub fn included(&self, est: EstimatorKind) -> Vec<(usize, &EstimatorRecord)> {
        let Some(s) = self.slot(est) else { return Vec::new() };
        self.runs
            .iter()
            .filter_map(|r| match &r.fits[s] {
                Ok(rec) if rec.converged => Some((r.run, rec)),
                _ => None,
            })
            .collect()
    }

    pub fn n_excluded(&self, est: EstimatorKind) -> usize {
        match self.slot(est) {
            Some(_) => self.runs.len() - self.included(est).len(),
            None => 0,
        }
    }

    /// Deviations at a representative coordinate (1-based regressor index).
    pub fn deltas(&self, est: EstimatorKind, coord: usize) -> Vec<f64> {
        let Some(c) = self.coordinates.iter().position(|&j| j == coord) else { return Vec::new() };
        self.included(est).iter().map(|(_, rec)| rec.deltas[c]).collect()
    }

    pub fn l1_errors(&self, est: EstimatorKind) -> Vec<f64> {
        self.included(est).iter().map(|(_, rec)| rec.l1_error).collect()
    }

    pub fn share_exact_zero(&self, est: EstimatorKind, coord: usize) -> f64 {
        let Some(c) = self.coordinates.iter().position(|&j| j == coord) else { return f64::NAN };
        let inc = self.included(est);
        inc.iter().filter(|(_, rec)| rec.exact_zero[c]).count() as f64 / inc.len() as f64
    }

    pub fn k_hats(&self) -> Vec<usize> {
        self.runs.iter().filter_map(|r| r.k_hat).collect()
    }
}

fn options_for(kind: EstimatorKind, spec: &ScenarioSpec, seed: u64) -> EstimatorOptions {
    let method = if kind.is_lasso() {
        Method::Lasso { lambda_rule: LambdaRule::Cv { folds: spec.cv_folds } }
    } else {
        Method::LeastSquares
    };
    EstimatorOptions {
        method,
        alpha_tau: spec.alpha_tau,
        k_override: None,
        raw_columns: None,
        seed,
        lasso: LassoOptions { tol: spec.lasso_tol, max_iter: spec.lasso_max_iter, ..Default::default() },
    }
}

fn record(fit: &FitReport, beta: &[f64], coords: &[usize]) -> EstimatorRecord {
    let b = &fit.beta_hat;
    EstimatorRecord {
        deltas: coords.iter().map(|&j| b[j - 1] - beta[j - 1]).collect(),
        exact_zero: coords.iter().map(|&j| b[j - 1] == 0.0).collect(),
        l1_error: b.iter().zip(beta).map(|(x, y)| (x - y).abs()).sum(),
        converged: fit.diagnostics.converged,
        degenerate: fit.diagnostics.degenerate,
        lambda: fit.lambda_used,
        support_recovered: beta.iter().zip(b).all(|(&t, &e)| t == 0.0 || e != 0.0),
        active_size: fit.active_set.len(),
        kkt: None,
    }
}

/// Simulate run `run` and fit every requested estimator on the same panel.
pub fn run_one(spec: &ScenarioSpec, run: usize) -> RunRecord {
    let seed = derive_seed(spec.master_seed, run as u64);
    let mut out = RunRecord {
        run,
        seed,
        k_hat: None,
        projection_ratio: None,
        gap_ratio: None,
        head_over_p: None,
        fits: Vec::with_capacity(spec.estimators.len()),
    };
    let config = SimulationConfig::new(spec.n, spec.t, spec.d(), seed).with_rho(spec.rho);
    let (panel, truth) = match simulate_panel(&config) {
        Ok(v) => v,
        Err(e) => {
            out.fits = spec.estimators.iter().map(|_| Err(e.to_string())).collect();
            return out;
        }
    };
    let beta = config.beta_vec();
    let coords = spec.coordinates();

    let needs_hd = spec.estimators.iter().any(|e| matches!(e, EstimatorKind::HdLasso | EstimatorKind::HdLs));
    let needs_oracle = spec.estimators.iter().any(|e| matches!(e, EstimatorKind::OracleLasso | EstimatorKind::OracleLs));

    // K̂ and the spike statistics are recorded for every run.
    let step = hd_step(&panel, spec.alpha_tau, None, None);
    if let Ok(step) = &step {
        out.k_hat = Some(step.k_hat);
        out.projection_ratio = Some(projection_quality(&step.projection, &truth.factors).ratio);
        if spec.p > DESIGN_FACTORS {
            if let Ok(s) = eigen_spike_report(step.spectral.eigvals.as_slice(), DESIGN_FACTORS) {
                out.gap_ratio = Some(s.gap_ratio);
                out.head_over_p = Some(s.head_over_p);
            }
        }
    }
    let hd = if needs_hd {
        Some(step.as_ref().map_err(Clone::clone).and_then(|s| transform_panel(&s.projection, &panel)))
    } else {
        None
    };
    let oracle = if needs_oracle {
        Some(transform_panel(&oracle_projection(&truth.factors), &panel))
    } else {
        None
    };

    for (slot, &kind) in spec.estimators.iter().enumerate() {
        let fit_seed = derive_seed(seed, 1 + slot as u64);
        let opts = options_for(kind, spec, fit_seed);
        let projected = match kind {
            EstimatorKind::HdLasso | EstimatorKind::HdLs => Some(hd.as_ref().expect("hd panel built")),
            EstimatorKind::OracleLasso | EstimatorKind::OracleLs => Some(oracle.as_ref().expect("oracle panel built")),
            EstimatorKind::Cce => None,
        };
        let res: Result<EstimatorRecord> = match projected {
            Some(Ok(tp)) => fit_transformed(tp, &opts, kind.name()).map(|fit| {
                let mut rec = record(&fit, &beta, &coords);
                if kind.is_lasso() {
                    rec.kkt = Some(kkt_violation(tp, &fit.beta_hat, fit.lambda_used));
                }
                rec
            }),
            Some(Err(e)) => Err(e.clone()),
            None => estimate_cce_pooled(&panel).map(|fit| record(&fit, &beta, &coords)),
        };
        let rec = res.map_err(|e| e.to_string());
        match &rec {
            Err(e) => log::warn!("run {run}: {kind} failed: {e}"),
            Ok(r) if !r.converged => log::warn!("run {run}: {kind} did not converge; excluded"),
            _ => {}
        }
        out.fits.push(rec);
    }
    out
}

/// Execute every run on the current rayon pool.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<McReport> {
    spec.validate()?;
    let runs: Vec<RunRecord> = (0..spec.runs).into_par_iter().map(|r| run_one(spec, r)).collect();
    let report = McReport { spec: spec.clone(), coordinates: spec.coordinates(), runs };
    for &est in &spec.estimators {
        let excl = report.n_excluded(est);
        if excl > 0 {
            log::warn!("{est}: {excl} of {} runs excluded", spec.runs);
        }
    }
    Ok(report)
}

/// Execute on a dedicated pool with `threads` workers (0 = rayon default).
pub fn run_scenario_with_threads(spec: &ScenarioSpec, threads: usize) -> Result<McReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HdcceError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_scenario(spec))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    /// Regressor index, or `l1` for the whole-vector error `‖β̂ − β‖₁`.
    pub coordinate: String,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub mean: f64,
    pub share_exact_zero: f64,
    pub n_runs: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

fn summary_row(estimator: &str, coordinate: String, values: &[f64], zeros: usize, n_excluded: usize) -> SummaryRow {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |x: f64| if v.is_empty() { f64::NAN } else { quantile_sorted(&v, x) };
    SummaryRow {
        estimator: estimator.to_string(),
        coordinate,
        q05: q(0.05),
        q25: q(0.25),
        median: q(0.5),
        q75: q(0.75),
        q95: q(0.95),
        mean: if v.is_empty() { f64::NAN } else { mean(&v) },
        share_exact_zero: if v.is_empty() { f64::NAN } else { zeros as f64 / v.len() as f64 },
        n_runs: v.len(),
        n_excluded,
    }
}

/// Quantiles (type 7), mean and exact-zero share per estimator and coordinate.
pub fn summarize(report: &McReport) -> SummaryTable {
    let mut rows = Vec::new();
    for &est in &report.spec.estimators {
        let inc = report.included(est);
        let excl = report.n_excluded(est);
        for (c, &j) in report.coordinates.iter().enumerate() {
            let vals: Vec<f64> = inc.iter().map(|(_, r)| r.deltas[c]).collect();
            let zeros = inc.iter().filter(|(_, r)| r.exact_zero[c]).count();
            rows.push(summary_row(est.name(), j.to_string(), &vals, zeros, excl));
        }
        let l1: Vec<f64> = inc.iter().map(|(_, r)| r.l1_error).collect();
        let zeros = l1.iter().filter(|&&v| v == 0.0).count();
        rows.push(summary_row(est.name(), "l1".into(), &l1, zeros, excl));
    }
    SummaryTable { rows }
}
