//! Synthetic panels with three AR(1) factors and group-structured loadings.
//!
//! The regressors fall into four groups: the first three load on every
//! factor, and each of the remaining three blocks of `d` regressors loads on
//! a single factor. All loadings of a unit (outcome and regressor) are drawn
//! jointly from an equicorrelated Gaussian.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HdcceError, Result};
use crate::panel::PanelDataset;
use crate::rng::{stream_rng, Stream};

/// Number of factors in the simulation design.
pub const DESIGN_FACTORS: usize = 3;

fn default_k() -> usize {
    DESIGN_FACTORS
}
fn default_rho() -> f64 {
    0.25
}
fn default_ar() -> f64 {
    0.5
}
fn default_innov() -> f64 {
    0.75
}
fn default_head() -> f64 {
    1.0
}
fn default_tail() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub d: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_ar")]
    pub ar_coef: f64,
    #[serde(default = "default_innov")]
    pub innov_var: f64,
    #[serde(default = "default_head")]
    pub z_var_head: f64,
    #[serde(default = "default_tail")]
    pub z_var_tail: f64,
    /// Defaults to `(1, 1, 1, 0, …, 0)` when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationConfig {
    /// Design defaults for an `n × T` panel with `p = 3 + 3d` regressors.
    pub fn new(n: usize, t: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            t,
            d,
            rho: default_rho(),
            k: DESIGN_FACTORS,
            ar_coef: default_ar(),
            innov_var: default_innov(),
            z_var_head: default_head(),
            z_var_tail: default_tail(),
            beta: None,
            seed,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn p(&self) -> usize {
        3 + 3 * self.d
    }

    /// Length of the joint loading vector `G_i`.
    pub fn loading_dim(&self) -> usize {
        DESIGN_FACTORS + 9 + 3 * self.d
    }

    pub fn beta_vec(&self) -> Vec<f64> {
        match &self.beta {
            Some(b) => b.clone(),
            None => default_beta(self.p()),
        }
    }

    /// Variance of the stationary AR(1) law, `v = innov / (1 - a²)`.
    pub fn stationary_factor_var(&self) -> f64 {
        self.innov_var / (1.0 - self.ar_coef * self.ar_coef)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(HdcceError::InvalidConfig("n and T must be positive".into()));
        }
        if self.k != DESIGN_FACTORS {
            return Err(HdcceError::InvalidConfig(format!(
                "the loading design is defined for K = {DESIGN_FACTORS}, got K = {}",
                self.k
            )));
        }
        if !(self.ar_coef.abs() < 1.0) {
            return Err(HdcceError::InvalidConfig("AR coefficient must satisfy |a| < 1".into()));
        }
        if !(self.innov_var > 0.0 && self.z_var_head > 0.0 && self.z_var_tail > 0.0) {
            return Err(HdcceError::InvalidConfig("variances must be positive".into()));
        }
        if let Some(b) = &self.beta {
            if b.len() != self.p() {
                return Err(HdcceError::InvalidConfig(format!(
                    "beta has length {} but p = {}",
                    b.len(),
                    self.p()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(HdcceError::InvalidConfig("beta must be finite".into()));
            }
        }
        let m = self.loading_dim();
        let lower = -1.0 / (m as f64 - 1.0);
        if !(self.rho > lower && self.rho < 1.0) {
            return Err(HdcceError::NotPositiveDefinite { rho: self.rho, dim: m });
        }
        Ok(())
    }
}

/// `(1, 1, 1, 0, …, 0)` of length `p`.
pub fn default_beta(p: usize) -> Vec<f64> {
    (0..p).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect()
}

/// Latent simulation truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorStructure {
    /// `T × K` factor matrix.
    pub factors: DMatrix<f64>,
    /// `n × K` outcome loadings, row `i` is `γ_i`.
    pub gamma: DMatrix<f64>,
    /// Per-unit `p × K` regressor loadings `Γ_i`.
    pub loadings: Vec<DMatrix<f64>>,
    /// Per-unit `T × p` idiosyncratic regressor components.
    pub z: Vec<DMatrix<f64>>,
    /// Per-unit idiosyncratic errors.
    pub eps: Vec<DVector<f64>>,
}

/// Expected regressor loading matrix: `0.5·I₃` on top, then one block of `d`
/// ones per factor.
pub fn mean_loading_matrix(d: usize) -> DMatrix<f64> {
    let p = 3 + 3 * d;
    let mut g = DMatrix::zeros(p, DESIGN_FACTORS);
    for k in 0..DESIGN_FACTORS {
        g[(k, k)] = 0.5;
        for r in 0..d {
            g[(3 + k * d + r, k)] = 1.0;
        }
    }
    g
}

/// Draw one panel and its latent truth.
pub fn simulate_panel(config: &SimulationConfig) -> Result<(PanelDataset, FactorStructure)> {
    config.validate()?;
    let (n, t, d, p) = (config.n, config.t, config.d, config.p());
    let kf = DESIGN_FACTORS;
    let beta = DVector::from_vec(config.beta_vec());

    let mut rng = stream_rng(config.seed, Stream::Factors);
    let mut factors = DMatrix::zeros(t, kf);
    let sd0 = config.stationary_factor_var().sqrt();
    let sdw = config.innov_var.sqrt();
    for s in 0..t {
        for k in 0..kf {
            let w: f64 = rng.sample(StandardNormal);
            factors[(s, k)] = if s == 0 {
                sd0 * w
            } else {
                config.ar_coef * factors[(s - 1, k)] + sdw * w
            };
        }
    }

    // Equicorrelated draw: G - μ = √(1-ρ)(I - P)z + √(1+(m-1)ρ) P z with P = 11ᵀ/m.
    let m = config.loading_dim();
    let a = (1.0 - config.rho).sqrt();
    let b = (1.0 + (m as f64 - 1.0) * config.rho).sqrt();
    let mut rng = stream_rng(config.seed, Stream::Loadings);
    let mut gamma = DMatrix::zeros(n, kf);
    let mut loadings = Vec::with_capacity(n);
    let mut z = vec![0.0; m];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let zbar = z.iter().sum::<f64>() / m as f64;
        let shock = |idx: usize| a * (z[idx] - zbar) + b * zbar;
        for k in 0..kf {
            gamma[(i, k)] = 1.0 + shock(k);
        }
        let mut gi = DMatrix::zeros(p, kf);
        for r in 0..3 {
            for c in 0..kf {
                let mu = if r == c { 0.5 } else { 0.0 };
                gi[(r, c)] = mu + shock(kf + 3 * r + c);
            }
        }
        for k in 0..kf {
            for r in 0..d {
                gi[(3 + k * d + r, k)] = 1.0 + shock(kf + 9 + k * d + r);
            }
        }
        loadings.push(gi);
    }

    let mut rng = stream_rng(config.seed, Stream::Idiosyncratic);
    let sd_head = config.z_var_head.sqrt();
    let sd_tail = config.z_var_tail.sqrt();
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut zi = DMatrix::zeros(t, p);
        for s in 0..t {
            for j in 0..p {
                let sd = if j < 3 { sd_head } else { sd_tail };
                let e: f64 = rng.sample(StandardNormal);
                zi[(s, j)] = sd * e;
            }
        }
        zs.push(zi);
    }

    let mut rng = stream_rng(config.seed, Stream::Errors);
    let eps: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(t, |_, _| rng.sample(StandardNormal)))
        .collect();

    let mut ys = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for i in 0..n {
        let mut xi = zs[i].clone();
        xi.gemm(1.0, &factors, &loadings[i].transpose(), 1.0);
        let gi = gamma.row(i).transpose();
        let yi = &xi * &beta + &factors * gi + &eps[i];
        xs.push(xi);
        ys.push(yi);
    }

    let panel = PanelDataset { n, t, p, y: ys, x: xs };
    let truth = FactorStructure { factors, gamma, loadings, z: zs, eps };
    Ok((panel, truth))
}

/// Largest absolute entry of `Y − Xβ − Fγ − ε` across the panel.
pub fn reconstruction_error(panel: &PanelDataset, truth: &FactorStructure, beta: &[f64]) -> f64 {
    let b = DVector::from_column_slice(beta);
    let mut worst = 0.0_f64;
    for i in 0..panel.n {
        let gi = truth.gamma.row(i).transpose();
        let r = &panel.y[i] - &panel.x[i] * &b - &truth.factors * gi - &truth.eps[i];
        worst = worst.max(r.amax());
    }
    worst
}
