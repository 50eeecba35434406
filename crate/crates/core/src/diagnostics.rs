//! Sampled surrogates for the design and spectrum conditions behind the
//! estimator's guarantees.
//!
//! None of these certify anything. `re_condition_sample` in particular only
//! explores finitely many cone directions, so the value it reports can only
//! overstate the true restricted-eigenvalue constant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{HdcceError, Result};
use crate::linalg::max_abs;
use crate::projection::ProjectionMatrix;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReEstimate {
    /// 0-based support set `I`.
    pub index_set: Vec<usize>,
    /// Smallest sampled `φ(b) = √(‖Ab‖²|I| / (rows · ‖b_I‖₁²))`.
    pub phi_lower: f64,
    pub samples: usize,
    #[serde(skip)]
    pub sampled_phi: Vec<f64>,
}

impl ReEstimate {
    /// Number of sampled directions whose implied constant falls below `phi`.
    pub fn violations_at(&self, phi: f64) -> usize {
        self.sampled_phi.iter().filter(|&&v| v < phi).count()
    }
}

/// Samples directions from the cone `3‖b_I‖₁ ≥ ‖b_{Iᶜ}‖₁` and records the
/// smallest implied restricted-eigenvalue constant.
///
/// `b_I` is Gaussian; `b_{Iᶜ}` is a Gaussian direction rescaled to ℓ₁ norm
/// `u · 3‖b_I‖₁`. A quarter of the draws use `u = 0` (directions supported
/// on `I`), the rest `u ~ Uniform(0, 1)`.
pub fn re_condition_sample(design: &DMatrix<f64>, index_set: &[usize], samples: usize, seed: u64) -> Result<ReEstimate> {
    let p = design.ncols();
    if index_set.is_empty() {
        return Err(HdcceError::InvalidConfig("restricted-eigenvalue index set is empty".into()));
    }
    if samples == 0 {
        return Err(HdcceError::InvalidConfig("need at least one sample".into()));
    }
    if let Some(&j) = index_set.iter().find(|&&j| j >= p) {
        return Err(HdcceError::Dimension(format!("index {} outside design with {p} columns", j + 1)));
    }
    let mut in_set = vec![false; p];
    for &j in index_set {
        in_set[j] = true;
    }
    let outside: Vec<usize> = (0..p).filter(|&j| !in_set[j]).collect();
    let rows = design.nrows() as f64;
    let card = index_set.len() as f64;
    let mut rng = stream_rng(seed, Stream::Diagnostics);
    let mut sampled_phi = Vec::with_capacity(samples);
    let mut b = DVector::zeros(p);
    for _ in 0..samples {
        b.fill(0.0);
        let mut l1_in = 0.0;
        for &j in index_set {
            let v: f64 = rng.sample(StandardNormal);
            b[j] = v;
            l1_in += v.abs();
        }
        let u: f64 = if rng.random_bool(0.25) { 0.0 } else { rng.random() };
        let mut l1_out = 0.0;
        for &j in &outside {
            let v: f64 = rng.sample(StandardNormal);
            b[j] = v;
            l1_out += v.abs();
        }
        if l1_out > 0.0 {
            let s = u * 3.0 * l1_in / l1_out;
            for &j in &outside {
                b[j] *= s;
            }
        }
        let ab = design * &b;
        sampled_phi.push((ab.norm_squared() * card / (rows * l1_in * l1_in)).sqrt());
    }
    let phi_lower = sampled_phi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ReEstimate { index_set: index_set.to_vec(), phi_lower, samples, sampled_phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionQuality {
    /// `‖ΠF‖_F / ‖F‖_F`.
    pub ratio: f64,
    /// `max |Π − Πᵀ|`.
    pub sym_err: f64,
    /// `max |ΠΠ − Π|`.
    pub idem_err: f64,
}

pub fn projection_quality(proj: &ProjectionMatrix, factors: &DMatrix<f64>) -> ProjectionQuality {
    let pf = &proj.mat * factors;
    let denom = factors.norm();
    let ratio = if denom > 0.0 { pf.norm() / denom } else { 0.0 };
    let sym_err = max_abs(&(&proj.mat - proj.mat.transpose()));
    let idem_err = max_abs(&(&proj.mat * &proj.mat - &proj.mat));
    ProjectionQuality { ratio, sym_err, idem_err }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeReport {
    pub head: Vec<f64>,
    /// `λ̂_k / λ̂_{k+1}`; infinite when `λ̂_{k+1} = 0`.
    pub gap_ratio: f64,
    /// `λ̂_k / p`.
    pub head_over_p: f64,
}

pub fn eigen_spike_report(eigvals: &[f64], k: usize) -> Result<SpikeReport> {
    let p = eigvals.len();
    if k == 0 || k >= p {
        return Err(HdcceError::InvalidConfig(format!("spike report needs 1 <= k < p, got k = {k}, p = {p}")));
    }
    let lk = eigvals[k - 1];
    let next = eigvals[k];
    let gap_ratio = if next == 0.0 { f64::INFINITY } else { lk / next };
    Ok(SpikeReport { head: eigvals[..k].to_vec(), gap_ratio, head_over_p: lk / p as f64 })
}
