//! High-dimensional common correlated effects (CCE) estimation for panel
//! data with interactive fixed effects.
//!
//! The pipeline counts factors by thresholding the spectrum of the
//! cross-sectional average covariance, projects the estimated factor space
//! out of every unit, and runs a lasso (or least squares) on the projected
//! panel. Oracle and classical pooled-CCE baselines, a data simulator and a
//! seeded Monte Carlo harness are included.

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod projection;
pub mod rng;
pub mod simulate;
pub mod solvers;
pub mod spectral;
pub mod stats;

pub use error::{HdcceError, Result};
pub use estimators::{
    estimate_cce_pooled, estimate_hdcce, estimate_hdcce_with_truth, estimate_oracle, EstimatorOptions, FitReport,
    LambdaRule, Method,
};
pub use panel::{cross_sectional_means, PanelDataset};
pub use projection::{classical_cce_projection, hd_projection, oracle_projection, transform_panel, ProjectionKind, ProjectionMatrix};
pub use simulate::{mean_loading_matrix, simulate_panel, FactorStructure, SimulationConfig};
pub use spectral::{default_tau, khat_threshold, ktilde_ratio, spectral_summary, SpectralSummary};
