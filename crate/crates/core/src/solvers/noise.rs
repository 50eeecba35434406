use rand::Rng;
use rand_distr::StandardNormal;

use super::lasso::dot;
use super::TransformedPanel;
use crate::rng::{stream_rng, Stream};
use crate::stats::quantile;

/// `nsim` draws of `4‖X̂ᵀε‖_∞ / (nT)` with `ε ~ N(0, noise_sd² I)`, holding
/// the design fixed.
pub fn effective_noise_draws(panel: &TransformedPanel, nsim: usize, noise_sd: f64, seed: u64) -> Vec<f64> {
    let rows = panel.rows();
    let mut rng = stream_rng(seed, Stream::EffectiveNoise);
    let mut eps = vec![0.0; rows];
    (0..nsim)
        .map(|_| {
            for e in eps.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *e = noise_sd * z;
            }
            let sup = (0..panel.p).map(|j| dot(panel.column(j), &eps).abs()).fold(0.0, f64::max);
            4.0 * sup / rows as f64
        })
        .collect()
}

/// Penalty set to the `q`-quantile (type 7) of the simulated effective noise.
pub fn effective_noise_lambda(panel: &TransformedPanel, q: f64, nsim: usize, noise_sd: f64, seed: u64) -> f64 {
    if nsim < 100 {
        log::warn!("effective-noise quantile from only {nsim} draws");
    }
    let draws = effective_noise_draws(panel, nsim.max(1), noise_sd, seed);
    quantile(&draws, q)
}

/// Reference penalty rate `h · log(npT) / min(n, √(nT))`.
pub fn theory_lambda_rate(n: usize, t: usize, p: usize, h: f64) -> f64 {
    let (nf, tf, pf) = (n as f64, t as f64, p as f64);
    h * (nf * pf * tf).ln() / nf.min((nf * tf).sqrt())
}
