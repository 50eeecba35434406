//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Cyclic Jacobi rotations; eigenvalues sorted in descending order.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Classical Gram–Schmidt orthonormalisation of the columns of `a`, dropping
/// columns that are dependent to within `1e-10`.
pub fn gram_schmidt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in a.column_iter() {
        let mut v = c.into_owned();
        for _ in 0..2 {
            for q in &out {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * c.norm().max(1.0) {
            out.push(v / norm);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(a.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Least squares through Householder QR of the full-rank design.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).expect("full column rank")
}

/// Type-7 quantile by explicit order statistics.
pub fn order_stat_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Global minimum of `rows⁻¹‖y − Xb‖² + λ‖b‖₁` by enumerating all `3^p` sign
/// patterns: on each pattern the stationarity equations are linear, and a
/// solution counts only when it reproduces its own signs.
pub fn sign_pattern_minimum(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> (f64, DVector<f64>) {
    let (rows, p) = x.shape();
    let half = lambda * rows as f64 / 2.0;
    let objective = |b: &DVector<f64>| (y - x * b).norm_squared() / rows as f64 + lambda * b.lp_norm(1);
    let mut best_b = DVector::zeros(p);
    let mut best = objective(&best_b);
    let patterns = 3usize.pow(p as u32);
    for code in 1..patterns {
        let mut signs = vec![0.0; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let support: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        if support.len() > rows {
            continue;
        }
        let xs = x.select_columns(&support);
        let h = xs.transpose() * &xs;
        let Some(chol) = h.cholesky() else { continue };
        let rhs = xs.transpose() * y - DVector::from_iterator(support.len(), support.iter().map(|&j| half * signs[j]));
        let bs = chol.solve(&rhs);
        if support.iter().enumerate().any(|(k, &j)| bs[k] * signs[j] <= 0.0) {
            continue;
        }
        let mut b = DVector::zeros(p);
        for (k, &j) in support.iter().enumerate() {
            b[j] = bs[k];
        }
        let v = objective(&b);
        if v < best {
            best = v;
            best_b = b;
        }
    }
    (best, best_b)
}
