//! Dense linear-algebra helpers shared by the spectral, projection and
//! solver modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff used for every generalized inverse.
pub const RANK_TOL: f64 = 1e-10;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Eigenvector signs follow the crate-wide convention: the entry of largest
/// magnitude is positive, ties going to the lowest index.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_signs(&mut vecs);
    (vals, vecs)
}

/// Flip each column so that its largest-magnitude entry is positive.
pub fn fix_signs(vecs: &mut DMatrix<f64>) {
    for mut col in vecs.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal basis of the column space of `a`.
///
/// Works through the `rows × rows` Gram matrix `a aᵀ`, whose eigenvectors are
/// orthonormal to machine precision regardless of the column count.
/// Directions with eigenvalue at most `RANK_TOL · λ_max` are discarded, which
/// is the same cut as applying that tolerance to `aᵀa`.
pub fn orthonormal_range(a: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = a.nrows();
    if a.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let gram = a * a.transpose();
    let (vals, vecs) = sym_eigen_desc(gram);
    let top = vals[0];
    if !(top > 0.0) {
        return DMatrix::zeros(rows, 0);
    }
    let rank = vals.iter().take_while(|&&v| v > RANK_TOL * top).count();
    vecs.columns(0, rank).into_owned()
}

/// Minimum-norm solution of `a x = b` for symmetric positive semidefinite `a`,
/// using a pseudo-inverse at relative tolerance `RANK_TOL`. Returns the
/// solution and the numerical rank.
pub fn pinv_solve_psd(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let n = a.nrows();
    let (vals, vecs) = sym_eigen_desc(a.clone());
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let mut x = DVector::zeros(n);
    if !(top > 0.0) {
        return (x, 0);
    }
    let mut rank = 0;
    for k in 0..n {
        if vals[k] > RANK_TOL * top {
            let v = vecs.column(k);
            x.axpy(v.dot(b) / vals[k], &v, 1.0);
            rank += 1;
        }
    }
    (x, rank)
}

/// `I - Q Qᵀ` for a matrix `q` with orthonormal columns.
pub fn complement_projector(q: &DMatrix<f64>) -> DMatrix<f64> {
    let t = q.nrows();
    let mut m = DMatrix::identity(t, t);
    if q.ncols() > 0 {
        m.gemm(-1.0, q, &q.transpose(), 1.0);
    }
    m
}

/// Complete the orthonormal columns of `q` (`n × r`) to `n × target` by
/// Gram–Schmidt against the standard basis.
pub fn complete_basis(q: &DMatrix<f64>, target: usize) -> DMatrix<f64> {
    let n = q.nrows();
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < target && e < n {
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v.axpy(-d, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
        e += 1;
    }
    DMatrix::from_columns(&cols)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
