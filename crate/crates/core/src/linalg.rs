//! Dense helpers shared by the normalization, simulation and detection code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Centers every column and scales it to unit Euclidean norm. Columns that
/// are constant are left at zero.
pub fn standardize_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Returns `(A^{-1/2}, null_dims)` for a symmetric matrix. Eigenvalues below
/// `floor` are treated as null directions and projected out.
pub fn inverse_sqrt(a: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(a.clone());
    let mut null_dims = 0;
    let scaled: DVector<f64> = eig.eigenvalues.map(|v| {
        if v < floor {
            null_dims += 1;
            0.0
        } else {
            1.0 / v.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&scaled) * q.transpose();
    (symmetrize(out), null_dims)
}

/// Floors the spectrum of a symmetric matrix at `floor` and rescales the
/// result back to an exact unit diagonal.
pub fn repair_correlation(a: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.min() >= floor {
        let mut out = symmetrize(a.clone());
        out.fill_diagonal(1.0);
        return out;
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    let d: Vec<f64> = (0..out.nrows()).map(|i| out[(i, i)].sqrt()).collect();
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] /= d[i] * d[j];
        }
    }
    let mut out = symmetrize(out);
    out.fill_diagonal(1.0);
    out
}

pub fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Pearson correlation between the columns of `m`. Constant columns get zero
/// correlation with everything and a unit diagonal.
pub fn column_correlation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    standardize_columns(&mut s);
    let mut c = s.transpose() * &s;
    c.fill_diagonal(1.0);
    symmetrize(c)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}
