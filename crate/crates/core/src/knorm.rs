//! Removes experiment (row) dependencies before gene correlations are
//! estimated.
//!
//! The mean model is additive in rows and columns; the experiment
//! correlation is the correlation between rows of the gene-standardized
//! residuals, linearly shrunk toward the identity. Normalized data is
//! `Σ^{-1/2} (Z - M)` with every column then centered and scaled to unit norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt, standardize_columns, symmetrize};

pub const DEFAULT_SHRINKAGE: f64 = 0.5;

/// Eigenvalues below this are treated as numerically zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationModel {
    pub mean_matrix: DMatrix<f64>,
    pub experiment_correlation: DMatrix<f64>,
    pub shrinkage_weight: f64,
}

pub fn mean_model(z: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = z.shape();
    let row_means: DVector<f64> = z.column_sum() / p as f64;
    let col_means = z.row_sum() / n as f64;
    let grand = z.sum() / (n * p) as f64;
    DMatrix::from_fn(n, p, |i, j| row_means[i] + col_means[j] - grand)
}

pub fn fit_normalization(z: &DMatrix<f64>, shrinkage_weight: f64) -> Result<NormalizationModel> {
    let (n, p) = z.shape();
    if n < 2 || p < 2 {
        return Err(Error::Dimension(format!("need at least a 2x2 matrix, got {n}x{p}")));
    }
    if !(0.0..=1.0).contains(&shrinkage_weight) {
        return Err(Error::InvalidParameter(format!(
            "shrinkage weight {shrinkage_weight} outside [0, 1]"
        )));
    }
    let mean_matrix = mean_model(z);
    let mut resid = z - &mean_matrix;

    // gene-standardize (columns are already centered by the mean model)
    for mut col in resid.column_iter_mut() {
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }

    // correlation between experiments, genes as observations
    let row_means: DVector<f64> = resid.column_sum() / p as f64;
    for (i, mut row) in resid.row_iter_mut().enumerate() {
        row.add_scalar_mut(-row_means[i]);
    }
    let norms: Vec<f64> = resid.row_iter().map(|r| r.norm()).collect();
    if let Some(i) = norms.iter().position(|&v| v <= 1e-12 * (p as f64).sqrt()) {
        return Err(Error::Degenerate(format!("residual row {i} is constant")));
    }
    let gram = &resid * resid.transpose();
    let mut corr = DMatrix::from_fn(n, n, |i, k| gram[(i, k)] / (norms[i] * norms[k]));
    corr.fill_diagonal(1.0);
    let corr = symmetrize(corr);

    let experiment_correlation =
        corr * (1.0 - shrinkage_weight) + DMatrix::identity(n, n) * shrinkage_weight;
    Ok(NormalizationModel {
        mean_matrix,
        experiment_correlation,
        shrinkage_weight,
    })
}

/// `Σ^{-1/2} (Z - M)` without the final column standardization.
///
/// The residual rows of the additive mean model always sum to zero, so with
/// no shrinkage the fitted correlation has one null direction. That single
/// direction is projected out; any further rank deficiency is an error.
pub fn whiten(z: &DMatrix<f64>, model: &NormalizationModel) -> Result<DMatrix<f64>> {
    if z.shape() != model.mean_matrix.shape() {
        return Err(Error::Dimension(format!(
            "model fitted on {:?}, data is {:?}",
            model.mean_matrix.shape(),
            z.shape()
        )));
    }
    let (root, null_dims) = inverse_sqrt(&model.experiment_correlation, EIGEN_FLOOR);
    if null_dims > 1 {
        return Err(Error::NotPositiveDefinite(format!(
            "experiment correlation has {null_dims} eigenvalues below {EIGEN_FLOOR:e}"
        )));
    }
    Ok(root * (z - &model.mean_matrix))
}

pub fn normalize(z: &DMatrix<f64>, model: &NormalizationModel) -> Result<DMatrix<f64>> {
    let mut out = whiten(z, model)?;
    standardize_columns(&mut out);
    Ok(out)
}

/// Fit and apply in one step.
pub fn fit_and_normalize(z: &DMatrix<f64>, shrinkage_weight: f64) -> Result<DMatrix<f64>> {
    let model = fit_normalization(z, shrinkage_weight)?;
    normalize(z, &model)
}

/// Column standardization only, for when experiment dependencies are weak
/// enough to skip whitening.
pub fn standardize(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    standardize_columns(&mut out);
    out
}
