//! Pairwise assembly of the latent correlation matrix, with eigenvalue
//! clipping when the pairwise estimates are not positive semidefinite.

use crate::count::{DefuzzMode, FuzzyFrequencyTable};
use crate::error::{Error, Result};
use crate::estimator::{fit_dml, fit_fem, FitOptions, FitResult, Method};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Smoothing fires when the smallest eigenvalue is below this.
const EIG_TOL: f64 = 1e-10;
/// Negative eigenvalues are replaced by this floor.
const EIG_FLOOR: f64 = 1e-8;

/// Assembled correlation matrix plus the per-pair fits.
#[derive(Debug, Clone)]
pub struct MatrixAssembly {
    /// Symmetric with unit diagonal.
    pub matrix: Vec<Vec<f64>>,
    /// True when the eigenvalue correction was applied.
    pub smoothed: bool,
    pub fits: BTreeMap<(usize, usize), FitResult>,
}

/// Fits every pair `(j, k)` independently (in parallel) and assembles the
/// `J x J` correlation matrix. Estimation failures are reported with the
/// offending pair.
pub fn assemble_matrix(
    tables: &BTreeMap<(usize, usize), FuzzyFrequencyTable>,
    dim: usize,
    method: Method,
    opts: &FitOptions,
) -> Result<MatrixAssembly> {
    for j in 0..dim {
        for k in j + 1..dim {
            if !tables.contains_key(&(j, k)) {
                return Err(Error::Schema(format!("missing table for pair ({j}, {k})")));
            }
        }
    }
    for &(j, k) in tables.keys() {
        if j >= k || k >= dim {
            return Err(Error::Schema(format!(
                "pair ({j}, {k}) outside the lower-triangular index range for {dim} variables"
            )));
        }
    }

    let fitted: Vec<((usize, usize), Result<FitResult>)> = tables
        .par_iter()
        .map(|(&key, table)| {
            let fit = match method {
                Method::Fem => fit_fem(table, opts),
                Method::DmlMax => fit_dml(table, DefuzzMode::Max, opts),
                Method::DmlMean => fit_dml(table, DefuzzMode::Mean, opts),
            };
            (key, fit)
        })
        .collect();

    let mut fits = BTreeMap::new();
    for ((j, k), fit) in fitted {
        let fit = fit.map_err(|e| Error::PairFailed {
            j,
            k,
            source: Box::new(e),
        })?;
        fits.insert((j, k), fit);
    }

    let mut matrix = vec![vec![0.0; dim]; dim];
    for row in matrix.iter_mut().enumerate() {
        row.1[row.0] = 1.0;
    }
    for (&(j, k), fit) in &fits {
        matrix[j][k] = fit.params.rho();
        matrix[k][j] = fit.params.rho();
    }

    let (matrix, smoothed) = smooth_to_psd(matrix);
    Ok(MatrixAssembly {
        matrix,
        smoothed,
        fits,
    })
}

/// Eigenvalue-clipping correction: when the matrix has an eigenvalue below
/// `-1e-10`, negative eigenvalues are raised to a small positive floor, the
/// matrix is rebuilt and rescaled back to unit diagonal. Returns the
/// (possibly corrected) matrix and whether smoothing fired.
pub fn smooth_to_psd(matrix: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, bool) {
    let n = matrix.len();
    if n == 0 {
        return (matrix, false);
    }
    let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.min() >= -EIG_TOL {
        return (matrix, false);
    }

    let clipped = eig
        .eigenvalues
        .map(|l| if l < EIG_FLOOR { EIG_FLOOR } else { l });
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let scale: Vec<f64> = (0..n).map(|i| rebuilt[(i, i)].sqrt()).collect();
    let out = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        rebuilt[(i, j)] / (scale[i] * scale[j])
                    }
                })
                .collect()
        })
        .collect();
    (out, true)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    m.symmetric_eigen().eigenvalues.min()
}
