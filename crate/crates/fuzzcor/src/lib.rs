//! Fuzzy frequency tables and latent linear (polychoric) correlations for
//! imprecise data.
//!
//! The pipeline has three stages. Observations — crisp or fuzzy — are
//! classified into fuzzy category banks, producing per-cell counts that are
//! generalized natural numbers rather than integers ([`count`]). A zero-mean
//! bivariate Gaussian with thresholded margins links those counts to a latent
//! correlation ([`latent`]). The correlation is estimated either by a fuzzy
//! EM variant of the classic two-stage estimator or by defuzzifying first
//! ([`estimator`]); pairwise estimates assemble into a correlation matrix
//! with positive-semidefinite smoothing ([`matrix`]). A seeded Monte Carlo
//! harness ([`sim`]) measures bias and root mean square error of the three
//! estimators against known ground truth.

pub mod count;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod fuzzy;
pub mod grid;
pub mod latent;
pub mod matrix;
pub mod sim;

pub use count::{BuildOptions, DefuzzMode, FuzzyCount, FuzzyFrequencyTable};
pub use error::{Error, Result};
pub use estimator::{
    conditional_density, e_step, fit_dml, fit_fem, m_step_rho, m_step_thresholds, standard_error,
    FilteredCounts, FitOptions, FitResult, Method,
};
pub use fuzzy::{sample_range, FuzzyNumber, FuzzyPartition, FuzzySample, RangeConvention};
pub use grid::Grid;
pub use latent::{
    bivariate_normal_cdf, bivariate_normal_pdf, bivariate_normal_rect, cell_prob_drho,
    cell_probabilities, std_normal_cdf, std_normal_pdf, std_normal_quantile, LlcParams,
};
pub use matrix::{assemble_matrix, min_eigenvalue, smooth_to_psd, MatrixAssembly};
pub use sim::{generate_table, run_study, SimCondition, SimReport, StudyOptions};
