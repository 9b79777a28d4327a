//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by table construction and estimation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Parameters do not describe a valid trapezoidal fuzzy number.
    #[error("invalid fuzzy number: require xl <= c1 <= c2 <= xu and finite values, got ({xl}, {c1}, {c2}, {xu})")]
    InvalidFuzzyNumber { xl: f64, c1: f64, c2: f64, xu: f64 },

    /// A partition failed validation; reports the worst grid point.
    #[error("partition invalid: {reason} (worst point x = {worst_x}, deviation = {deviation:.3e})")]
    PartitionInvalid {
        reason: String,
        worst_x: f64,
        deviation: f64,
    },

    /// Paired vectors have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An operation that requires observations received none.
    #[error("empty sample")]
    EmptySample,

    /// A fuzzy count with no support cannot be defuzzified.
    #[error("fuzzy count has all-zero memberships")]
    AllZeroMembership,

    /// The fuzzy count's support carries no probability mass under the
    /// current cell probability, so the conditional density is undefined;
    /// signals an inconsistent cell.
    #[error("degenerate conditional: fuzzy count support is disjoint from the binomial mass (pi = {pi:.3e})")]
    DegenerateConditional { pi: f64 },

    /// A row or column of expected counts has (effectively) no mass, so the
    /// corresponding threshold quantile degenerates.
    #[error("empty marginal: {axis} {index} gives cumulative proportion {value}, outside (0, 1) or non-increasing")]
    EmptyMarginal {
        axis: &'static str,
        index: usize,
        value: f64,
    },

    /// The empirical information is zero; no standard error exists.
    #[error("singular information matrix: sum of squared scores is zero")]
    SingularInformation,

    /// Argument outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    DomainError(String),

    /// Correlation and/or thresholds violate the parameter-space invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Estimation failed for one pair of a matrix assembly.
    #[error("estimation failed for pair ({j}, {k}): {source}")]
    PairFailed {
        j: usize,
        k: usize,
        #[source]
        source: Box<Error>,
    },

    /// Input file or value does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
