//! Fuzzy counts as generalized natural numbers.
//!
//! Per-observation degrees of inclusion are joined by pairwise minimum,
//! then turned into a fuzzy count via Zadeh's counting functions: the
//! membership of `n` is the minimum of the possibility that at least `n`
//! observations fall in the cell (FGCount) and the possibility that at
//! most `n` do (FLCount).

use crate::error::{Error, Result};
use crate::fuzzy::{FuzzyPartition, FuzzySample};
use crate::grid::Grid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Elementwise minimum of row and column inclusion degrees.
pub fn joint_inclusion(eps_row: &[f64], eps_col: &[f64]) -> Result<Vec<f64>> {
    if eps_row.len() != eps_col.len() {
        return Err(Error::LengthMismatch {
            left: eps_row.len(),
            right: eps_col.len(),
        });
    }
    Ok(eps_row
        .iter()
        .zip(eps_col)
        .map(|(a, b)| a.min(*b))
        .collect())
}

/// `z[i]` = number of entries `>= eps[i]`, computed column-wise from the
/// Heaviside step of the difference matrix `eps 1' - 1 eps'` with
/// `H(0) = 1`.
fn heaviside_ranks(eps: &[f64]) -> Vec<usize> {
    eps.iter()
        .map(|&ei| eps.iter().filter(|&&ej| ej - ei >= 0.0).count())
        .collect()
}

fn fgc_from_ranks(eps: &[f64], z: &[usize], n: usize) -> f64 {
    if n == 0 {
        // At least zero members is certain.
        return 1.0;
    }
    eps.iter()
        .zip(z)
        .filter(|(_, &zi)| zi >= n)
        .map(|(&e, _)| e)
        .fold(0.0, f64::max)
}

fn flc_from_ranks(eps: &[f64], z: &[usize], n: usize) -> f64 {
    1.0 - eps
        .iter()
        .zip(z)
        .filter(|(_, &zi)| zi >= n + 1)
        .map(|(&e, _)| e)
        .fold(0.0, f64::max)
}

/// Zadeh counting functions `(FGC(n), FLC(n))` for a vector of inclusion
/// degrees.
pub fn zadeh_counts(eps: &[f64], n: usize) -> (f64, f64) {
    debug_assert!(n <= eps.len());
    debug_assert!(eps.iter().all(|e| (0.0..=1.0).contains(e)));
    let z = heaviside_ranks(eps);
    (fgc_from_ranks(eps, &z, n), flc_from_ranks(eps, &z, n))
}

/// A fuzzy count: membership vector over the support `{0, ..., I}`.
///
/// The vector need not be normal; `fuzzy_count` leaves the raw minimum of
/// the two counting functions unless normalization is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FuzzyCount {
    memberships: Vec<f64>,
}

impl FuzzyCount {
    /// Fuzzy count from per-observation inclusion degrees. With
    /// `normalize` the memberships are rescaled to supremum 1 (when the
    /// raw supremum is positive).
    pub fn from_inclusion(eps: &[f64], normalize: bool) -> Self {
        let z = heaviside_ranks(eps);
        let mut memberships: Vec<f64> = (0..=eps.len())
            .map(|n| fgc_from_ranks(eps, &z, n).min(flc_from_ranks(eps, &z, n)))
            .collect();
        if normalize {
            let sup = memberships.iter().fold(0.0, |a: f64, &b| a.max(b));
            if sup > 0.0 {
                for m in &mut memberships {
                    *m /= sup;
                }
            }
        }
        FuzzyCount { memberships }
    }

    /// Point mass at `n` over support `{0, ..., support_max}`.
    pub fn degenerate(n: usize, support_max: usize) -> Self {
        assert!(n <= support_max);
        let mut memberships = vec![0.0; support_max + 1];
        memberships[n] = 1.0;
        FuzzyCount { memberships }
    }

    pub fn from_memberships(memberships: Vec<f64>) -> Self {
        FuzzyCount { memberships }
    }

    pub fn memberships(&self) -> &[f64] {
        &self.memberships
    }

    /// Largest representable count (`I`).
    pub fn support_max(&self) -> usize {
        self.memberships.len() - 1
    }

    pub fn is_degenerate(&self) -> bool {
        self.memberships.iter().filter(|&&m| m > 0.0).count() == 1
            && self.memberships.iter().any(|&m| m == 1.0)
    }

    /// Membership-weighted average count.
    pub fn defuzzify_mean(&self) -> Result<f64> {
        let total: f64 = self.memberships.iter().sum();
        if total <= 0.0 {
            return Err(Error::AllZeroMembership);
        }
        let weighted: f64 = self
            .memberships
            .iter()
            .enumerate()
            .map(|(n, &m)| n as f64 * m)
            .sum();
        Ok(weighted / total)
    }

    /// Largest maximizer of the membership function (ties broken upward).
    pub fn defuzzify_max(&self) -> Result<usize> {
        let sup = self.memberships.iter().fold(0.0, |a: f64, &b| a.max(b));
        if sup <= 0.0 {
            return Err(Error::AllZeroMembership);
        }
        Ok(self
            .memberships
            .iter()
            .rposition(|&m| m == sup)
            .expect("supremum attained"))
    }
}

/// Defuzzification rule for turning fuzzy counts into real counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefuzzMode {
    Mean,
    Max,
}

/// Options for [`FuzzyFrequencyTable::build`].
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Rescale each cell's memberships to supremum 1.
    pub normalize: bool,
    /// Check the Ruspini and length conditions before counting.
    pub validate_partitions: bool,
    /// Tolerance for the sum-to-one check.
    pub partition_tol: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            normalize: false,
            validate_partitions: true,
            partition_tol: 1e-8,
        }
    }
}

/// R x C grid of fuzzy counts for one pair of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyFrequencyTable {
    #[serde(rename = "I")]
    sample_size: usize,
    #[serde(rename = "R")]
    rows: usize,
    #[serde(rename = "C")]
    cols: usize,
    /// Row-major: `cells[r][c]` is the fuzzy count for granule pair (r, c).
    cells: Vec<Vec<FuzzyCount>>,
    /// Names of the (row, column) variables, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(String, String)>,
}

impl FuzzyFrequencyTable {
    /// Builds the fuzzy frequency table for a pair of samples classified by
    /// their respective partitions.
    pub fn build(
        xs_j: &FuzzySample,
        xs_k: &FuzzySample,
        g_j: &FuzzyPartition,
        g_k: &FuzzyPartition,
        opts: &BuildOptions,
    ) -> Result<Self> {
        if xs_j.len() != xs_k.len() {
            return Err(Error::LengthMismatch {
                left: xs_j.len(),
                right: xs_k.len(),
            });
        }
        if xs_j.is_empty() {
            return Err(Error::EmptySample);
        }
        if opts.validate_partitions {
            g_j.validate_with_sample(xs_j, opts.partition_tol)?;
            g_k.validate_with_sample(xs_k, opts.partition_tol)?;
        }

        let eps_rows: Vec<Vec<f64>> = g_j
            .granules()
            .iter()
            .map(|g| {
                xs_j.observations()
                    .iter()
                    .map(|x| x.inclusion_degree(g))
                    .collect()
            })
            .collect();
        let eps_cols: Vec<Vec<f64>> = g_k
            .granules()
            .iter()
            .map(|g| {
                xs_k.observations()
                    .iter()
                    .map(|x| x.inclusion_degree(g))
                    .collect()
            })
            .collect();

        let cols = g_k.len();
        let cells: Vec<Vec<FuzzyCount>> = (0..g_j.len())
            .into_par_iter()
            .map(|r| {
                (0..cols)
                    .map(|c| {
                        let eps = joint_inclusion(&eps_rows[r], &eps_cols[c])
                            .expect("equal sample lengths");
                        FuzzyCount::from_inclusion(&eps, opts.normalize)
                    })
                    .collect()
            })
            .collect();

        Ok(FuzzyFrequencyTable {
            sample_size: xs_j.len(),
            rows: g_j.len(),
            cols,
            cells,
            pair: None,
        })
    }

    /// Assembles a table from pre-computed cells.
    pub fn from_cells(cells: Vec<Vec<FuzzyCount>>, sample_size: usize) -> Result<Self> {
        let rows = cells.len();
        let cols = cells.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::Schema("table needs at least one cell".into()));
        }
        for row in &cells {
            if row.len() != cols {
                return Err(Error::Schema("ragged table rows".into()));
            }
            for cell in row {
                if cell.support_max() != sample_size {
                    return Err(Error::Schema(format!(
                        "cell membership vector has length {}, expected {}",
                        cell.memberships().len(),
                        sample_size + 1
                    )));
                }
            }
        }
        Ok(FuzzyFrequencyTable {
            sample_size,
            rows,
            cols,
            cells,
            pair: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn cell(&self, r: usize, c: usize) -> &FuzzyCount {
        &self.cells[r][c]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &FuzzyCount)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, cell)| (r, c, cell)))
    }

    /// Defuzzifies every cell into a real-valued count grid.
    pub fn defuzzify(&self, mode: DefuzzMode) -> Result<Grid> {
        let mut grid = Grid::zeros(self.rows, self.cols);
        for (r, c, cell) in self.cells() {
            grid[(r, c)] = match mode {
                DefuzzMode::Mean => cell.defuzzify_mean()?,
                DefuzzMode::Max => cell.defuzzify_max()? as f64,
            };
        }
        Ok(grid)
    }

    /// Writes the long CSV format `(r, c, n, membership)` for plotting.
    pub fn write_long_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,c,n,membership")?;
        for (r, c, cell) in self.cells() {
            for (n, m) in cell.memberships().iter().enumerate() {
                writeln!(w, "{},{},{},{}", r + 1, c + 1, n, m)?;
            }
        }
        Ok(())
    }
}
