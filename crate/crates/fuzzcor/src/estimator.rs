//! Latent linear correlation estimation from fuzzy frequency tables.
//!
//! The fuzzy-EM estimator alternates an E-step — conditional expectations
//! of the crisp cell counts given the observed fuzzy counts and the current
//! parameters — with the two-stage M-step: thresholds from cumulative
//! marginals of the filtered counts, then the correlation from the score
//! equation with thresholds fixed. The defuzzified-ML baselines run the
//! same two-stage machinery once on mean- or max-defuzzified counts.

use crate::count::{DefuzzMode, FuzzyCount, FuzzyFrequencyTable};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::latent::{
    cell_prob_drho, cell_probabilities, clamp_rho, std_normal_quantile, LlcParams,
};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Probability floor inside logarithms and score denominators.
const MIN_PROB: f64 = 1e-300;
/// Clamp for cumulative marginal proportions before the normal quantile.
const CUM_EPS: f64 = 1e-12;
/// Grid used to bracket the score equation in the correlation.
const RHO_GRID: usize = 41;

/// Estimation method identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fem,
    DmlMax,
    DmlMean,
}

/// Options shared by the estimators.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stop when the log-likelihood increment falls below this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Use the printed form of the conditional-density denominator (with
    /// the extra count factor) instead of the proper normalization.
    pub compat_eq8: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-9,
            max_iter: 500,
            compat_eq8: false,
        }
    }
}

/// Result of one estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LlcParams,
    pub se_rho: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
}

/// E-step output: conditional expectations of the counts and of the
/// log-factorial term.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCounts {
    pub n_hat: Grid,
    pub logfact_hat: Grid,
}

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Conditional density of the crisp count given a fuzzy count and the cell
/// probability: proportional to `membership(n) * Binomial(n; I, pi)`.
///
/// The proper normalization divides by the total weight so the result is a
/// probability vector; `compat_eq8` selects the printed variant that
/// divides by the count-weighted total instead (not a density).
pub fn conditional_density(count: &FuzzyCount, pi: f64, compat_eq8: bool) -> Result<Vec<f64>> {
    let size = count.support_max();
    let lnfact: Vec<f64> = (0..=size).map(ln_factorial).collect();
    conditional_density_with(count, pi, compat_eq8, &lnfact)
}

fn conditional_density_with(
    count: &FuzzyCount,
    pi: f64,
    compat_eq8: bool,
    lnfact: &[f64],
) -> Result<Vec<f64>> {
    let memberships = count.memberships();
    let total = count.support_max();
    let mut weights = vec![0.0; total + 1];

    if pi <= 0.0 || pi >= 1.0 {
        // Binomial mass collapses onto one endpoint.
        let atom = if pi <= 0.0 { 0 } else { total };
        if memberships[atom] <= 0.0 {
            return Err(Error::DegenerateConditional { pi });
        }
        weights[atom] = memberships[atom];
    } else {
        let ln_pi = pi.ln();
        let ln_qi = (-pi).ln_1p();
        let ln_choose =
            |n: usize| lnfact[total] - lnfact[n] - lnfact[total - n];
        let mut max_lw = f64::NEG_INFINITY;
        let mut lw = vec![f64::NEG_INFINITY; total + 1];
        for (n, &m) in memberships.iter().enumerate() {
            if m > 0.0 {
                let v = m.ln() + ln_choose(n) + n as f64 * ln_pi + (total - n) as f64 * ln_qi;
                lw[n] = v;
                max_lw = max_lw.max(v);
            }
        }
        if max_lw == f64::NEG_INFINITY {
            return Err(Error::DegenerateConditional { pi });
        }
        for (w, &v) in weights.iter_mut().zip(&lw) {
            if v > f64::NEG_INFINITY {
                *w = (v - max_lw).exp();
            }
        }
    }

    let denom: f64 = if compat_eq8 {
        weights
            .iter()
            .enumerate()
            .map(|(n, &w)| n as f64 * w)
            .sum()
    } else {
        weights.iter().sum()
    };
    if denom <= 0.0 {
        return Err(Error::DegenerateConditional { pi });
    }
    for w in &mut weights {
        *w /= denom;
    }
    Ok(weights)
}

/// Conditional expectations for every cell of a table at the given
/// parameters.
pub fn e_step(
    table: &FuzzyFrequencyTable,
    params: &LlcParams,
    compat_eq8: bool,
) -> Result<FilteredCounts> {
    if params.rows() != table.rows() || params.cols() != table.cols() {
        return Err(Error::InvalidParams(format!(
            "parameter grid {}x{} does not match table {}x{}",
            params.rows(),
            params.cols(),
            table.rows(),
            table.cols()
        )));
    }
    let pi = cell_probabilities(params);
    let size = table.sample_size();
    let lnfact: Vec<f64> = (0..=size).map(ln_factorial).collect();

    let mut n_hat = Grid::zeros(table.rows(), table.cols());
    let mut logfact_hat = Grid::zeros(table.rows(), table.cols());
    for (r, c, cell) in table.cells() {
        let density = conditional_density_with(cell, pi[(r, c)], compat_eq8, &lnfact)?;
        let mean: f64 = density
            .iter()
            .enumerate()
            .map(|(n, &p)| n as f64 * p)
            .sum();
        let var: f64 = density
            .iter()
            .enumerate()
            .map(|(n, &p)| (n as f64 - mean).powi(2) * p)
            .sum();
        n_hat[(r, c)] = mean;
        // Second-order expansion of E[n ln n]; zero expectation contributes
        // nothing in the limit.
        logfact_hat[(r, c)] = if mean > 0.0 {
            xlnx(mean) + var / (2.0 * mean)
        } else {
            0.0
        };
    }
    Ok(FilteredCounts { n_hat, logfact_hat })
}

fn filtered_from_crisp(counts: &Grid) -> FilteredCounts {
    let mut logfact = counts.clone();
    for v in logfact.values_mut() {
        *v = xlnx(*v);
    }
    FilteredCounts {
        n_hat: counts.clone(),
        logfact_hat: logfact,
    }
}

/// Complete-data log-likelihood at the filtered counts.
fn complete_loglik(fc: &FilteredCounts, pi: &Grid, sample_size: usize) -> f64 {
    let mut l = ln_factorial(sample_size);
    for (r, c, n) in fc.n_hat.indexed_values() {
        l += n * pi[(r, c)].max(MIN_PROB).ln() - fc.logfact_hat[(r, c)];
    }
    l
}

fn thresholds_from_marginal(marginal: &[f64], sample_size: usize, axis: &'static str) -> Result<Vec<f64>> {
    for (index, &m) in marginal.iter().enumerate() {
        if !(m > 0.0) {
            return Err(Error::EmptyMarginal {
                axis,
                index,
                value: 0.0,
            });
        }
    }
    let total = sample_size as f64;
    let mut taus = Vec::with_capacity(marginal.len().saturating_sub(1));
    let mut cum = 0.0;
    for (index, &m) in marginal.iter().take(marginal.len() - 1).enumerate() {
        cum += m;
        let p = (cum / total).clamp(CUM_EPS, 1.0 - CUM_EPS);
        let t = std_normal_quantile(p)?;
        if taus.last().is_some_and(|&prev| t <= prev) {
            return Err(Error::EmptyMarginal {
                axis,
                index,
                value: p,
            });
        }
        taus.push(t);
    }
    Ok(taus)
}

/// Threshold update: normal quantiles of the cumulative marginal
/// proportions of the expected counts, dropping the final cumulative value.
pub fn m_step_thresholds(n_hat: &Grid, sample_size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let tau_row = thresholds_from_marginal(&n_hat.row_sums(), sample_size, "row")?;
    let tau_col = thresholds_from_marginal(&n_hat.col_sums(), sample_size, "column")?;
    Ok((tau_row, tau_col))
}

fn score_at(n_hat: &Grid, params: &LlcParams) -> f64 {
    let pi = cell_probabilities(params);
    let dpi = cell_prob_drho(params);
    let mut u = 0.0;
    for (r, c, n) in n_hat.indexed_values() {
        if n > 0.0 {
            u += n * dpi[(r, c)] / pi[(r, c)].max(MIN_PROB);
        }
    }
    u
}

fn objective_at(n_hat: &Grid, params: &LlcParams) -> f64 {
    let pi = cell_probabilities(params);
    let mut l = 0.0;
    for (r, c, n) in n_hat.indexed_values() {
        if n > 0.0 {
            l += n * pi[(r, c)].max(MIN_PROB).ln();
        }
    }
    l
}

/// Safeguarded scalar root finding (bisection / secant / inverse quadratic).
fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
) -> f64 {
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5e-14;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else if xm > 0.0 {
            tol1
        } else {
            -tol1
        };
        fb = f(b);
    }
    b
}

fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Solves the score equation for the correlation with thresholds fixed:
/// brackets a sign change on a coarse grid, refines it with safeguarded
/// root finding, and falls back to golden-section maximization of the
/// objective when the score never changes sign.
pub fn m_step_rho(n_hat: &Grid, tau_row: &[f64], tau_col: &[f64], rho_init: f64) -> f64 {
    let base = LlcParams::new(0.0, tau_row.to_vec(), tau_col.to_vec())
        .expect("strictly increasing thresholds");
    let score = |rho: f64| score_at(n_hat, &base.with_rho(rho));
    let objective = |rho: f64| objective_at(n_hat, &base.with_rho(rho));

    let bound = clamp_rho(1.0);
    let xs: Vec<f64> = (0..RHO_GRID)
        .map(|i| -bound + 2.0 * bound * i as f64 / (RHO_GRID - 1) as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| score(x)).collect();
    let objs: Vec<f64> = xs.iter().map(|&x| objective(x)).collect();
    let grid_best = (0..xs.len())
        .max_by(|&i, &j| objs[i].partial_cmp(&objs[j]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();

    // A maximizer has the score falling through zero. Ascending crossings
    // are minima, and both-zero pairs are underflow plateaus near the
    // boundary; skip them. Among candidate brackets prefer the higher
    // objective, then proximity to the initial value.
    let init = clamp_rho(rho_init);
    let mut best: Option<(usize, f64, f64)> = None;
    for i in 0..xs.len() - 1 {
        let descending = fs[i] >= 0.0 && fs[i + 1] <= 0.0 && (fs[i] > 0.0 || fs[i + 1] < 0.0);
        if !descending {
            continue;
        }
        let mid = 0.5 * (xs[i] + xs[i + 1]);
        let obj = objective(mid);
        let dist = (mid - init).abs();
        let better = match best {
            None => true,
            Some((_, bobj, bdist)) => {
                obj > bobj + 1e-12 || ((obj - bobj).abs() <= 1e-12 && dist < bdist)
            }
        };
        if better {
            best = Some((i, obj, dist));
        }
    }

    if let Some((i, _, _)) = best {
        // Exact zeros at an endpoint get a minimal nudge so the bracket
        // stays strict for the root finder.
        let fa = if fs[i] == 0.0 { f64::MIN_POSITIVE } else { fs[i] };
        let fb = if fs[i + 1] == 0.0 { -f64::MIN_POSITIVE } else { fs[i + 1] };
        let root = clamp_rho(brent_root(score, xs[i], xs[i + 1], fa, fb));
        // Keep the root unless the grid saw a clearly better objective
        // elsewhere (a bracket parked on an underflow plateau).
        if objective(root) + 1e-9 >= objs[grid_best] {
            return root;
        }
    }

    // Flat-likelihood guard: maximize the objective directly around the
    // best grid point.
    let lo = xs[grid_best.saturating_sub(1)];
    let hi = xs[(grid_best + 1).min(xs.len() - 1)];
    clamp_rho(golden_max(objective, lo, hi))
}

fn se_from_counts(counts: &Grid, params: &LlcParams) -> Result<f64> {
    let pi = cell_probabilities(params);
    let dpi = cell_prob_drho(params);
    // Empirical information: squared per-observation scores accumulated
    // over cells, weighted by the expected cell counts.
    let mut info = 0.0;
    for (r, c, n) in counts.indexed_values() {
        if n > 0.0 && pi[(r, c)] > 0.0 {
            info += n * (dpi[(r, c)] / pi[(r, c)]).powi(2);
        }
    }
    if !(info > 0.0 && info.is_finite()) {
        return Err(Error::SingularInformation);
    }
    Ok(1.0 / info.sqrt())
}

/// Standard error of the estimated correlation from the outer product of
/// scores at the fitted parameters.
pub fn standard_error(fit: &FitResult, table: &FuzzyFrequencyTable) -> Result<f64> {
    let counts = match fit.method {
        Method::Fem => e_step(table, &fit.params, false)?.n_hat,
        Method::DmlMax => table.defuzzify(DefuzzMode::Max)?,
        Method::DmlMean => table.defuzzify(DefuzzMode::Mean)?,
    };
    se_from_counts(&counts, &fit.params)
}

fn two_stage(counts: &Grid, sample_size: usize, rho_init: f64) -> Result<LlcParams> {
    let (tau_row, tau_col) = m_step_thresholds(counts, sample_size)?;
    let rho = m_step_rho(counts, &tau_row, &tau_col, rho_init);
    LlcParams::new(rho, tau_row, tau_col)
}

/// Fuzzy-EM fit: starts from the defuzzified-ML solution, then iterates
/// E-step and two-stage M-step until the monitored log-likelihood stops
/// increasing.
pub fn fit_fem(table: &FuzzyFrequencyTable, opts: &FitOptions) -> Result<FitResult> {
    let sample_size = table.sample_size();
    let start_counts = table.defuzzify(DefuzzMode::Mean)?;
    let mut params = two_stage(&start_counts, sample_size, 0.0)?;

    let mut fc = e_step(table, &params, opts.compat_eq8)?;
    let mut l_prev = complete_loglik(&fc, &cell_probabilities(&params), sample_size);
    let mut trace = vec![l_prev];
    let mut converged = false;
    let mut iterations = 0;

    for q in 1..=opts.max_iter {
        iterations = q;
        if q > 1 {
            fc = e_step(table, &params, opts.compat_eq8)?;
        }
        params = two_stage(&fc.n_hat, sample_size, params.rho())?;
        let l = complete_loglik(&fc, &cell_probabilities(&params), sample_size);
        let delta = l - l_prev;
        debug_assert!(
            delta >= -1e-10,
            "EM log-likelihood decreased by {:e} at iteration {q}",
            -delta
        );
        trace.push(l);
        l_prev = l;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let final_counts = e_step(table, &params, opts.compat_eq8)?.n_hat;
    let se_rho = se_from_counts(&final_counts, &params)?;
    Ok(FitResult {
        params,
        se_rho,
        loglik_trace: trace,
        iterations,
        converged,
        method: Method::Fem,
    })
}

/// Defuzzified-ML baseline: classic two-stage estimation on crisp counts
/// obtained by defuzzifying every cell; one E-step-free pass.
pub fn fit_dml(table: &FuzzyFrequencyTable, mode: DefuzzMode, _opts: &FitOptions) -> Result<FitResult> {
    let sample_size = table.sample_size();
    let counts = table.defuzzify(mode)?;
    let params = two_stage(&counts, sample_size, 0.0)?;
    let l = complete_loglik(
        &filtered_from_crisp(&counts),
        &cell_probabilities(&params),
        sample_size,
    );
    let se_rho = se_from_counts(&counts, &params)?;
    Ok(FitResult {
        params,
        se_rho,
        loglik_trace: vec![l],
        iterations: 1,
        converged: true,
        method: match mode {
            DefuzzMode::Max => Method::DmlMax,
            DefuzzMode::Mean => Method::DmlMean,
        },
    })
}
