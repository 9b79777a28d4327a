//! Monte Carlo harness: generates fuzzy frequency tables from a known
//! latent model and aggregates estimator bias and root mean square error.
//!
//! Cell generation follows a probability-possibility transform built on the
//! discrete Gamma distribution (survival-function differences of the
//! continuous Gamma). Shape and rate are parameterized by a location `m`
//! and spread `s` as `rate = sqrt(m + m^2 + 4 s^2) / (2 s^2)`,
//! `shape = 1 + m * rate`, which places the continuous mode at `m`. The
//! reconstructed count of each cell is perturbed by a discrete-Gamma draw
//! centered on it, whose spread is itself drawn around 1, and the resulting
//! discrete density is normalized to supremum 1 to act as a possibility
//! distribution.

use crate::count::{DefuzzMode, FuzzyCount, FuzzyFrequencyTable};
use crate::error::Result;
use crate::estimator::{fit_dml, fit_fem, FitOptions, FitResult, Method};
use crate::latent::{cell_probabilities, LlcParams};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

/// Location of the spread distribution.
const SPREAD_MODE: f64 = 1.0;
/// Spread of the spread distribution.
const SPREAD_SD: f64 = 0.25;

/// Fixed equidistant threshold banks of the factorial design, keyed by the
/// design label.
pub fn design_thresholds(grid: usize) -> Option<Vec<f64>> {
    match grid {
        4 => Some(vec![-2.0, -0.66, 0.66, 2.0]),
        6 => Some(vec![-2.0, -1.2, -0.4, 0.4, 1.2, 2.0]),
        _ => None,
    }
}

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCondition {
    pub sample_size: usize,
    pub rho0: f64,
    /// Interior thresholds, shared by both margins.
    pub thresholds: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl SimCondition {
    /// Condition from the factorial design grid (`grid` is 4 or 6).
    pub fn from_design(
        sample_size: usize,
        rho0: f64,
        grid: usize,
        replicates: usize,
        seed: u64,
    ) -> Result<Self> {
        let thresholds = design_thresholds(grid).ok_or_else(|| {
            crate::error::Error::Schema(format!("no fixed threshold bank for grid label {grid}"))
        })?;
        Ok(SimCondition {
            sample_size,
            rho0,
            thresholds,
            replicates,
            seed,
        })
    }

    /// Design label: the number of interior thresholds.
    pub fn grid_label(&self) -> usize {
        self.thresholds.len()
    }

    pub fn params(&self) -> Result<LlcParams> {
        LlcParams::new(self.rho0, self.thresholds.clone(), self.thresholds.clone())
    }
}

fn gamma_rate(m: f64, s: f64) -> f64 {
    (m + m * m + 4.0 * s * s).sqrt() / (2.0 * s * s)
}

fn gamma_shape(m: f64, rate: f64) -> f64 {
    1.0 + m * rate
}

/// Survival function of the continuous Gamma(shape, rate).
fn gamma_survival(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(shape, rate * x)
    }
}

/// Discrete-Gamma probability mass at `n`: `S(n) - S(n + 1)`.
pub fn discrete_gamma_pmf(shape: f64, rate: f64, n: usize) -> f64 {
    (gamma_survival(shape, rate, n as f64) - gamma_survival(shape, rate, (n + 1) as f64)).max(0.0)
}

/// Inverse-cdf draw from the discrete Gamma truncated at `max_n`; the tail
/// mass beyond the truncation point is lumped into `max_n`.
fn sample_discrete_gamma(shape: f64, rate: f64, max_n: usize, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let target = 1.0 - u;
    // Smallest k with S(k + 1) <= 1 - u.
    let mut lo = 0usize;
    let mut hi = max_n;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if gamma_survival(shape, rate, (mid + 1) as f64) <= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Possibility distribution over `{0, ..., size}`: the discrete-Gamma pmf
/// located at `m1` with spread `s1`, normalized to supremum 1.
pub(crate) fn possibility_from_gamma(m1: f64, s1: f64, size: usize) -> FuzzyCount {
    let rate = gamma_rate(m1, s1);
    let shape = gamma_shape(m1, rate);
    let mut memberships: Vec<f64> = (0..=size)
        .map(|k| discrete_gamma_pmf(shape, rate, k))
        .collect();
    let sup = memberships.iter().fold(0.0, |a: f64, &b| a.max(b));
    debug_assert!(sup > 0.0, "possibility distribution has no mass (m1 = {m1}, s1 = {s1})");
    if sup > 0.0 {
        for m in &mut memberships {
            *m /= sup;
        }
    }
    FuzzyCount::from_memberships(memberships)
}

fn generate_cell(n: f64, size: usize, rng: &mut impl Rng) -> FuzzyCount {
    let rate_s = gamma_rate(SPREAD_MODE, SPREAD_SD);
    let shape_s = gamma_shape(SPREAD_MODE, rate_s);
    // Continuous draw keeps the spread strictly positive.
    let s1 = Gamma::new(shape_s, 1.0 / rate_s)
        .expect("valid spread parameters")
        .sample(rng);
    let rate_m = gamma_rate(n, s1);
    let shape_m = gamma_shape(n, rate_m);
    let m1 = sample_discrete_gamma(shape_m, rate_m, size, rng) as f64;
    possibility_from_gamma(m1, s1, size)
}

/// Generates one fuzzy frequency table from the condition's ground truth:
/// each cell's reconstructed count `I * pi` is blurred into a possibility
/// distribution over `{0, ..., I}`.
pub fn generate_table(cond: &SimCondition, rng: &mut impl Rng) -> Result<FuzzyFrequencyTable> {
    let params = cond.params()?;
    let pi = cell_probabilities(&params);
    let size = cond.sample_size;
    let cells: Vec<Vec<FuzzyCount>> = (0..pi.rows())
        .map(|r| {
            (0..pi.cols())
                .map(|c| generate_cell(size as f64 * pi[(r, c)], size, rng))
                .collect()
        })
        .collect();
    FuzzyFrequencyTable::from_cells(cells, size)
}

/// Deterministic per-replicate stream: the base seed and replicate index
/// are mixed through SplitMix64.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut z = seed.wrapping_add((replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Options for a study run.
#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    pub fit: FitOptions,
    /// Keep per-replicate raw estimates in the report.
    pub keep_replicates: bool,
}

/// Estimates from one replicate for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEstimate {
    pub method: Method,
    pub rho: Option<f64>,
    pub tau_row: Option<Vec<f64>>,
    pub tau_col: Option<Vec<f64>>,
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregated statistics for one method within one condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub bias_rho: f64,
    pub rmse_rho: f64,
    /// Bias/rmse of the aggregated thresholds (sum of interior thresholds),
    /// pooled over both margins.
    pub bias_tau: f64,
    pub rmse_tau: f64,
    /// Per-threshold bias, pooled over both margins.
    pub threshold_bias: Vec<f64>,
    /// Per-threshold variance of the estimates, pooled over both margins.
    pub threshold_var: Vec<f64>,
}

/// Results for one condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: SimCondition,
    pub stats: Vec<MethodStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicates: Vec<Vec<MethodEstimate>>,
}

impl ConditionReport {
    pub fn stats_for(&self, method: Method) -> Option<&MethodStats> {
        self.stats.iter().find(|s| s.method == method)
    }
}

/// Full study output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub conditions: Vec<ConditionReport>,
}

const METHODS: [Method; 3] = [Method::Fem, Method::DmlMax, Method::DmlMean];

fn fit_one(table: &FuzzyFrequencyTable, method: Method, opts: &FitOptions) -> Result<FitResult> {
    match method {
        Method::Fem => fit_fem(table, opts),
        Method::DmlMax => fit_dml(table, DefuzzMode::Max, opts),
        Method::DmlMean => fit_dml(table, DefuzzMode::Mean, opts),
    }
}

fn run_replicate(cond: &SimCondition, replicate: usize, opts: &StudyOptions) -> Vec<MethodEstimate> {
    let mut rng = replicate_rng(cond.seed, replicate);
    let table = match generate_table(cond, &mut rng) {
        Ok(t) => t,
        Err(e) => {
            return METHODS
                .iter()
                .map(|&method| MethodEstimate {
                    method,
                    rho: None,
                    tau_row: None,
                    tau_col: None,
                    converged: None,
                    error: Some(e.to_string()),
                })
                .collect();
        }
    };
    METHODS
        .iter()
        .map(|&method| match fit_one(&table, method, &opts.fit) {
            Ok(fit) => MethodEstimate {
                method,
                rho: Some(fit.params.rho()),
                tau_row: Some(fit.params.tau_row().to_vec()),
                tau_col: Some(fit.params.tau_col().to_vec()),
                converged: Some(fit.converged),
                error: None,
            },
            Err(e) => MethodEstimate {
                method,
                rho: None,
                tau_row: None,
                tau_col: None,
                converged: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

fn aggregate(cond: &SimCondition, replicates: &[Vec<MethodEstimate>]) -> Vec<MethodStats> {
    let tau0_sum: f64 = cond.thresholds.iter().sum();
    METHODS
        .iter()
        .map(|&method| {
            let estimates: Vec<&MethodEstimate> = replicates
                .iter()
                .map(|r| r.iter().find(|e| e.method == method).expect("method present"))
                .collect();
            let ok: Vec<&&MethodEstimate> =
                estimates.iter().filter(|e| e.error.is_none()).collect();
            let n_ok = ok.len();
            let n_failed = estimates.len() - n_ok;

            let mut bias_rho = 0.0;
            let mut mse_rho = 0.0;
            for e in &ok {
                let err = e.rho.unwrap() - cond.rho0;
                bias_rho += err;
                mse_rho += err * err;
            }

            // Aggregated threshold statistic: sum of interior thresholds,
            // both margins pooled.
            let mut bias_tau = 0.0;
            let mut mse_tau = 0.0;
            let k = cond.thresholds.len();
            let mut t_bias = vec![0.0; k];
            let mut t_m2 = vec![0.0; k];
            for e in &ok {
                for taus in [e.tau_row.as_ref().unwrap(), e.tau_col.as_ref().unwrap()] {
                    let err = taus.iter().sum::<f64>() - tau0_sum;
                    bias_tau += err;
                    mse_tau += err * err;
                    for (i, (&t, &t0)) in taus.iter().zip(&cond.thresholds).enumerate() {
                        t_bias[i] += t - t0;
                        t_m2[i] += t * t;
                    }
                }
            }

            let n = n_ok.max(1) as f64;
            let n2 = (2 * n_ok).max(1) as f64;
            let threshold_bias: Vec<f64> = t_bias.iter().map(|b| b / n2).collect();
            let threshold_var: Vec<f64> = t_m2
                .iter()
                .zip(&threshold_bias)
                .zip(&cond.thresholds)
                .map(|((&m2, &b), &t0)| {
                    let mean = b + t0;
                    (m2 / n2 - mean * mean).max(0.0)
                })
                .collect();

            MethodStats {
                method,
                n_ok,
                n_failed,
                bias_rho: bias_rho / n,
                rmse_rho: (mse_rho / n).sqrt(),
                bias_tau: bias_tau / n2,
                rmse_tau: (mse_tau / n2).sqrt(),
                threshold_bias,
                threshold_var,
            }
        })
        .collect()
}

/// Runs every condition: replicates in parallel over independent RNG
/// streams, aggregation in fixed replicate order so results are
/// reproducible bit for bit.
pub fn run_study(conditions: &[SimCondition], opts: &StudyOptions) -> Result<SimReport> {
    let mut reports = Vec::with_capacity(conditions.len());
    for cond in conditions {
        cond.params()?;
        let replicates: Vec<Vec<MethodEstimate>> = (0..cond.replicates)
            .into_par_iter()
            .map(|b| run_replicate(cond, b, opts))
            .collect();
        let stats = aggregate(cond, &replicates);
        reports.push(ConditionReport {
            condition: cond.clone(),
            stats,
            replicates: if opts.keep_replicates { replicates } else { Vec::new() },
        });
    }
    Ok(SimReport {
        conditions: reports,
    })
}

impl SimReport {
    /// Wide summary CSV: one row per condition, bias/rmse columns for the
    /// correlation and the aggregated thresholds, per method.
    pub fn write_summary_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "sample_size,rho0,grid,replicates,seed")?;
        for tag in ["fem", "dml_max", "dml_mean"] {
            write!(
                w,
                ",{tag}_bias_rho,{tag}_rmse_rho,{tag}_bias_tau,{tag}_rmse_tau,{tag}_failed"
            )?;
        }
        writeln!(w)?;
        for report in &self.conditions {
            let c = &report.condition;
            write!(
                w,
                "{},{},{},{},{}",
                c.sample_size,
                c.rho0,
                c.grid_label(),
                c.replicates,
                c.seed
            )?;
            for method in METHODS {
                let s = report.stats_for(method).expect("stats present");
                write!(
                    w,
                    ",{},{},{},{},{}",
                    s.bias_rho, s.rmse_rho, s.bias_tau, s.rmse_tau, s.n_failed
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Per-threshold diagnostics CSV (bias and variance per threshold
    /// index, margins pooled).
    pub fn write_threshold_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "sample_size,rho0,grid,method,threshold_index,true_value,bias,variance"
        )?;
        for report in &self.conditions {
            let c = &report.condition;
            for s in &report.stats {
                let tag = match s.method {
                    Method::Fem => "fem",
                    Method::DmlMax => "dml-max",
                    Method::DmlMean => "dml-mean",
                };
                for (i, (&b, &v)) in s.threshold_bias.iter().zip(&s.threshold_var).enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        c.sample_size,
                        c.rho0,
                        c.grid_label(),
                        tag,
                        i + 1,
                        c.thresholds[i],
                        b,
                        v
                    )?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_telescopes_to_total_mass() {
        let (shape, rate) = (13.0, 12.0);
        let total: f64 = (0..=50).map(|k| discrete_gamma_pmf(shape, rate, k)).sum();
        let tail = gamma_survival(shape, rate, 51.0);
        assert!((total + tail - 1.0).abs() < 1e-12, "total = {total}, tail = {tail}");
    }

    #[test]
    fn possibility_is_normalized_and_peaks_near_location() {
        // Small spread pins the mode; the peak must sit within one count of
        // the location parameter.
        for m1 in [0.0, 3.0, 17.0, 40.0] {
            let poss = possibility_from_gamma(m1, 0.05, 60);
            let sup = poss.memberships().iter().fold(0.0, |a: f64, &b| a.max(b));
            assert_eq!(sup, 1.0);
            let peak = poss.defuzzify_max().unwrap() as f64;
            assert!(
                (peak - m1).abs() <= 1.0,
                "peak {peak} too far from location {m1}"
            );
        }
    }

    #[test]
    fn generated_cells_are_normal_possibilities() {
        let cond = SimCondition::from_design(250, 0.5, 4, 1, 99).unwrap();
        let mut rng = replicate_rng(cond.seed, 0);
        let table = generate_table(&cond, &mut rng).unwrap();
        assert_eq!(table.rows(), 5);
        assert_eq!(table.cols(), 5);
        for (_, _, cell) in table.cells() {
            let sup = cell.memberships().iter().fold(0.0, |a: f64, &b| a.max(b));
            assert_eq!(sup, 1.0);
            assert_eq!(cell.memberships().len(), 251);
        }
    }

    #[test]
    fn generation_is_deterministic_per_stream() {
        let cond = SimCondition::from_design(150, 0.15, 4, 1, 1234).unwrap();
        let t1 = generate_table(&cond, &mut replicate_rng(cond.seed, 0)).unwrap();
        let t2 = generate_table(&cond, &mut replicate_rng(cond.seed, 0)).unwrap();
        assert_eq!(t1, t2);
        let t3 = generate_table(&cond, &mut replicate_rng(cond.seed, 1)).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn discrete_sampler_tracks_location() {
        let mut rng = replicate_rng(7, 0);
        let (m, s) = (20.0, 1.0);
        let rate = gamma_rate(m, s);
        let shape = gamma_shape(m, rate);
        let draws: Vec<usize> = (0..200)
            .map(|_| sample_discrete_gamma(shape, rate, 100, &mut rng))
            .collect();
        let mean = draws.iter().sum::<usize>() as f64 / draws.len() as f64;
        assert!((mean - m).abs() < 1.0, "mean draw {mean}");
        assert!(draws.iter().all(|&d| d <= 100));
    }

    #[test]
    fn small_study_is_reproducible() {
        let cond = SimCondition::from_design(150, 0.5, 4, 4, 2024).unwrap();
        let opts = StudyOptions {
            keep_replicates: true,
            ..Default::default()
        };
        let a = run_study(std::slice::from_ref(&cond), &opts).unwrap();
        let b = run_study(std::slice::from_ref(&cond), &opts).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
        let stats = a.conditions[0].stats_for(Method::Fem).unwrap();
        assert!(stats.rmse_rho >= stats.bias_rho.abs());
    }

    #[test]
    fn summary_csv_layout() {
        let cond = SimCondition::from_design(150, 0.15, 4, 2, 5).unwrap();
        let report = run_study(&[cond], &StudyOptions::default()).unwrap();
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("sample_size,rho0,grid"));
        assert_eq!(header.split(',').count(), 5 + 15);
        assert_eq!(lines.count(), 1);
    }
}
