//! Bivariate Gaussian latent machinery: univariate distribution functions,
//! rectangle probabilities under a zero-mean unit-variance bivariate normal,
//! and their derivative in the correlation parameter.

use crate::error::{Error, Result};
use crate::grid::Grid;
use libm::erfc;
use serde::{Deserialize, Serialize};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const TWO_PI: f64 = std::f64::consts::TAU;

/// Numeric guard keeping the correlation strictly inside (-1, 1).
pub const RHO_GUARD: f64 = 1e-9;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Standard normal distribution function, accurate to machine precision via
/// the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile: rational initial guess refined by one Halley
/// step on the cdf, giving full double accuracy.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        // ln(1 - p) via ln_1p for accuracy near p = 1.
        let q = (-2.0 * (-p).ln_1p()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement.
    let e = std_normal_cdf(x) - p;
    let u = e * TWO_PI.sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

// Gauss-Legendre abscissas/weights used by the bivariate cdf, selected by
// correlation strength.
const GL6: [(f64, f64); 3] = [
    (0.1713244923791704, -0.9324695142031521),
    (0.3607615730481386, -0.6612093864662645),
    (0.4679139345726910, -0.2386191860831969),
];
const GL12: [(f64, f64); 6] = [
    (0.04717533638651183, -0.9815606342467192),
    (0.1069393259953184, -0.9041172563704749),
    (0.1600783285433462, -0.7699026741943047),
    (0.2031674267230659, -0.5873179542866175),
    (0.2334925365383548, -0.3678314989981802),
    (0.2491470458134028, -0.1252334085114689),
];
const GL20: [(f64, f64); 10] = [
    (0.01761400713915212, -0.9931285991850949),
    (0.04060142980038694, -0.9639719272779138),
    (0.06267204833410907, -0.9122344282513259),
    (0.08327674157670475, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.6360536807265150),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183820, -0.3737060887154195),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307258, -0.07652652113349734),
];

/// Upper-orthant probability `P(X > dh, Y > dk)` for a standard bivariate
/// normal with correlation `r`, after Drezner & Wesolowsky as refined by
/// Genz: Gauss-Legendre quadrature on the arcsine reduction for moderate
/// correlations, and a tail-difference expansion when `|r|` is close to 1.
fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };

    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = (asr * (is * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * TWO_PI);
        }
        bvn += std_normal_cdf(-h) * std_normal_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / a_s + hk) / 2.0;
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
            }
            if -hk < 100.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * TWO_PI.sqrt()
                    * std_normal_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let xs = (a * (is * x + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / TWO_PI;
        }
        if r > 0.0 {
            bvn += std_normal_cdf(-h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += std_normal_cdf(k) - std_normal_cdf(h);
            }
        }
    }
    bvn
}

/// Bivariate normal distribution function `P(X <= h, Y <= k)` with
/// correlation `rho`; bounds may be infinite.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return std_normal_cdf(k);
    }
    if k == f64::INFINITY {
        return std_normal_cdf(h);
    }
    bvnd(-h, -k, rho).clamp(0.0, 1.0)
}

/// Rectangle probability `P(a1 < X <= b1, a2 < Y <= b2)` via
/// inclusion-exclusion of the four corner cdf values.
pub fn bivariate_normal_rect(a1: f64, b1: f64, a2: f64, b2: f64, rho: f64) -> f64 {
    debug_assert!(a1 <= b1 && a2 <= b2);
    if a1 >= b1 || a2 >= b2 {
        return 0.0;
    }
    let p = bivariate_normal_cdf(b1, b2, rho) - bivariate_normal_cdf(a1, b2, rho)
        - bivariate_normal_cdf(b1, a2, rho)
        + bivariate_normal_cdf(a1, a2, rho);
    debug_assert!(p > -1e-12, "rectangle probability {p} below tolerance");
    p.clamp(0.0, 1.0)
}

/// Bivariate normal density; zero when either coordinate is infinite.
pub fn bivariate_normal_pdf(x: f64, y: f64, rho: f64) -> f64 {
    if !x.is_finite() || !y.is_finite() {
        return 0.0;
    }
    let omr2 = 1.0 - rho * rho;
    let q = (x * x + y * y - 2.0 * rho * x * y) / omr2;
    (-0.5 * q).exp() / (TWO_PI * omr2.sqrt())
}

/// Parameters of the latent linear correlation model: correlation plus the
/// interior thresholds of the two margins. Outer thresholds at plus/minus
/// infinity are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlcParams {
    rho: f64,
    tau_row: Vec<f64>,
    tau_col: Vec<f64>,
}

fn check_thresholds(tau: &[f64], which: &str) -> Result<()> {
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{which} thresholds must be finite: {tau:?}"
        )));
    }
    if tau.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams(format!(
            "{which} thresholds must be strictly increasing: {tau:?}"
        )));
    }
    Ok(())
}

impl LlcParams {
    /// Builds a parameter vector. The correlation is clamped into
    /// `[-1 + 1e-9, 1 - 1e-9]`; thresholds must be strictly increasing.
    pub fn new(rho: f64, tau_row: Vec<f64>, tau_col: Vec<f64>) -> Result<Self> {
        if !rho.is_finite() || rho.abs() > 1.0 {
            return Err(Error::InvalidParams(format!("correlation {rho} outside [-1, 1]")));
        }
        check_thresholds(&tau_row, "row")?;
        check_thresholds(&tau_col, "column")?;
        Ok(LlcParams {
            rho: clamp_rho(rho),
            tau_row,
            tau_col,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau_row(&self) -> &[f64] {
        &self.tau_row
    }

    pub fn tau_col(&self) -> &[f64] {
        &self.tau_col
    }

    /// Number of row categories (`R`).
    pub fn rows(&self) -> usize {
        self.tau_row.len() + 1
    }

    /// Number of column categories (`C`).
    pub fn cols(&self) -> usize {
        self.tau_col.len() + 1
    }

    /// Row thresholds with the infinite sentinels appended.
    pub fn extended_tau_row(&self) -> Vec<f64> {
        extend_thresholds(&self.tau_row)
    }

    /// Column thresholds with the infinite sentinels appended.
    pub fn extended_tau_col(&self) -> Vec<f64> {
        extend_thresholds(&self.tau_col)
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        LlcParams {
            rho: clamp_rho(rho),
            tau_row: self.tau_row.clone(),
            tau_col: self.tau_col.clone(),
        }
    }
}

pub(crate) fn clamp_rho(rho: f64) -> f64 {
    rho.clamp(-1.0 + RHO_GUARD, 1.0 - RHO_GUARD)
}

fn extend_thresholds(tau: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(tau.len() + 2);
    out.push(f64::NEG_INFINITY);
    out.extend_from_slice(tau);
    out.push(f64::INFINITY);
    out
}

/// Cell probabilities `pi[r][c]` of the latent rectangles. Tiny negative
/// values from corner cancellation are clamped to zero; the grid sums to 1
/// up to accumulated rounding.
pub fn cell_probabilities(params: &LlcParams) -> Grid {
    let tr = params.extended_tau_row();
    let tc = params.extended_tau_col();
    let mut grid = Grid::zeros(params.rows(), params.cols());
    for r in 0..params.rows() {
        for c in 0..params.cols() {
            grid[(r, c)] =
                bivariate_normal_rect(tr[r], tr[r + 1], tc[c], tc[c + 1], params.rho());
        }
    }
    grid
}

/// Derivative of every cell probability with respect to the correlation:
/// the bivariate density summed over the cell corners with alternating
/// signs, infinite corners contributing zero.
pub fn cell_prob_drho(params: &LlcParams) -> Grid {
    let tr = params.extended_tau_row();
    let tc = params.extended_tau_col();
    let rho = params.rho();
    let mut grid = Grid::zeros(params.rows(), params.cols());
    for r in 0..params.rows() {
        for c in 0..params.cols() {
            grid[(r, c)] = bivariate_normal_pdf(tr[r + 1], tc[c + 1], rho)
                - bivariate_normal_pdf(tr[r], tc[c + 1], rho)
                - bivariate_normal_pdf(tr[r + 1], tc[c], rho)
                + bivariate_normal_pdf(tr[r], tc[c], rho);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_basics() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn quantile_domain_rejected() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.1).is_err());
    }

    #[test]
    fn quantile_quartile() {
        let q = std_normal_quantile(0.25).unwrap();
        assert!((q + 0.6744897501960817).abs() < 1e-10, "q = {q}");
    }

    #[test]
    fn quantile_cdf_roundtrip() {
        for i in 0..100 {
            let x = -5.0 + 10.0 * (i as f64 + 0.5) / 100.0;
            let back = std_normal_quantile(std_normal_cdf(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn bivariate_quadrant_asin_identity() {
        // P(X <= 0, Y <= 0) = 1/4 + asin(rho) / (2 pi), exact.
        for rho in [-0.9999, -0.95, -0.5, 0.0, 0.3, 0.5, 0.75, 0.9, 0.95, 0.9999] {
            let got = bivariate_normal_cdf(0.0, 0.0, rho);
            let want = 0.25 + rho.asin() / TWO_PI;
            assert!((got - want).abs() < 5e-15, "rho = {rho}: {got} vs {want}");
        }
    }

    #[test]
    fn rect_independence_and_comonotone() {
        let p = bivariate_normal_rect(f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0, 0.0);
        assert!((p - 0.25).abs() < 1e-14);
        let p = bivariate_normal_rect(f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0, 1.0);
        assert!((p - 0.5).abs() < 1e-14);
        let p = bivariate_normal_rect(f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0, -1.0);
        assert!(p.abs() < 1e-14);
    }

    #[test]
    fn rect_monotone_in_upper_bounds() {
        for rho in [-0.8, -0.2, 0.4, 0.95] {
            let mut prev = 0.0;
            for i in 0..20 {
                let b = -3.0 + 6.0 * i as f64 / 19.0;
                let p = bivariate_normal_rect(-1.5, b.max(-1.5), f64::NEG_INFINITY, 0.7, rho);
                assert!(p >= prev - 1e-14, "rho {rho}, b {b}");
                prev = p;
            }
        }
    }

    #[test]
    fn rect_symmetry_in_arguments() {
        for rho in [-0.97, -0.5, 0.2, 0.93] {
            let a = bivariate_normal_rect(-0.3, 1.2, 0.4, 2.0, rho);
            let b = bivariate_normal_rect(0.4, 2.0, -0.3, 1.2, rho);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cell_probabilities_independence_product() {
        let params = LlcParams::new(0.0, vec![-2.0, -0.66, 0.66, 2.0], vec![-2.0, -0.66, 0.66, 2.0])
            .unwrap();
        let pi = cell_probabilities(&params);
        let tr = params.extended_tau_row();
        for r in 0..params.rows() {
            for c in 0..params.cols() {
                let mr = std_normal_cdf(tr[r + 1]) - std_normal_cdf(tr[r]);
                let mc = std_normal_cdf(tr[c + 1]) - std_normal_cdf(tr[c]);
                assert!((pi[(r, c)] - mr * mc).abs() < 1e-12);
            }
        }
        assert!((pi.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cell_probabilities_quadrant_split() {
        let params = LlcParams::new(0.0, vec![0.0], vec![0.0]).unwrap();
        let pi = cell_probabilities(&params);
        for (_, _, v) in pi.indexed_values() {
            assert!((v - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn drho_grid_sums_to_zero_and_symmetric() {
        let params = LlcParams::new(0.0, vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 1.0]).unwrap();
        let d = cell_prob_drho(&params);
        assert!(d.sum().abs() < 1e-14);
        for r in 0..4 {
            for c in 0..4 {
                assert!((d[(r, c)] - d[(c, r)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn drho_matches_finite_differences() {
        let params = LlcParams::new(0.37, vec![-1.2, 0.4], vec![-0.5, 0.9, 1.7]).unwrap();
        let d = cell_prob_drho(&params);
        let h = 1e-6;
        let hi = cell_probabilities(&params.with_rho(0.37 + h));
        let lo = cell_probabilities(&params.with_rho(0.37 - h));
        for (r, c, v) in d.indexed_values() {
            let fd = (hi[(r, c)] - lo[(r, c)]) / (2.0 * h);
            assert!((v - fd).abs() < 1e-8, "cell ({r},{c}): {v} vs {fd}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(LlcParams::new(1.5, vec![0.0], vec![0.0]).is_err());
        assert!(LlcParams::new(0.5, vec![1.0, 0.0], vec![0.0]).is_err());
        assert!(LlcParams::new(0.5, vec![f64::NAN], vec![0.0]).is_err());
        let p = LlcParams::new(1.0, vec![0.0], vec![0.0]).unwrap();
        assert!(p.rho() < 1.0);
        assert_eq!(p.extended_tau_row(), vec![f64::NEG_INFINITY, 0.0, f64::INFINITY]);
    }
}
