//! Trapezoidal fuzzy numbers, Ruspini partitions, and fuzzy samples.
//!
//! A fuzzy number is parameterized by its support bounds and modes
//! `(xl, c1, c2, xu)`; triangular (`c1 == c2`), rectangular
//! (`xl == c1, c2 == xu`) and degenerate (all equal) shapes are special
//! cases. Degenerate numbers encode crisp observations, rectangular ones
//! crisp categories.

use crate::error::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of grid points used by partition validation.
const VALIDATION_GRID: usize = 1000;

/// Trapezoidal fuzzy number `(xl, c1, c2, xu)` with `xl <= c1 <= c2 <= xu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyNumber {
    xl: f64,
    c1: f64,
    c2: f64,
    xu: f64,
}

impl FuzzyNumber {
    pub fn new(xl: f64, c1: f64, c2: f64, xu: f64) -> Result<Self> {
        let ordered = xl <= c1 && c1 <= c2 && c2 <= xu;
        let finite = [xl, c1, c2, xu].iter().all(|v| v.is_finite());
        if !ordered || !finite {
            return Err(Error::InvalidFuzzyNumber { xl, c1, c2, xu });
        }
        Ok(FuzzyNumber { xl, c1, c2, xu })
    }

    pub fn triangular(xl: f64, c: f64, xu: f64) -> Result<Self> {
        FuzzyNumber::new(xl, c, c, xu)
    }

    pub fn rectangular(xl: f64, xu: f64) -> Result<Self> {
        FuzzyNumber::new(xl, xl, xu, xu)
    }

    /// Degenerate number: membership 1 at `v`, 0 elsewhere.
    pub fn crisp(v: f64) -> Self {
        FuzzyNumber {
            xl: v,
            c1: v,
            c2: v,
            xu: v,
        }
    }

    pub fn lower(&self) -> f64 {
        self.xl
    }

    pub fn mode_left(&self) -> f64 {
        self.c1
    }

    pub fn mode_right(&self) -> f64 {
        self.c2
    }

    pub fn upper(&self) -> f64 {
        self.xu
    }

    pub fn is_degenerate(&self) -> bool {
        self.xl == self.xu
    }

    pub fn is_rectangular(&self) -> bool {
        self.xl == self.c1 && self.c2 == self.xu
    }

    /// Support interval `[xl, xu]`.
    pub fn support(&self) -> (f64, f64) {
        (self.xl, self.xu)
    }

    /// Length of the support.
    pub fn support_len(&self) -> f64 {
        self.xu - self.xl
    }

    /// Membership at `x`: 1 on the plateau `[c1, c2]`, linear legs, and 0
    /// outside the support. Total function.
    pub fn membership(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if x == self.xl { 1.0 } else { 0.0 };
        }
        if x >= self.c1 && x <= self.c2 {
            1.0
        } else if x > self.xl && x < self.c1 {
            (x - self.xl) / (self.c1 - self.xl)
        } else if x > self.c2 && x < self.xu {
            (self.xu - x) / (self.xu - self.c2)
        } else {
            0.0
        }
    }

    /// Simple cardinality: the area under the membership function. For a
    /// trapezoid this is `((xu - xl) + (c2 - c1)) / 2`; degenerate
    /// numbers have cardinality 0.
    pub fn cardinality(&self) -> f64 {
        ((self.xu - self.xl) + (self.c2 - self.c1)) / 2.0
    }

    /// Degree of inclusion of `self` in `granule`:
    /// `|min(xi_self, xi_granule)| / max(1, |self|)`, clamped to [0, 1].
    ///
    /// A degenerate observation has zero cardinality, so the literal
    /// integral vanishes; the shrinking-support limit is the granule
    /// membership at the point, which also reproduces crisp counting.
    pub fn inclusion_degree(&self, granule: &FuzzyNumber) -> f64 {
        if self.is_degenerate() {
            return granule.membership(self.xl);
        }
        let numer = min_membership_integral(self, granule);
        let denom = self.cardinality().max(1.0);
        (numer / denom).clamp(0.0, 1.0)
    }

    fn breakpoints(&self) -> [f64; 4] {
        [self.xl, self.c1, self.c2, self.xu]
    }
}

/// Exact integral of `min(xi_a, xi_b)` over the real line.
///
/// The integrand is piecewise linear with breakpoints at the knots of both
/// numbers plus the crossing points of their membership functions, so a
/// trapezoid rule over those breakpoints is exact.
pub fn min_membership_integral(a: &FuzzyNumber, b: &FuzzyNumber) -> f64 {
    // min(xi_a, xi_b) vanishes outside the intersection of the supports.
    let lo = a.xl.max(b.xl);
    let hi = a.xu.min(b.xu);
    if lo >= hi {
        return 0.0;
    }

    let mut knots: Vec<f64> = a
        .breakpoints()
        .into_iter()
        .chain(b.breakpoints())
        .filter(|x| *x > lo && *x < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();

    // Insert crossings of xi_a - xi_b: the difference is linear between
    // consecutive knots, so a strict sign change pins one crossing.
    let mut refined = Vec::with_capacity(knots.len() * 2);
    for w in knots.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        refined.push(x0);
        let d0 = a.membership(x0) - b.membership(x0);
        let d1 = a.membership(x1) - b.membership(x1);
        if d0 * d1 < 0.0 {
            refined.push(x0 - d0 * (x1 - x0) / (d1 - d0));
        }
    }
    refined.push(*knots.last().unwrap());

    let mut total = 0.0;
    for w in refined.windows(2) {
        let m0 = a.membership(w[0]).min(b.membership(w[0]));
        let m1 = a.membership(w[1]).min(b.membership(w[1]));
        total += 0.5 * (m0 + m1) * (w[1] - w[0]);
    }
    total
}

/// Convention used to derive the range of a fuzzy sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeConvention {
    /// `[min inf support, max sup support]`: the hull of all supports.
    #[default]
    SupportHull,
    /// Both endpoints from support infima: `[min inf, max inf]`.
    InfimumFormula,
}

/// Range of a fuzzy sample under the chosen convention.
pub fn sample_range(observations: &[FuzzyNumber], convention: RangeConvention) -> Result<(f64, f64)> {
    if observations.is_empty() {
        return Err(Error::EmptySample);
    }
    let min_inf = observations.iter().map(|o| o.xl).fold(f64::INFINITY, f64::min);
    let hi = match convention {
        RangeConvention::SupportHull => observations
            .iter()
            .map(|o| o.xu)
            .fold(f64::NEG_INFINITY, f64::max),
        RangeConvention::InfimumFormula => observations
            .iter()
            .map(|o| o.xl)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    Ok((min_inf, hi))
}

/// A sample of fuzzy observations with its derived range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzySample {
    observations: Vec<FuzzyNumber>,
    range: (f64, f64),
    convention: RangeConvention,
}

impl FuzzySample {
    pub fn new(observations: Vec<FuzzyNumber>, convention: RangeConvention) -> Result<Self> {
        let range = sample_range(&observations, convention)?;
        Ok(FuzzySample {
            observations,
            range,
            convention,
        })
    }

    /// Sample of degenerate observations from crisp values.
    pub fn from_crisp(values: &[f64]) -> Result<Self> {
        FuzzySample::new(
            values.iter().copied().map(FuzzyNumber::crisp).collect(),
            RangeConvention::default(),
        )
    }

    pub fn observations(&self) -> &[FuzzyNumber] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }
}

/// An ordered collection of granules over a closed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyPartition {
    granules: Vec<FuzzyNumber>,
    domain: (f64, f64),
}

impl FuzzyPartition {
    /// Builds a partition; granules are sorted by support infimum. The
    /// Ruspini conditions are checked separately by [`FuzzyPartition::validate`].
    pub fn new(mut granules: Vec<FuzzyNumber>, domain: (f64, f64)) -> Result<Self> {
        if granules.is_empty() {
            return Err(Error::Schema("partition needs at least one granule".into()));
        }
        if !(domain.0 < domain.1) && !(domain.0 == domain.1 && granules.len() == 1) {
            return Err(Error::Schema(format!(
                "invalid partition domain [{}, {}]",
                domain.0, domain.1
            )));
        }
        granules.sort_by(|a, b| a.xl.partial_cmp(&b.xl).unwrap());
        Ok(FuzzyPartition { granules, domain })
    }

    /// Builds a partition over the hull of the granule supports.
    pub fn from_granules(granules: Vec<FuzzyNumber>) -> Result<Self> {
        let lo = granules.iter().map(|g| g.xl).fold(f64::INFINITY, f64::min);
        let hi = granules
            .iter()
            .map(|g| g.xu)
            .fold(f64::NEG_INFINITY, f64::max);
        FuzzyPartition::new(granules, (lo, hi))
    }

    /// Ruspini partition from transition intervals: granule `c` holds a
    /// plateau up to the start of interval `c`, then descends linearly while
    /// granule `c + 1` ascends, so memberships sum to 1 everywhere.
    /// Transitions with zero width produce rectangular (crisp) granules.
    pub fn ruspini_from_transitions(domain: (f64, f64), transitions: &[(f64, f64)]) -> Result<Self> {
        let mut edges = vec![(domain.0, domain.0)];
        edges.extend_from_slice(transitions);
        edges.push((domain.1, domain.1));
        for w in edges.windows(2) {
            if !(w[0].1 <= w[1].0 && w[0].0 <= w[0].1) {
                return Err(Error::Schema(
                    "transition intervals must be ordered and disjoint".into(),
                ));
            }
        }
        let granules = edges
            .windows(2)
            .map(|w| FuzzyNumber::new(w[0].0, w[0].1, w[1].0, w[1].1))
            .collect::<Result<Vec<_>>>()?;
        FuzzyPartition::new(granules, domain)
    }

    pub fn granules(&self) -> &[FuzzyNumber] {
        &self.granules
    }

    pub fn len(&self) -> usize {
        self.granules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.granules.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Checks the sum-to-one condition on a 1000-point grid over the domain.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (lo, hi) = self.domain;
        let step = (hi - lo) / (VALIDATION_GRID - 1) as f64;
        let mut worst_x = lo;
        let mut worst = 0.0;
        for i in 0..VALIDATION_GRID {
            let x = lo + step * i as f64;
            let sum: f64 = self.granules.iter().map(|g| g.membership(x)).sum();
            let dev = (sum - 1.0).abs();
            if dev > worst {
                worst = dev;
                worst_x = x;
            }
        }
        if worst > tol {
            return Err(Error::PartitionInvalid {
                reason: "granule memberships do not sum to 1".into(),
                worst_x,
                deviation: worst,
            });
        }
        Ok(())
    }

    /// Validates the sum-to-one condition plus the length condition: every
    /// observation support must be no longer than the shortest granule
    /// support.
    pub fn validate_with_sample(&self, sample: &FuzzySample, tol: f64) -> Result<()> {
        self.validate(tol)?;
        let max_obs = sample
            .observations()
            .iter()
            .map(FuzzyNumber::support_len)
            .fold(0.0, f64::max);
        let min_granule = self
            .granules
            .iter()
            .map(FuzzyNumber::support_len)
            .fold(f64::INFINITY, f64::min);
        if max_obs > min_granule {
            return Err(Error::PartitionInvalid {
                reason: format!(
                    "longest observation support ({max_obs}) exceeds shortest granule support ({min_granule})"
                ),
                worst_x: f64::NAN,
                deviation: max_obs - min_granule,
            });
        }
        Ok(())
    }
}

// Wire format: degenerate numbers serialize as {"crisp": v}; anything else as
// the full record. Bare JSON numbers are accepted on input as crisp values.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FuzzyNumberRepr {
    Crisp { crisp: f64 },
    Trapezoid { xl: f64, c1: f64, c2: f64, xu: f64 },
    Bare(f64),
}

impl Serialize for FuzzyNumber {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_degenerate() {
            FuzzyNumberRepr::Crisp { crisp: self.xl }.serialize(serializer)
        } else {
            FuzzyNumberRepr::Trapezoid {
                xl: self.xl,
                c1: self.c1,
                c2: self.c2,
                xu: self.xu,
            }
            .serialize(serializer)
        }
    }
}

impl<'de> Deserialize<'de> for FuzzyNumber {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match FuzzyNumberRepr::deserialize(deserializer)? {
            FuzzyNumberRepr::Crisp { crisp } | FuzzyNumberRepr::Bare(crisp) => {
                Ok(FuzzyNumber::crisp(crisp))
            }
            FuzzyNumberRepr::Trapezoid { xl, c1, c2, xu } => {
                FuzzyNumber::new(xl, c1, c2, xu).map_err(D::Error::custom)
            }
        }
    }
}

impl Serialize for FuzzyPartition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.granules.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FuzzyPartition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let granules = Vec::<FuzzyNumber>::deserialize(deserializer)?;
        FuzzyPartition::from_granules(granules).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fz(xl: f64, c1: f64, c2: f64, xu: f64) -> FuzzyNumber {
        FuzzyNumber::new(xl, c1, c2, xu).unwrap()
    }

    #[test]
    fn membership_plateau_leg_and_outside() {
        let f = fz(0.0, 1.0, 2.0, 3.0);
        assert_eq!(f.membership(1.5), 1.0);
        assert_eq!(f.membership(0.5), 0.5);
        assert_eq!(f.membership(2.5), 0.5);
        assert_eq!(f.membership(-0.1), 0.0);
        assert_eq!(f.membership(3.0), 0.0);
    }

    #[test]
    fn membership_degenerate() {
        let f = FuzzyNumber::crisp(4.0);
        assert_eq!(f.membership(4.0), 1.0);
        assert_eq!(f.membership(4.0001), 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(FuzzyNumber::new(1.0, 0.5, 2.0, 3.0).is_err());
        assert!(FuzzyNumber::new(0.0, 1.0, 2.0, f64::NAN).is_err());
    }

    #[test]
    fn cardinality_closed_forms() {
        // Trapezoid with support width 3 and plateau width 1: area 2.
        assert_eq!(fz(0.0, 1.0, 2.0, 3.0).cardinality(), 2.0);
        assert_eq!(fz(0.0, 0.5, 2.5, 3.0).cardinality(), 2.5);
        assert_eq!(fz(0.0, 0.0, 2.0, 2.0).cardinality(), 2.0);
        assert_eq!(fz(0.0, 1.0, 1.0, 2.0).cardinality(), 1.0);
        assert_eq!(FuzzyNumber::crisp(7.0).cardinality(), 0.0);
    }

    #[test]
    fn cardinality_matches_quadrature() {
        // Closed form vs exact piecewise-linear integration of min(f, f).
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let mut k = [next() * 10.0 - 5.0, next() * 10.0 - 5.0, next() * 10.0 - 5.0, next() * 10.0 - 5.0];
            k.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let f = fz(k[0], k[1], k[2], k[3]);
            let quad = min_membership_integral(&f, &f);
            assert!(
                (quad - f.cardinality()).abs() < 1e-9,
                "quad {} vs closed {}",
                quad,
                f.cardinality()
            );
        }
    }

    #[test]
    fn inclusion_small_set_inside_plateau() {
        let a = fz(1.0, 1.2, 1.4, 1.6);
        let g = fz(0.0, 1.0, 2.0, 3.0);
        // |a| = 0.4 < 1, so the denominator is 1 and the result is |a|.
        let eps = a.inclusion_degree(&g);
        assert!((eps - 0.4).abs() < 1e-12, "eps = {eps}");
    }

    #[test]
    fn inclusion_degenerate_in_core() {
        let a = FuzzyNumber::crisp(1.5);
        let g = fz(0.0, 1.0, 2.0, 3.0);
        assert_eq!(a.inclusion_degree(&g), 1.0);
        let on_leg = FuzzyNumber::crisp(0.5);
        assert_eq!(on_leg.inclusion_degree(&g), 0.5);
    }

    #[test]
    fn inclusion_disjoint_supports() {
        let a = fz(0.0, 0.5, 0.5, 1.0);
        let g = fz(2.0, 2.5, 3.0, 3.5);
        assert_eq!(a.inclusion_degree(&g), 0.0);
    }

    #[test]
    fn inclusion_self_identity() {
        let a = fz(0.0, 1.0, 2.0, 3.0);
        let expect = a.cardinality() / a.cardinality().max(1.0);
        assert!((a.inclusion_degree(&a) - expect).abs() < 1e-12);
        let small = fz(0.0, 0.1, 0.2, 0.3);
        assert!((small.inclusion_degree(&small) - small.cardinality()).abs() < 1e-12);
    }

    #[test]
    fn min_integral_with_crossings() {
        // Two triangles crossing mid-leg: area of min is the two outer
        // tails plus the peak overlap; verified against a fine grid.
        let a = fz(0.0, 1.0, 1.0, 2.0);
        let b = fz(1.0, 2.0, 2.0, 3.0);
        let exact = min_membership_integral(&a, &b);
        let n = 200_000;
        let mut grid_sum = 0.0;
        for i in 0..n {
            let x = 0.0 + 3.0 * (i as f64 + 0.5) / n as f64;
            grid_sum += a.membership(x).min(b.membership(x)) * 3.0 / n as f64;
        }
        assert!((exact - grid_sum).abs() < 1e-6, "exact {exact} grid {grid_sum}");
        // min of the two mirrored legs peaks at 0.5 over [1, 2]: area 0.5.
        assert!((exact - 0.25).abs() < 1e-12);
    }

    #[test]
    fn inclusion_monotone_in_granule() {
        let a = fz(0.5, 1.0, 1.5, 2.5);
        let g = fz(0.0, 1.0, 2.0, 3.0);
        let wider = fz(-0.5, 0.5, 2.5, 3.5);
        assert!(a.inclusion_degree(&wider) >= a.inclusion_degree(&g) - 1e-12);
    }

    #[test]
    fn sample_range_conventions() {
        let obs = vec![fz(0.0, 1.0, 1.0, 2.0), fz(3.0, 4.0, 4.0, 5.0)];
        assert_eq!(
            sample_range(&obs, RangeConvention::InfimumFormula).unwrap(),
            (0.0, 3.0)
        );
        assert_eq!(
            sample_range(&obs, RangeConvention::SupportHull).unwrap(),
            (0.0, 5.0)
        );
        let single = vec![FuzzyNumber::crisp(2.0)];
        assert_eq!(
            sample_range(&single, RangeConvention::SupportHull).unwrap(),
            (2.0, 2.0)
        );
        let crisp = FuzzySample::from_crisp(&[1.0, 5.0, 3.0]).unwrap();
        assert_eq!(crisp.range(), (1.0, 5.0));
        assert!(sample_range(&[], RangeConvention::SupportHull).is_err());
    }

    #[test]
    fn partition_ruspini_valid() {
        let p = FuzzyPartition::ruspini_from_transitions(
            (0.0, 10.0),
            &[(2.0, 3.0), (5.0, 7.0)],
        )
        .unwrap();
        assert_eq!(p.len(), 3);
        p.validate(1e-8).unwrap();
    }

    #[test]
    fn partition_single_rectangle_valid() {
        let g = vec![fz(0.0, 0.0, 10.0, 10.0)];
        let p = FuzzyPartition::new(g, (0.0, 10.0)).unwrap();
        p.validate(1e-8).unwrap();
    }

    #[test]
    fn partition_gap_detected() {
        let g = vec![fz(0.0, 0.0, 2.0, 2.0), fz(5.0, 5.0, 7.0, 7.0)];
        let p = FuzzyPartition::new(g, (0.0, 10.0)).unwrap();
        let err = p.validate(1e-8).unwrap_err();
        match err {
            Error::PartitionInvalid { deviation, .. } => assert!(deviation > 0.9),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn partition_length_condition() {
        let p =
            FuzzyPartition::ruspini_from_transitions((0.0, 10.0), &[(4.0, 6.0)]).unwrap();
        let ok = FuzzySample::new(vec![fz(0.0, 1.0, 1.0, 2.0)], RangeConvention::default()).unwrap();
        p.validate_with_sample(&ok, 1e-8).unwrap();
        let too_wide =
            FuzzySample::new(vec![fz(0.0, 3.0, 4.0, 9.0)], RangeConvention::default()).unwrap();
        assert!(p.validate_with_sample(&too_wide, 1e-8).is_err());
    }

    #[test]
    fn serde_roundtrip_and_shorthand() {
        let f = fz(0.0, 1.0, 2.0, 3.0);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"xl":0.0,"c1":1.0,"c2":2.0,"xu":3.0}"#);
        assert_eq!(serde_json::from_str::<FuzzyNumber>(&s).unwrap(), f);

        let d = FuzzyNumber::crisp(4.5);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"crisp":4.5}"#);
        assert_eq!(serde_json::from_str::<FuzzyNumber>(&s).unwrap(), d);
        assert_eq!(serde_json::from_str::<FuzzyNumber>("4.5").unwrap(), d);

        let p = FuzzyPartition::ruspini_from_transitions((0.0, 4.0), &[(1.0, 3.0)]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: FuzzyPartition = serde_json::from_str(&s).unwrap();
        assert_eq!(back.granules(), p.granules());
        assert_eq!(back.domain(), (0.0, 4.0));
    }
}
