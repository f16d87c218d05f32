//! Scalar numeric kernels: standard normal functions, the Wasserstein-1
//! distance of an empirical PIT sample to Uniform[0, 1], and isotonic
//! regression by pool-adjacent-violators.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probabilities returned by CDFs are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`
/// so that logs and inverse CDFs downstream stay finite.
pub const PROB_FLOOR: f64 = 1e-15;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn check_finite(z: f64, what: &str) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be finite, got {z}")))
    }
}

/// Unclamped `Phi(z)` via `erfc`, accurate to full double precision in relative terms.
pub(crate) fn phi_raw(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Standard normal CDF, clamped to `[1e-15, 1 - 1e-15]`.
///
/// Computed as `erfc(-z / sqrt 2) / 2` using the musl `erfc` port, whose
/// absolute error is far below 1e-9 everywhere.
pub fn std_normal_cdf(z: f64) -> Result<f64> {
    check_finite(z, "z")?;
    Ok(clamp_prob(phi_raw(z)))
}

pub fn std_normal_pdf(z: f64) -> Result<f64> {
    check_finite(z, "z")?;
    Ok(pdf_raw(z))
}

#[inline]
pub(crate) fn pdf_raw(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Inverse of the standard normal CDF for `p` in the open interval (0, 1).
///
/// Acklam's rational approximation (relative error 1.15e-9) followed by one
/// Halley step against the `erfc`-based CDF, which brings the result to
/// near machine precision.
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(inv_cdf_raw(p))
}

pub(crate) fn inv_cdf_raw(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement. In the upper tail work with the complement so the
    // residual is not swamped by cancellation against 1.
    let e = if p > 0.5 {
        (1.0 - p) - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        phi_raw(x) - p
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Numerically stable `ln(1 + e^s)`.
#[inline]
pub fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// A sorted sample of PIT values, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPit {
    values: Vec<f64>,
}

impl EmpiricalPit {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("PIT sample is empty"));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("PIT value {bad} outside [0, 1]")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    /// Ascending values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `∫_a^b |t - c| dt` via the antiderivative `(t - c)|t - c| / 2`.
#[inline]
fn abs_dev_integral(a: f64, b: f64, c: f64) -> f64 {
    let g = |t: f64| 0.5 * (t - c) * (t - c).abs();
    g(b) - g(a)
}

/// Wasserstein-1 distance between the empirical PIT distribution and
/// Uniform[0, 1], `∫₀¹ |F_n(r) - r| dr`, integrated exactly piece by piece
/// over the steps of the empirical CDF.
pub fn w1_to_uniform(pits: &EmpiricalPit) -> f64 {
    let v = pits.values();
    let n = v.len() as f64;
    let mut total = 0.0;
    let mut left = 0.0;
    for (k, &right) in v.iter().enumerate() {
        // F_n = k/n on [v_{k-1}, v_k)
        total += abs_dev_integral(left, right, k as f64 / n);
        left = right;
    }
    total += abs_dev_integral(left, 1.0, 1.0);
    total
}

/// Expected calibration error, `∫₀¹ |Pr[PIT ≤ c] - c| dc`, integrated over
/// threshold levels `c` through the empirical quantile function: on
/// `((k-1)/n, k/n]` the `c`-quantile is the `k`-th smallest PIT value.
///
/// This is an independent route to the same number as [`w1_to_uniform`];
/// the two agree because a monotone map and its inverse have equal L1
/// distance to the identity.
pub fn ece(pits: &EmpiricalPit) -> f64 {
    let v = pits.values();
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(k, &q)| abs_dev_integral(k as f64 / n, (k + 1) as f64 / n, q))
        .sum()
}

/// A non-decreasing piecewise-linear map through ascending knots.
///
/// Outside `[first, last]` knot input the map is clamped to the end outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct MonotoneMap {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for MonotoneMap {
    type Error = Error;

    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        MonotoneMap::new(knots)
    }
}

impl From<MonotoneMap> for Vec<(f64, f64)> {
    fn from(map: MonotoneMap) -> Self {
        map.knots
    }
}

impl MonotoneMap {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::domain("monotone map needs at least one knot"));
        }
        if knots.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::domain("monotone map knots must be finite"));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::domain("knot inputs must be strictly ascending"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::domain("knot outputs must be non-decreasing"));
            }
        }
        Ok(Self { knots })
    }

    pub fn identity() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Index of the segment `[k_i, k_{i+1}]` containing `u`, for `u` strictly
    /// inside the knot range.
    fn segment(&self, u: f64) -> usize {
        self.knots.partition_point(|k| k.0 <= u) - 1
    }

    pub fn eval(&self, u: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if u <= first.0 {
            return first.1;
        }
        if u >= last.0 {
            return last.1;
        }
        let i = self.segment(u);
        let (x0, y0) = self.knots[i];
        let (x1, y1) = self.knots[i + 1];
        y0 + (y1 - y0) * (u - x0) / (x1 - x0)
    }

    /// Slope at `u` (zero outside the knot range).
    pub fn derivative(&self, u: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if u < first.0 || u >= last.0 {
            return 0.0;
        }
        let i = self.segment(u);
        let (x0, y0) = self.knots[i];
        let (x1, y1) = self.knots[i + 1];
        (y1 - y0) / (x1 - x0)
    }

    /// A `u` with `eval(u) = p`. Where the map is flat at level `p` the
    /// midpoint of the flat stretch is returned; levels outside the output
    /// range map to the nearest end input.
    pub fn inverse(&self, p: f64) -> f64 {
        let k = &self.knots;
        let last = k.len() - 1;
        let lerp = |i: usize, level: f64| {
            let (x0, y0) = k[i];
            let (x1, y1) = k[i + 1];
            x0 + (level - y0) / (y1 - y0) * (x1 - x0)
        };
        // inf { u : eval(u) >= p }
        let lower = match k.iter().position(|kn| kn.1 >= p) {
            Some(0) => k[0].0,
            Some(i) => lerp(i - 1, p),
            None => k[last].0,
        };
        // sup { u : eval(u) <= p }
        let upper = match k.iter().rposition(|kn| kn.1 <= p) {
            Some(j) if j == last => k[last].0,
            Some(j) => lerp(j, p),
            None => k[0].0,
        };
        0.5 * (lower + upper)
    }
}

/// Least-squares non-decreasing fit by pool-adjacent-violators.
///
/// `points` are `(position, target)` pairs sorted by position; equal
/// positions are pooled into one weighted observation before fitting. The
/// returned map has one knot per distinct position carrying the fitted value.
pub fn pav_isotonic(points: &[(f64, f64)]) -> Result<MonotoneMap> {
    if points.is_empty() {
        return Err(Error::domain(
            "isotonic regression needs at least one point",
        ));
    }
    if points.iter().any(|(p, t)| !p.is_finite() || !t.is_finite()) {
        return Err(Error::domain("isotonic regression inputs must be finite"));
    }
    if points.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::domain("positions must be sorted ascending"));
    }

    let mut positions = Vec::new();
    let mut sums = Vec::new();
    let mut weights = Vec::new();
    for &(pos, target) in points {
        if positions.last() == Some(&pos) {
            *sums.last_mut().unwrap() += target;
            *weights.last_mut().unwrap() += 1.0;
        } else {
            positions.push(pos);
            sums.push(target);
            weights.push(1.0);
        }
    }

    let fitted = pav_weighted(&sums, &weights);
    MonotoneMap::new(positions.into_iter().zip(fitted).collect())
}

/// PAV on pre-aggregated observations (`sums[i] / weights[i]` is the target).
fn pav_weighted(sums: &[f64], weights: &[f64]) -> Vec<f64> {
    struct Block {
        sum: f64,
        weight: f64,
        len: usize,
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(sums.len());
    for (&sum, &weight) in sums.iter().zip(weights) {
        blocks.push(Block {
            sum,
            weight,
            len: 1,
        });
        while blocks.len() > 1 {
            let b = &blocks[blocks.len() - 1];
            let a = &blocks[blocks.len() - 2];
            if a.sum / a.weight <= b.sum / b.weight {
                break;
            }
            let b = blocks.pop().unwrap();
            let a = blocks.last_mut().unwrap();
            a.sum += b.sum;
            a.weight += b.weight;
            a.len += b.len;
        }
    }
    blocks
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.sum / b.weight, b.len))
        .collect()
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Rule for `E[g(|Z|)]` with `Z` standard normal: 64 Gauss–Legendre nodes
/// on `z ∈ [0, 10]` weighted by the half-normal density, renormalized.
pub(crate) fn half_normal_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        const WIDTH: f64 = 10.0;
        let (nodes, weights) = gauss_legendre(64);
        let raw: Vec<(f64, f64)> = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| {
                let z = 0.5 * WIDTH * (t + 1.0);
                (z, w * pdf_raw(z))
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.into_iter().map(|(z, w)| (z, w / total)).collect()
    })
}

/// Fixed rule for expectations under a predicted distribution: 64
/// Gauss–Legendre nodes in probit space `z ∈ [-10, 10]`, weighted by the
/// standard normal density and renormalized to sum to one. Quantile level
/// `Phi(z_i)` is the i-th evaluation point.
pub(crate) fn probit_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        const HALF_WIDTH: f64 = 10.0;
        let (nodes, weights) = gauss_legendre(64);
        let raw: Vec<(f64, f64)> = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| {
                let z = HALF_WIDTH * t;
                (z, HALF_WIDTH * w * pdf_raw(z))
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.into_iter().map(|(z, w)| (z, w / total)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Maclaurin series of erf, summed in long form. Independent of libm.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        for n in 1..200 {
            term *= -x2 / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    }

    fn cdf_series(z: f64) -> f64 {
        0.5 * (1.0 + erf_series(z / 2f64.sqrt()))
    }

    #[test]
    fn cdf_known_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert!((std_normal_cdf(1.959964).unwrap() - 0.975).abs() < 1e-6);
        for z in [-3.0, -1.2, 0.3, 0.7, 2.5] {
            assert!((std_normal_cdf(z).unwrap() - cdf_series(z)).abs() < 1e-12);
        }
        for z in [0.1, 1.0, 4.0, 7.5] {
            let s = std_normal_cdf(z).unwrap() + std_normal_cdf(-z).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_clamps_tails_and_rejects_nan() {
        assert_eq!(std_normal_cdf(-50.0).unwrap(), PROB_FLOOR);
        assert_eq!(std_normal_cdf(50.0).unwrap(), 1.0 - PROB_FLOOR);
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_pdf(f64::INFINITY).is_err());
    }

    #[test]
    fn pdf_matches_constant_and_finite_difference() {
        assert!((std_normal_pdf(0.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!(std_normal_pdf(6.0).unwrap() < 1e-8);
        assert!(std_normal_pdf(-6.0).unwrap() < 1e-8);
        let h = 1e-5;
        let fd = (std_normal_cdf(0.7 + h).unwrap() - std_normal_cdf(0.7 - h).unwrap()) / (2.0 * h);
        assert!((fd - std_normal_pdf(0.7).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn inverse_cdf_values() {
        assert_eq!(std_normal_inv_cdf(0.5).unwrap(), 0.0);
        // root of the series CDF at 0.975 by bisection
        let (mut lo, mut hi) = (1.0, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cdf_series(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.959964).abs() < 1e-5);
        assert!((std_normal_inv_cdf(0.975).unwrap() - lo).abs() < 1e-12);
        for p in [0.01, 0.37, 0.99] {
            let back = std_normal_cdf(std_normal_inv_cdf(p).unwrap()).unwrap();
            assert!((back - p).abs() < 1e-9);
        }
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(std_normal_inv_cdf(p).is_err());
        }
    }

    #[test]
    fn inverse_cdf_roundtrip_in_tails() {
        for p in [
            1e-15,
            1e-10,
            1e-4,
            0.02,
            0.03,
            0.97,
            0.98,
            1.0 - 1e-6,
            1.0 - 1e-12,
        ] {
            let z = std_normal_inv_cdf(p).unwrap();
            let back = phi_raw(z);
            assert!(
                ((back - p) / p.min(1.0 - p)).abs() < 1e-9,
                "p={p} back={back}"
            );
        }
    }

    fn riemann_w1(values: &[f64], steps: usize) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let h = 1.0 / steps as f64;
        (0..steps)
            .map(|i| {
                let r = (i as f64 + 0.5) * h;
                let f = sorted.partition_point(|&v| v <= r) as f64 / n;
                (f - r).abs() * h
            })
            .sum()
    }

    #[test]
    fn w1_closed_form_cases() {
        let half = EmpiricalPit::new(vec![0.5; 10]).unwrap();
        assert!((w1_to_uniform(&half) - 0.25).abs() < 1e-15);
        assert!((ece(&half) - 0.25).abs() < 1e-15);

        let zeros = EmpiricalPit::new(vec![0.0; 3]).unwrap();
        assert!((w1_to_uniform(&zeros) - 0.5).abs() < 1e-15);

        let n = 100;
        let grid: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let riemann = riemann_w1(&grid, 1_000_000);
        assert!((riemann - 0.0025).abs() < 1e-6);
        let pits = EmpiricalPit::new(grid).unwrap();
        assert!((w1_to_uniform(&pits) - 0.0025).abs() < 1e-12);
        assert!((ece(&pits) - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn w1_matches_riemann_on_irregular_sample() {
        let vals = vec![0.03, 0.2, 0.21, 0.5, 0.77, 0.9, 0.91, 0.99];
        let pits = EmpiricalPit::new(vals.clone()).unwrap();
        assert!((w1_to_uniform(&pits) - riemann_w1(&vals, 1_000_000)).abs() < 1e-6);
    }

    #[test]
    fn empirical_pit_rejects_bad_input() {
        assert!(EmpiricalPit::new(vec![]).is_err());
        assert!(EmpiricalPit::new(vec![0.5, 1.2]).is_err());
        assert!(EmpiricalPit::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn pav_examples() {
        let map = pav_isotonic(&[(0.1, 0.3), (0.2, 0.2), (0.3, 0.5)]).unwrap();
        let fitted: Vec<f64> = map.knots().iter().map(|k| k.1).collect();
        assert_eq!(fitted, vec![0.25, 0.25, 0.5]);

        let mono = [(0.0, 0.1), (0.5, 0.2), (1.0, 0.9)];
        let map = pav_isotonic(&mono).unwrap();
        assert_eq!(map.knots(), &mono);

        let flat = pav_isotonic(&[(0.0, 0.4), (0.3, 0.4), (0.6, 0.4)]).unwrap();
        for u in [-1.0, 0.1, 0.45, 2.0] {
            assert_eq!(flat.eval(u), 0.4);
        }
        assert!(pav_isotonic(&[]).is_err());
        assert!(pav_isotonic(&[(0.5, 0.1), (0.2, 0.3)]).is_err());
    }

    #[test]
    fn pav_pools_ties_first() {
        let map = pav_isotonic(&[(0.1, 0.0), (0.1, 1.0), (0.2, 0.2)]).unwrap();
        assert_eq!(map.knots().len(), 2);
        // tie block mean 0.5 exceeds 0.2, so everything pools to 0.4
        assert!((map.knots()[0].1 - 0.4).abs() < 1e-15);
        assert!((map.knots()[1].1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn monotone_map_eval_and_inverse() {
        let m = MonotoneMap::new(vec![(0.0, 0.0), (0.2, 0.4), (0.6, 0.4), (1.0, 1.0)]).unwrap();
        assert_eq!(m.eval(-0.5), 0.0);
        assert_eq!(m.eval(1.5), 1.0);
        assert!((m.eval(0.1) - 0.2).abs() < 1e-15);
        assert!((m.inverse(0.4) - 0.4).abs() < 1e-15);
        assert!((m.inverse(0.2) - 0.1).abs() < 1e-15);
        assert!((m.derivative(0.1) - 2.0).abs() < 1e-12);
        assert_eq!(m.derivative(0.3), 0.0);
        assert!(MonotoneMap::new(vec![(0.0, 0.5), (0.0, 0.6)]).is_err());
        assert!(MonotoneMap::new(vec![(0.0, 0.5), (0.1, 0.4)]).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(64);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        let x4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((x4 - 0.4).abs() < 1e-13);
        let rule = probit_rule();
        let second: f64 = rule.iter().map(|(z, w)| w * z * z).sum();
        assert!((second - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(a in -8.0f64..8.0, b in -8.0f64..8.0) {
            prop_assume!(a < b - 1e-9);
            prop_assert!(std_normal_cdf(a).unwrap() < std_normal_cdf(b).unwrap());
        }

        #[test]
        fn pdf_matches_cdf_slope(z in -5.0f64..5.0) {
            let h = 1e-5;
            // difference the lower tail, where CDF values keep full relative precision
            let t = -z.abs();
            let fd = (phi_raw(t + h) - phi_raw(t - h)) / (2.0 * h);
            let pdf = std_normal_pdf(z).unwrap();
            prop_assert!(((fd - pdf) / pdf).abs() < 1e-6);
        }

        #[test]
        fn w1_bounds_and_ece_identity(values in proptest::collection::vec(0.0f64..=1.0, 1..400)) {
            let pits = EmpiricalPit::new(values).unwrap();
            let w = w1_to_uniform(&pits);
            prop_assert!((0.0..=0.5 + 1e-15).contains(&w));
            prop_assert!((w - ece(&pits)).abs() < 1e-9);
        }

        #[test]
        fn pav_is_idempotent_and_monotone(targets in proptest::collection::vec(-2.0f64..2.0, 1..40)) {
            let pts: Vec<(f64, f64)> = targets.iter().enumerate().map(|(i, &t)| (i as f64, t)).collect();
            let once = pav_isotonic(&pts).unwrap();
            prop_assert!(once.knots().windows(2).all(|w| w[0].1 <= w[1].1));
            let twice = pav_isotonic(once.knots()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
