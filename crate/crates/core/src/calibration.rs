//! Calibration metrics: average, group and adversarial-group error,
//! sharpness, mPAIC diagnostics and isotonic recalibration.
//!
//! All errors are the Wasserstein-1 distance between the PIT values of a
//! set of samples and the uniform distribution.
//!
//! # Adversarial groups
//!
//! The worst group of a given size over all subsets of the input space
//! cannot be found exactly, so [`adversarial_curve`] reports the worst group
//! inside a fixed candidate family. The result is a lower bound on the true
//! adversarial error. The default [`Family::Covariate`] searches contiguous
//! windows over orderings that depend on `x` only: each feature, the
//! forecaster's median at `r = 0.5`, and a few seeded random projections,
//! plus every interpretable group. [`Family::PitSorted`] searches windows
//! over the PIT-sorted order instead. Those groups select on the outcome, so
//! even a perfect forecaster scores close to `0.5 - δ/2` on them; they are
//! kept for stress tests.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::forecast::{pit_sample, Forecaster, PitSample, RandomizedForecaster};
use crate::math::{ece, pav_isotonic, w1_to_uniform, EmpiricalPit, MonotoneMap};
use crate::seeds;
use crate::training::{certify_from_residuals, MpaicCertificate};
use crate::{Error, Result};

/// Default δ grid of the adversarial curve.
pub const DEFAULT_DELTAS: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Fewest validation points [`recalibrate`] accepts.
pub const MIN_RECALIBRATION_POINTS: usize = 10;

/// `W1` between the PIT sample and uniform.
pub fn average_calibration_error(pits: &EmpiricalPit) -> Result<f64> {
    if pits.is_empty() {
        return Err(Error::domain("PIT sample is empty"));
    }
    Ok(w1_to_uniform(pits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `x_j <= threshold`
    Below,
    /// `x_j > threshold`
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub feature: usize,
    pub threshold: f64,
    pub side: Side,
}

impl Threshold {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.side {
            Side::Below => x[self.feature] <= self.threshold,
            Side::Above => x[self.feature] > self.threshold,
        }
    }

    fn label(&self, names: &[String]) -> String {
        let op = match self.side {
            Side::Below => "<=",
            Side::Above => ">",
        };
        format!("{}{op}{}", names[self.feature], self.threshold)
    }
}

/// How a group was defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupRule {
    FeatureThreshold {
        rule: Threshold,
    },
    FeatureThresholdIntersection {
        first: Threshold,
        second: Threshold,
    },
    /// Positions `start..start + len` of a named ordering of the samples.
    Window {
        ordering: String,
        start: usize,
        len: usize,
    },
    Full,
    Explicit,
}

/// A subgroup of the evaluation samples. Members are indices into the
/// dataset and are not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub rule: GroupRule,
    pub size: usize,
    /// `size / n`
    pub fraction: f64,
    #[serde(skip)]
    pub members: Vec<usize>,
}

impl GroupSpec {
    fn build(name: String, rule: GroupRule, members: Vec<usize>, n: usize) -> Self {
        Self {
            name,
            rule,
            size: members.len(),
            fraction: members.len() as f64 / n as f64,
            members,
        }
    }

    pub fn full(n: usize) -> Self {
        Self::build("all".into(), GroupRule::Full, (0..n).collect(), n)
    }

    /// A group given by an explicit list of sample indices out of `n`.
    pub fn explicit(name: impl Into<String>, members: Vec<usize>, n: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::domain("group has no members"));
        }
        if let Some(i) = members.iter().find(|&&i| i >= n) {
            return Err(Error::domain(format!(
                "group member {i} out of range for n = {n}"
            )));
        }
        Ok(Self::build(name.into(), GroupRule::Explicit, members, n))
    }
}

/// `W1` between the PIT values of the group's members and uniform.
pub fn group_calibration_error(pits: &[f64], group: &GroupSpec) -> Result<f64> {
    if group.members.is_empty() {
        return Err(Error::domain(format!("group '{}' is empty", group.name)));
    }
    let mut values = Vec::with_capacity(group.members.len());
    for &i in &group.members {
        let v = *pits.get(i).ok_or_else(|| {
            Error::domain(format!(
                "group member {i} out of range for {} PIT values",
                pits.len()
            ))
        })?;
        values.push(v);
    }
    Ok(w1_to_uniform(&EmpiricalPit::new(values)?))
}

/// Smallest interpretable group size used when none is configured: 150, or
/// `max(30, ⌈0.05 n⌉)` for fewer than 3000 samples.
pub fn default_min_size(n: usize) -> usize {
    if n >= 3000 {
        150
    } else {
        30.max((0.05 * n as f64).ceil() as usize)
    }
}

fn median(mut column: Vec<f64>) -> f64 {
    column.sort_by(f64::total_cmp);
    let n = column.len();
    if n % 2 == 1 {
        column[n / 2]
    } else {
        0.5 * (column[n / 2 - 1] + column[n / 2])
    }
}

/// Above- and below-median groups for every feature, and every pairwise
/// intersection across two different features. Ties go below. Groups with
/// fewer than `min_size` members are dropped.
pub fn interpretable_groups(data: &Dataset, min_size: usize) -> Vec<GroupSpec> {
    let n = data.len();
    let names = data.names();
    let mut singles = Vec::new();
    for j in 0..data.dim() {
        let m = median((0..n).map(|i| data.feature(i, j)).collect());
        for side in [Side::Below, Side::Above] {
            singles.push(Threshold {
                feature: j,
                threshold: m,
                side,
            });
        }
    }
    let select =
        |f: &dyn Fn(&[f64]) -> bool| -> Vec<usize> { (0..n).filter(|&i| f(data.row(i))).collect() };

    let mut groups = Vec::new();
    for t in &singles {
        let members = select(&|x| t.contains(x));
        groups.push(GroupSpec::build(
            t.label(names),
            GroupRule::FeatureThreshold { rule: t.clone() },
            members,
            n,
        ));
    }
    for (a, first) in singles.iter().enumerate() {
        for second in &singles[a + 1..] {
            if second.feature == first.feature {
                continue;
            }
            let members = select(&|x| first.contains(x) && second.contains(x));
            groups.push(GroupSpec::build(
                format!("{} & {}", first.label(names), second.label(names)),
                GroupRule::FeatureThresholdIntersection {
                    first: first.clone(),
                    second: second.clone(),
                },
                members,
                n,
            ));
        }
    }
    groups.retain(|g| g.size >= min_size.max(1));
    groups
}

/// A named permutation of the sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    pub name: String,
    pub order: Vec<usize>,
}

impl Ordering {
    /// Ascending by key; equal keys keep index order.
    pub fn by_key(name: impl Into<String>, keys: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
        Self {
            name: name.into(),
            order,
        }
    }
}

/// Orderings that depend on the inputs only: each feature, the forecaster's
/// median at `r = 0.5`, and `projections` random directions in standardized
/// feature space.
pub fn covariate_orderings<F>(
    forecaster: &F,
    data: &Dataset,
    projections: usize,
    seed: u64,
) -> Result<Vec<Ordering>>
where
    F: RandomizedForecaster + ?Sized,
{
    let n = data.len();
    let d = data.dim();
    let mut out = Vec::with_capacity(d + 1 + projections);
    for j in 0..d {
        let keys: Vec<f64> = (0..n).map(|i| data.feature(i, j)).collect();
        out.push(Ordering::by_key(data.names()[j].clone(), &keys));
    }
    let medians = data
        .iter()
        .map(|(x, _)| Ok(forecaster.predict(x, 0.5)?.median()))
        .collect::<Result<Vec<f64>>>()?;
    out.push(Ordering::by_key("median", &medians));

    let stats = crate::data::Standardization::fit(data);
    let mut rng = seeds::stream(seed, "calibration/projections");
    let mut z = vec![0.0; d];
    for p in 0..projections {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let keys = (0..n)
            .map(|i| {
                stats.apply_row(data.row(i), &mut z)?;
                Ok(z.iter().zip(&dir).map(|(a, b)| a * b).sum())
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(Ordering::by_key(format!("projection{p}"), &keys));
    }
    Ok(out)
}

/// The PIT-sorted order.
pub fn pit_ordering(pits: &[f64]) -> Ordering {
    Ordering::by_key("pit", pits)
}

/// Which candidate groups [`adversarial_curve`] searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Covariate,
    PitSorted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub epsilon_hat: f64,
    pub witness: GroupSpec,
}

/// `⌈δ n⌉`, robust to rounding in the product.
pub fn group_size(delta: f64, n: usize) -> usize {
    let m = (delta * n as f64 - 1e-9).ceil();
    (m.max(1.0) as usize).min(n)
}

/// Start positions of the windows of length `m` over `n` ordered samples.
/// The stride is `max(1, ⌈m/4⌉)`, or 1 for `n <= 64`, and the last window
/// always ends at `n`.
pub fn window_starts(n: usize, m: usize) -> Vec<usize> {
    if m > n || m == 0 {
        return Vec::new();
    }
    let stride = if n <= 64 { 1 } else { m.div_ceil(4).max(1) };
    let mut starts: Vec<usize> = (0..=n - m).step_by(stride).collect();
    if *starts.last().unwrap() != n - m {
        starts.push(n - m);
    }
    starts
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::domain("delta list is empty"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
        return Err(Error::domain(format!("delta must lie in (0, 1], got {d}")));
    }
    Ok(())
}

/// The worst group per δ among: windows of size `⌈δ' n⌉` over every ordering
/// for every δ' in `deltas`, the extra groups, and the full set. For each δ
/// only candidates with at least `⌈δ n⌉` members count, so the curve is
/// non-increasing in δ and its value at δ = 1 is the average error.
pub fn curve_from_candidates(
    pits: &[f64],
    orderings: &[Ordering],
    extra: &[GroupSpec],
    deltas: &[f64],
) -> Result<Vec<CurvePoint>> {
    check_deltas(deltas)?;
    let n = pits.len();
    if n == 0 {
        return Err(Error::domain("PIT sample is empty"));
    }
    for o in orderings {
        if o.order.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: o.order.len(),
            });
        }
    }

    let full = GroupSpec::full(n);
    let mut scored: Vec<(f64, GroupSpec)> = vec![(group_calibration_error(pits, &full)?, full)];
    for g in extra {
        scored.push((group_calibration_error(pits, g)?, g.clone()));
    }

    let mut sizes: Vec<usize> = deltas.iter().map(|&d| group_size(d, n)).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut values = Vec::new();
    for o in orderings {
        for &m in &sizes {
            if m == n {
                continue;
            }
            for start in window_starts(n, m) {
                values.clear();
                values.extend(o.order[start..start + m].iter().map(|&i| pits[i]));
                let err = w1_to_uniform(&EmpiricalPit::new(values.clone())?);
                let best_so_far = scored
                    .iter()
                    .filter(|(_, g)| g.size >= m)
                    .map(|(e, _)| *e)
                    .fold(f64::NEG_INFINITY, f64::max);
                // windows that cannot win at any δ are not kept
                if err > best_so_far {
                    let members = o.order[start..start + m].to_vec();
                    let name = format!("{}[{}..{}]", o.name, start, start + m);
                    let rule = GroupRule::Window {
                        ordering: o.name.clone(),
                        start,
                        len: m,
                    };
                    scored.push((err, GroupSpec::build(name, rule, members, n)));
                }
            }
        }
    }

    deltas
        .iter()
        .map(|&delta| {
            let m = group_size(delta, n);
            let mut best: Option<&(f64, GroupSpec)> = None;
            for c in scored.iter().filter(|(_, g)| g.size >= m) {
                if best.is_none_or(|b| c.0 > b.0) {
                    best = Some(c);
                }
            }
            let (epsilon_hat, witness) = best.expect("the full set is always a candidate");
            Ok(CurvePoint {
                delta,
                epsilon_hat: *epsilon_hat,
                witness: witness.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveOptions {
    pub family: Family,
    /// Random projection orderings in the covariate family.
    pub projections: usize,
    /// Smallest interpretable group included as a candidate; `None` uses
    /// [`default_min_size`].
    pub min_group_size: Option<usize>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            family: Family::Covariate,
            projections: 8,
            min_group_size: None,
        }
    }
}

/// The adversarial curve on an existing PIT sample.
pub fn curve_for_sample<F>(
    forecaster: &F,
    data: &Dataset,
    sample: &PitSample,
    deltas: &[f64],
    options: &CurveOptions,
    seed: u64,
) -> Result<Vec<CurvePoint>>
where
    F: RandomizedForecaster + ?Sized,
{
    if sample.len() != data.len() {
        return Err(Error::Shape {
            expected: data.len(),
            got: sample.len(),
        });
    }
    let min_size = options
        .min_group_size
        .unwrap_or_else(|| default_min_size(data.len()));
    let groups = interpretable_groups(data, min_size);
    let orderings = match options.family {
        Family::Covariate => covariate_orderings(forecaster, data, options.projections, seed)?,
        Family::PitSorted => vec![pit_ordering(&sample.pits)],
    };
    curve_from_candidates(&sample.pits, &orderings, &groups, deltas)
}

/// `ε̂(δ)`: a heuristic lower bound on the worst calibration error over
/// groups holding at least a δ fraction of the data, with fresh seeds.
pub fn adversarial_curve<F, R>(
    forecaster: &F,
    data: &Dataset,
    deltas: &[f64],
    rng: &mut R,
) -> Result<Vec<CurvePoint>>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    check_deltas(deltas)?;
    let sample = pit_sample(forecaster, data, rng)?;
    let seed = rng.random();
    curve_for_sample(
        forecaster,
        data,
        &sample,
        deltas,
        &CurveOptions::default(),
        seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sharpness {
    pub mean_nll: f64,
    pub mean_sigma: f64,
}

/// Mean negative log density at the label and mean predicted standard
/// deviation, with a fresh seed per sample.
pub fn sharpness<F, R>(forecaster: &F, data: &Dataset, rng: &mut R) -> Result<Sharpness>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    if data.is_empty() {
        return Err(Error::domain("dataset is empty"));
    }
    let (mut nll, mut sigma) = (0.0, 0.0);
    for (x, y) in data.iter() {
        let f = forecaster.predict(x, rng.random())?;
        nll -= f.log_density(y)?;
        sigma += f.std_dev();
    }
    let n = data.len() as f64;
    Ok(Sharpness {
        mean_nll: nll / n,
        mean_sigma: sigma / n,
    })
}

/// Isotonic map from PIT values to their ranks `i / (n + 1)`, anchored at
/// (0, 0) and (1, 1).
pub fn fit_recalibration_map(pits: &[f64]) -> Result<MonotoneMap> {
    if pits.len() < MIN_RECALIBRATION_POINTS {
        return Err(Error::config(format!(
            "recalibration needs at least {MIN_RECALIBRATION_POINTS} points, got {}",
            pits.len()
        )));
    }
    let sorted = EmpiricalPit::new(pits.to_vec())?;
    let n = sorted.len() as f64;
    let points: Vec<(f64, f64)> = sorted
        .values()
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, (i + 1) as f64 / (n + 1.0)))
        .collect();
    let fitted = pav_isotonic(&points)?;
    let mut knots = fitted.knots().to_vec();
    if knots[0].0 > 0.0 {
        knots.insert(0, (0.0, 0.0));
    }
    if knots[knots.len() - 1].0 < 1.0 {
        knots.push((1.0, 1.0));
    }
    MonotoneMap::new(knots)
}

/// Wrap `forecaster` so its CDF is composed with an isotonic map fit on
/// `validation`, which must not have been used for training.
pub fn recalibrate<R>(
    forecaster: &Forecaster,
    validation: &Dataset,
    rng: &mut R,
) -> Result<Forecaster>
where
    R: Rng + ?Sized,
{
    if validation.len() < MIN_RECALIBRATION_POINTS {
        return Err(Error::config(format!(
            "recalibration needs at least {MIN_RECALIBRATION_POINTS} validation points, got {}",
            validation.len()
        )));
    }
    let sample = pit_sample(forecaster, validation, rng)?;
    let map = fit_recalibration_map(&sample.pits)?;
    Ok(Forecaster::recalibrated(forecaster.clone(), map))
}

/// Fraction of residuals `|PIT_i - r_i|` that are at least `epsilon`.
pub fn violation_fraction(residuals: &[f64], epsilon: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::domain("no residuals"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::domain(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let hits = residuals.iter().filter(|&&e| e >= epsilon).count();
    Ok(hits as f64 / residuals.len() as f64)
}

/// Empirical mPAIC violation rate with fresh seeds.
pub fn mpaic_violation_fraction<F, R>(
    forecaster: &F,
    data: &Dataset,
    epsilon: f64,
    rng: &mut R,
) -> Result<f64>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    let sample = pit_sample(forecaster, data, rng)?;
    violation_fraction(&sample.residuals(), epsilon)
}

/// Samples the monotonicity diagnostic visits at most.
pub const MONOTONICITY_MAX_POINTS: usize = 1000;

/// How monotone `r ↦ h̄(x, r)(y)` is on the data.
///
/// For each visited sample the PIT is evaluated on a jittered ascending grid
/// of `m` seeds. Over all ordered pairs of grid points, the fraction agreeing
/// with the better-fitting direction is recorded; ties agree with both. The
/// result is the mean over samples, 1.0 for any monotone map.
pub fn monotonicity_diagnostic<F, R>(
    forecaster: &F,
    data: &Dataset,
    m: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    if m < 3 {
        return Err(Error::config(format!(
            "monotonicity grid needs at least 3 points, got {m}"
        )));
    }
    if data.is_empty() {
        return Err(Error::domain("dataset is empty"));
    }
    let visit: Vec<usize> = if data.len() <= MONOTONICITY_MAX_POINTS {
        (0..data.len()).collect()
    } else {
        let mut v = sample(rng, data.len(), MONOTONICITY_MAX_POINTS).into_vec();
        v.sort_unstable();
        v
    };
    let pairs = (m * (m - 1) / 2) as f64;
    let mut total = 0.0;
    let mut values = vec![0.0; m];
    for &i in &visit {
        let (x, y) = (data.row(i), data.label(i));
        let jitter: f64 = rng.random();
        for (j, v) in values.iter_mut().enumerate() {
            let r = (j as f64 + jitter) / m as f64;
            *v = forecaster.predict(x, r)?.cdf_at(y)?;
        }
        let (mut up, mut down) = (0usize, 0usize);
        for a in 0..m {
            for b in a + 1..m {
                if values[a] <= values[b] {
                    up += 1;
                }
                if values[a] >= values[b] {
                    down += 1;
                }
            }
        }
        total += up.max(down) as f64 / pairs;
    }
    Ok(total / visit.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: GroupSpec,
    pub error: f64,
}

/// Settings of [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub deltas: Vec<f64>,
    pub curve: CurveOptions,
    /// Tolerance of the mPAIC certificate.
    pub epsilon: f64,
    /// One minus the certificate's confidence.
    pub gamma: f64,
    /// Seed grid size of the monotonicity diagnostic.
    pub monotone_grid: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            deltas: DEFAULT_DELTAS.to_vec(),
            curve: CurveOptions::default(),
            epsilon: 0.05,
            gamma: 0.05,
            monotone_grid: 5,
        }
    }
}

/// Everything measured about one forecaster on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub average_w1: f64,
    pub ece: f64,
    pub adversarial_family: Family,
    pub adversarial_curve: Vec<CurvePoint>,
    pub min_group_size: usize,
    pub interpretable_groups: Vec<GroupError>,
    pub interpretable_worst: Option<GroupError>,
    pub sharpness: Sharpness,
    pub mpaic: MpaicCertificate,
    pub monotone_fraction: f64,
}

impl CalibrationReport {
    /// `ε̂` at the curve point closest to `delta`.
    pub fn epsilon_at(&self, delta: f64) -> Option<f64> {
        self.adversarial_curve
            .iter()
            .min_by(|a, b| (a.delta - delta).abs().total_cmp(&(b.delta - delta).abs()))
            .map(|p| p.epsilon_hat)
    }

    /// `delta,epsilon_hat,witness` rows.
    pub fn write_curve_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "epsilon_hat", "witness"])?;
        for p in &self.adversarial_curve {
            w.write_record([
                p.delta.to_string(),
                p.epsilon_hat.to_string(),
                p.witness.name.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<curve writer>", e))?;
        Ok(())
    }

    /// `group,size,error` rows.
    pub fn write_groups_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["group", "size", "error"])?;
        for g in &self.interpretable_groups {
            w.write_record([
                g.group.name.clone(),
                g.group.size.to_string(),
                g.error.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<group writer>", e))?;
        Ok(())
    }
}

/// Compute a full [`CalibrationReport`]. Each measurement draws its own
/// stream from `seed`, so the result does not depend on evaluation order.
pub fn evaluate<F>(
    forecaster: &F,
    data: &Dataset,
    options: &EvalOptions,
    seed: u64,
) -> Result<CalibrationReport>
where
    F: RandomizedForecaster + ?Sized,
{
    check_deltas(&options.deltas)?;
    let sample = pit_sample(forecaster, data, &mut seeds::stream(seed, "eval/pit"))?;
    let pits = sample.empirical()?;
    let average_w1 = average_calibration_error(&pits)?;
    let curve = curve_for_sample(
        forecaster,
        data,
        &sample,
        &options.deltas,
        &options.curve,
        seeds::derive(seed, "eval/curve"),
    )?;
    let min_group_size = options
        .curve
        .min_group_size
        .unwrap_or_else(|| default_min_size(data.len()));
    let groups = interpretable_groups(data, min_group_size)
        .into_iter()
        .map(|group| {
            let error = group_calibration_error(&sample.pits, &group)?;
            Ok(GroupError { group, error })
        })
        .collect::<Result<Vec<_>>>()?;
    let interpretable_worst = groups
        .iter()
        .max_by(|a, b| a.error.total_cmp(&b.error))
        .cloned();
    let sharp = sharpness(forecaster, data, &mut seeds::stream(seed, "eval/sharpness"))?;
    let cert_sample = pit_sample(
        forecaster,
        data,
        &mut seeds::stream(seed, "eval/certificate"),
    )?;
    let mpaic = certify_from_residuals(&cert_sample.residuals(), options.epsilon, options.gamma)?;
    let monotone_fraction = monotonicity_diagnostic(
        forecaster,
        data,
        options.monotone_grid,
        &mut seeds::stream(seed, "eval/monotone"),
    )?;
    Ok(CalibrationReport {
        n: data.len(),
        average_w1,
        ece: ece(&pits),
        adversarial_family: options.curve.family,
        adversarial_curve: curve,
        min_group_size,
        interpretable_groups: groups,
        interpretable_worst,
        sharpness: sharp,
        mpaic,
        monotone_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_heteroscedastic, gen_toy, GeneratorSpec};
    use crate::forecast::{Forecast, GaussianForecast};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
    }

    #[test]
    fn average_error_examples() {
        let half = EmpiricalPit::new(vec![0.5; 40]).unwrap();
        assert!((average_calibration_error(&half).unwrap() - 0.25).abs() < 1e-15);
        let g = EmpiricalPit::new(grid(100)).unwrap();
        assert!((average_calibration_error(&g).unwrap() - ece(&g)).abs() < 1e-12);
    }

    #[test]
    fn group_error_examples() {
        let pits = vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.2];
        let all = GroupSpec::full(6);
        let avg = average_calibration_error(&EmpiricalPit::new(pits.clone()).unwrap()).unwrap();
        assert_eq!(group_calibration_error(&pits, &all).unwrap(), avg);
        let single = GroupSpec::explicit("one", vec![2], 6).unwrap();
        assert!((group_calibration_error(&pits, &single).unwrap() - 0.25).abs() < 1e-15);
        assert!(GroupSpec::explicit("none", vec![], 6).is_err());
        assert!(GroupSpec::explicit("far", vec![9], 6).is_err());
    }

    #[test]
    fn lower_half_groups_have_error_at_least_one_eighth() {
        // the closest distribution on [0, 1/2] to uniform is the point mass at 1/2
        let mut rng = seeds::stream(5, "t");
        for _ in 0..200 {
            let n = rng.random_range(1..50);
            let pits: Vec<f64> = (0..n).map(|_| 0.5 * rng.random::<f64>()).collect();
            let g = GroupSpec::explicit("g", (0..n).collect(), n).unwrap();
            assert!(group_calibration_error(&pits, &g).unwrap() >= 0.125 - 1e-12);
        }
        // grid search: every sample of ten points on {0, 0.05, ..., 0.5}
        fn search(first: usize, left: usize, acc: &mut Vec<f64>, best: &mut f64) {
            if left == 0 {
                *best = best.min(w1_to_uniform(&EmpiricalPit::new(acc.clone()).unwrap()));
                return;
            }
            for k in first..=10 {
                acc.push(k as f64 * 0.05);
                search(k, left - 1, acc, best);
                acc.pop();
            }
        }
        let mut best = f64::INFINITY;
        search(0, 10, &mut Vec::new(), &mut best);
        assert!((0.125 - 1e-12..0.14).contains(&best), "{best}");
        // the infimum is approached by uniform mass on [0, 1/2] plus an atom at 1/2
        let mut near: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        near.extend([0.5; 500]);
        let w = w1_to_uniform(&EmpiricalPit::new(near).unwrap());
        assert!((0.125..0.1252).contains(&w), "{w}");
    }

    fn two_feature_data(n: usize) -> Dataset {
        let mut rng = seeds::stream(1, "groups");
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        Dataset::new(rows, vec![0.0; n], vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn interpretable_group_counts() {
        let data = two_feature_data(1000);
        let groups = interpretable_groups(&data, 150);
        let singles = groups
            .iter()
            .filter(|g| matches!(g.rule, GroupRule::FeatureThreshold { .. }))
            .count();
        let pairs = groups.len() - singles;
        assert_eq!(singles, 4);
        assert!(pairs <= 4);
        for g in &groups {
            assert!(g.size >= 150);
            assert_eq!(g.fraction, g.size as f64 / 1000.0);
        }
        assert!(interpretable_groups(&data, 1001).is_empty());
    }

    #[test]
    fn constant_feature_drops_above_group() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![1.0, i as f64]).collect();
        let data = Dataset::new(rows, vec![0.0; 100], vec!["c".into(), "v".into()]).unwrap();
        let groups = interpretable_groups(&data, 1);
        assert!(groups.iter().any(|g| g.name == "c<=1" && g.size == 100));
        assert!(!groups.iter().any(|g| g.name.starts_with("c>")));
    }

    #[test]
    fn window_starts_cover_both_ends() {
        assert_eq!(window_starts(10, 3), (0..=7).collect::<Vec<_>>());
        let s = window_starts(1000, 200);
        assert_eq!(s[0], 0);
        assert_eq!(*s.last().unwrap(), 800);
        assert_eq!(s[1], 50);
        assert!(window_starts(5, 6).is_empty());
        assert_eq!(group_size(0.2, 5000), 1000);
        assert_eq!(group_size(0.1, 7), 1);
    }

    #[test]
    fn block_witness_with_pit_windows() {
        let n = 20;
        let mut pits = vec![0.9; n / 2];
        pits.extend(grid(n / 2));
        let order = [pit_ordering(&pits)];
        let curve = curve_from_candidates(&pits, &order, &[], &[0.5, 1.0]).unwrap();
        let full = average_calibration_error(&EmpiricalPit::new(pits.clone()).unwrap()).unwrap();
        assert!(curve[0].epsilon_hat >= full);
        let mut witness = curve[0]
            .witness
            .members
            .iter()
            .map(|&i| pits[i])
            .collect::<Vec<_>>();
        witness.sort_by(f64::total_cmp);
        assert!(witness.iter().all(|&p| p >= 0.5));
        assert_eq!(curve[1].epsilon_hat, full);
    }

    #[test]
    fn curve_rejects_bad_deltas() {
        let pits = grid(10);
        assert!(curve_from_candidates(&pits, &[], &[], &[0.0]).is_err());
        assert!(curve_from_candidates(&pits, &[], &[], &[1.5]).is_err());
        assert!(curve_from_candidates(&pits, &[], &[], &[]).is_err());
    }

    #[test]
    fn oracle_report_is_consistent() {
        let spec = GeneratorSpec::heteroscedastic(2000, 3, 4);
        let data = gen_heteroscedastic(&spec).unwrap();
        let oracle = Forecaster::oracle(spec);
        let report = evaluate(&oracle, &data, &EvalOptions::default(), 3).unwrap();
        let last = report.adversarial_curve.last().unwrap();
        assert_eq!(last.delta, 1.0);
        assert_eq!(last.epsilon_hat, report.average_w1);
        assert!((report.ece - report.average_w1).abs() < 1e-9);
        for w in report.adversarial_curve.windows(2) {
            assert!(w[0].epsilon_hat >= w[1].epsilon_hat);
        }
        assert!(report.average_w1 < 0.03);
        assert_eq!(report.monotone_fraction, 1.0);
        assert_eq!(report.min_group_size, 100);
        let mut buf = Vec::new();
        report.write_curve_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[test]
    fn pit_family_punishes_even_the_oracle() {
        let spec = GeneratorSpec::toy(2000, 1);
        let data = gen_toy(&spec).unwrap();
        let oracle = Forecaster::oracle(spec);
        let options = EvalOptions {
            curve: CurveOptions {
                family: Family::PitSorted,
                ..CurveOptions::default()
            },
            ..EvalOptions::default()
        };
        let report = evaluate(&oracle, &data, &options, 0).unwrap();
        assert!(report.epsilon_at(0.2).unwrap() > 0.35);
    }

    #[test]
    fn sharpness_examples() {
        let spec = GeneratorSpec::linear(10_000, vec![2.0], 0.0, 2.0, 8);
        let data = gen_toy(&spec).unwrap();
        let s = sharpness(&Forecaster::oracle(spec), &data, &mut seeds::stream(0, "s")).unwrap();
        assert!((s.mean_sigma - 2.0).abs() < 1e-12);
        let expected = 0.5 * (2.0 * std::f64::consts::PI * 4.0).ln() + 0.5;
        assert!((s.mean_nll - expected).abs() < 0.05);
        let pt = Forecaster::pass_through(1e9).unwrap();
        let s = sharpness(&pt, &data, &mut seeds::stream(0, "s")).unwrap();
        assert!(s.mean_sigma > 1e8);
    }

    #[test]
    fn violation_fraction_examples() {
        assert!((violation_fraction(&[0.01, 0.2, 0.05], 0.1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(violation_fraction(&[0.01, 0.2, 0.05], 0.0).unwrap(), 1.0);
        assert!(violation_fraction(&[], 0.1).is_err());
        let data = gen_toy(&GeneratorSpec::toy(500, 2)).unwrap();
        let pt = Forecaster::pass_through(1e9).unwrap();
        let v = mpaic_violation_fraction(&pt, &data, 0.01, &mut seeds::stream(1, "v")).unwrap();
        assert_eq!(v, 0.0);
    }

    /// Ignores `r` and `x`; PIT equals `Phi(y)` for labels generated as `N(0, s²)`.
    struct Fixed(f64);

    impl RandomizedForecaster for Fixed {
        fn predict(&self, _x: &[f64], _r: f64) -> Result<Forecast> {
            Ok(Forecast::Gaussian(GaussianForecast::new(0.0, self.0)?))
        }
    }

    #[test]
    fn monotonicity_examples() {
        let data = gen_toy(&GeneratorSpec::toy(200, 3)).unwrap();
        let mut rng = seeds::stream(0, "m");
        let pt = Forecaster::pass_through(1e9).unwrap();
        assert_eq!(
            monotonicity_diagnostic(&pt, &data, 7, &mut rng).unwrap(),
            1.0
        );
        assert_eq!(
            monotonicity_diagnostic(&Fixed(1.0), &data, 4, &mut rng).unwrap(),
            1.0
        );
        assert!(monotonicity_diagnostic(&pt, &data, 2, &mut rng)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn recalibration_of_calibrated_oracle_is_near_identity() {
        let spec = GeneratorSpec::linear(10_000, vec![1.0], 0.0, 1.0, 4);
        let data = gen_toy(&spec).unwrap();
        let oracle = Forecaster::oracle(spec);
        let sample = pit_sample(&oracle, &data, &mut seeds::stream(0, "r")).unwrap();
        let map = fit_recalibration_map(&sample.pits).unwrap();
        let dev = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|u| (map.eval(u) - u).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.05, "{dev}");
    }

    #[test]
    fn recalibration_fixes_overconfidence_and_is_idempotent() {
        let spec = GeneratorSpec::linear(4000, vec![1.0], 0.0, 1.0, 6);
        let data = gen_toy(&spec).unwrap();
        let parts = data.split(&[0.5, 0.5], 1).unwrap();
        // an overconfident Gaussian: the truth around x is N(x, 1); predict N(x, 0.5²)
        let spec_narrow = GeneratorSpec::linear(4000, vec![1.0], 0.0, 0.5, 6);
        let over = Forecaster::oracle(spec_narrow);
        let before = pit_sample(&over, &parts[1], &mut seeds::stream(0, "a")).unwrap();
        let w_before = average_calibration_error(&before.empirical().unwrap()).unwrap();
        let fixed = recalibrate(&over, &parts[0], &mut seeds::stream(0, "b")).unwrap();
        let after = pit_sample(&fixed, &parts[1], &mut seeds::stream(0, "a")).unwrap();
        let w_after = average_calibration_error(&after.empirical().unwrap()).unwrap();
        assert!(w_after < w_before, "{w_after} vs {w_before}");

        let second = pit_sample(&fixed, &parts[0], &mut seeds::stream(0, "c")).unwrap();
        let map = fit_recalibration_map(&second.pits).unwrap();
        let dev = (0..=200)
            .map(|i| i as f64 / 200.0)
            .map(|u| (map.eval(u) - u).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.05, "{dev}");
        assert!(recalibrate(
            &over,
            &parts[0].subset(&[0, 1, 2]).unwrap(),
            &mut seeds::stream(0, "d")
        )
        .unwrap_err()
        .is_config());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn curve_is_monotone(seed in 0u64..1000, n in 5usize..80) {
            let mut rng = seeds::stream(seed, "p");
            let pits: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(2)).collect();
            let keys: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let orders = [Ordering::by_key("k", &keys), pit_ordering(&pits)];
            let curve = curve_from_candidates(&pits, &orders, &[], &DEFAULT_DELTAS).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[0].epsilon_hat >= w[1].epsilon_hat);
            }
            let full = w1_to_uniform(&EmpiricalPit::new(pits.clone()).unwrap());
            prop_assert_eq!(curve.last().unwrap().epsilon_hat, full);
        }
    }
}
