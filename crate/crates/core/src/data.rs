//! Datasets, synthetic generators, CSV ingestion, splits and standardization.
//!
//! CSV format: UTF-8, comma separated, one header row, `.` decimal point,
//! every cell numeric. Generated files name features `x0, x1, ...` and put
//! the label last in a column named `y`. Numbers are written in shortest
//! round-trip form, so write → read reproduces the data exactly.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::forecast::{Forecast, GaussianForecast, TwoPieceForecast};
use crate::math::sigmoid;
use crate::seeds;
use crate::{Error, Result};

/// Default label column name.
pub const LABEL_COLUMN: &str = "y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Per-feature mean and population standard deviation. Constant features
    /// get scale 1.
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let d = data.dim();
        let mut mean = vec![0.0; d];
        for i in 0..data.len() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.len() {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
        Ok(())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.apply_row(x, &mut out)?;
        Ok(out)
    }
}

/// `n` rows of `d` numeric features plus a real label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    names: Vec<String>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let d = names.len();
        if features.len() != labels.len() {
            return Err(Error::Shape {
                expected: labels.len(),
                got: features.len(),
            });
        }
        let mut flat = Vec::with_capacity(features.len() * d);
        for row in features {
            if row.len() != d {
                return Err(Error::Shape {
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend(row);
        }
        Self::from_flat(flat, labels, names)
    }

    pub fn from_flat(features: Vec<f64>, labels: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::domain("dataset must have at least one row"));
        }
        if features.len() != labels.len() * names.len() {
            return Err(Error::Shape {
                expected: labels.len() * names.len(),
                got: features.len(),
            });
        }
        if features.iter().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::domain("dataset contains NaN or infinite values"));
        }
        Ok(Self {
            features,
            labels,
            names,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn feature(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.dim() + j]
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.labels[i]))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::domain(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let mut out = Self::from_flat(features, labels, self.names.clone())?;
        out.standardization = self.standardization.clone();
        Ok(out)
    }

    /// Apply `stats` to every row, recording them on the result.
    pub fn standardized_with(&self, stats: &Standardization) -> Result<Self> {
        let d = self.dim();
        let mut features = vec![0.0; self.features.len()];
        for i in 0..self.len() {
            stats.apply_row(self.row(i), &mut features[i * d..(i + 1) * d])?;
        }
        Ok(Self {
            features,
            labels: self.labels.clone(),
            names: self.names.clone(),
            standardization: Some(stats.clone()),
        })
    }

    /// Deterministic shuffle-split into parts with the given fractions.
    ///
    /// Part sizes are `round(f_k * n)` except the last, which takes the
    /// remainder.
    pub fn split(&self, fractions: &[f64], seed: u64) -> Result<Vec<Self>> {
        if fractions.is_empty() || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("split fractions must lie in [0, 1]"));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seeds::stream(seed, "split");
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut parts = Vec::with_capacity(fractions.len());
        let mut start = 0;
        for (k, f) in fractions.iter().enumerate() {
            let end = if k + 1 == fractions.len() {
                n
            } else {
                (start + (f * n as f64).round() as usize).min(n)
            };
            if end == start {
                return Err(Error::config(format!(
                    "split part {k} would be empty for n = {n}"
                )));
            }
            parts.push(self.subset(&order[start..end])?);
            start = end;
        }
        Ok(parts)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(LABEL_COLUMN);
        w.write_record(&header)?;
        for (x, y) in self.iter() {
            let record: Vec<String> = x
                .iter()
                .chain(std::iter::once(&y))
                .map(f64::to_string)
                .collect();
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parse a CSV document, taking `target` as the label column and every
    /// other column as a feature.
    pub fn read_csv<R: Read>(reader: R, target: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let target_idx = headers
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| Error::config(format!("target column '{target}' not found")))?;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            // header is row 1
            let row_no = row as u64 + 2;
            let record = record.map_err(|e| Error::Parse {
                row: row_no,
                column: String::new(),
                message: e.to_string(),
            })?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row: row_no,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            for (col, cell) in record.iter().enumerate() {
                let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row: row_no,
                    column: headers[col].to_string(),
                    message: format!("'{cell}' is not a number"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row: row_no,
                        column: headers[col].to_string(),
                        message: format!("'{cell}' is not finite"),
                    });
                }
                if col == target_idx {
                    labels.push(value);
                } else {
                    features.push(value);
                }
            }
        }
        if labels.is_empty() {
            return Err(Error::Parse {
                row: 2,
                column: String::new(),
                message: "no data rows".into(),
            });
        }
        Self::from_flat(features, labels, names)
    }

    pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), target)
    }
}

/// Noise model of one latent subgroup: two-piece normal with mode at the
/// group mean, left scale `sigma * (1 - skew)` and right scale
/// `sigma * (1 + skew)`. `skew = 0` is a Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseGroup {
    #[serde(default)]
    pub shift: f64,
    pub sigma: f64,
    #[serde(default)]
    pub skew: f64,
}

/// Description of a synthetic dataset. Generation is a pure function of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `x ~ U[-1, 1]^d`, `y = w·x + b + noise·N(0, 1)`.
    Linear {
        n: usize,
        weights: Vec<f64>,
        #[serde(default)]
        intercept: f64,
        noise: f64,
        seed: u64,
    },
    /// One-dimensional `x ~ U[-1, 1]`, `y = sin(2.5x) + bump(x) + noise·N(0, 1)`
    /// where the bump lives on a window covering `region_fraction` of the inputs.
    ToyRegionBias {
        n: usize,
        noise: f64,
        region_start: f64,
        region_fraction: f64,
        bump: f64,
        seed: u64,
    },
    /// `x ~ N(0, I_d)`; feature `group_feature` cut at `thresholds` assigns a
    /// latent group `g`; `y = Σ_j a_j x_j + shift_g + noise_g`.
    HeteroscedasticSubgroups {
        n: usize,
        dim: usize,
        group_feature: usize,
        thresholds: Vec<f64>,
        groups: Vec<NoiseGroup>,
        seed: u64,
    },
    /// `x ~ N(0, I_d)`; a fixed smooth map gives creditworthiness
    /// `p(x) ∈ (0, 1)`; `y = clip(p(x) + noise·N(0, 1), 0, 1)`.
    CreditLike {
        n: usize,
        dim: usize,
        noise: f64,
        y0_quantile: f64,
        seed: u64,
    },
}

/// Reference sample size used to place the credit threshold.
const CREDIT_REFERENCE_N: usize = 100_000;

impl GeneratorSpec {
    pub fn linear(n: usize, weights: Vec<f64>, intercept: f64, noise: f64, seed: u64) -> Self {
        Self::Linear {
            n,
            weights,
            intercept,
            noise,
            seed,
        }
    }

    pub fn toy(n: usize, seed: u64) -> Self {
        Self::ToyRegionBias {
            n,
            noise: 0.1,
            region_start: 0.3,
            region_fraction: 0.15,
            bump: 0.8,
            seed,
        }
    }

    /// Benchmark regime for group-calibration experiments: two latent groups
    /// split on the sign of the first feature, with different mean shifts and
    /// noise scales and a common right skew that no Gaussian can represent.
    pub fn heteroscedastic(n: usize, dim: usize, seed: u64) -> Self {
        Self::HeteroscedasticSubgroups {
            n,
            dim,
            group_feature: 0,
            thresholds: vec![0.0],
            groups: vec![
                NoiseGroup {
                    shift: 0.0,
                    sigma: 0.5,
                    skew: 0.7,
                },
                NoiseGroup {
                    shift: 1.0,
                    sigma: 2.0,
                    skew: 0.7,
                },
            ],
            seed,
        }
    }

    pub fn credit(n: usize, dim: usize, seed: u64) -> Self {
        Self::CreditLike {
            n,
            dim,
            noise: 0.03,
            y0_quantile: 0.3,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Linear { n, .. }
            | Self::ToyRegionBias { n, .. }
            | Self::HeteroscedasticSubgroups { n, .. }
            | Self::CreditLike { n, .. } => *n,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Linear { seed, .. }
            | Self::ToyRegionBias { seed, .. }
            | Self::HeteroscedasticSubgroups { seed, .. }
            | Self::CreditLike { seed, .. } => *seed,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { weights, .. } => weights.len(),
            Self::ToyRegionBias { .. } => 1,
            Self::HeteroscedasticSubgroups { dim, .. } | Self::CreditLike { dim, .. } => *dim,
        }
    }

    /// Same generator with a different size and seed.
    pub fn with_size_and_seed(&self, n_new: usize, seed_new: u64) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            Self::Linear { n, seed, .. }
            | Self::ToyRegionBias { n, seed, .. }
            | Self::HeteroscedasticSubgroups { n, seed, .. }
            | Self::CreditLike { n, seed, .. } => {
                *n = n_new;
                *seed = seed_new;
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.n() == 0 {
            return bad("n must be positive".into());
        }
        match self {
            Self::Linear {
                weights,
                noise,
                intercept,
                ..
            } => {
                if weights.is_empty() {
                    return bad("weights must not be empty".into());
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return bad("noise must be non-negative".into());
                }
                if weights
                    .iter()
                    .chain(std::iter::once(intercept))
                    .any(|w| !w.is_finite())
                {
                    return bad("weights must be finite".into());
                }
            }
            Self::ToyRegionBias {
                noise,
                region_start,
                region_fraction,
                bump,
                ..
            } => {
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return bad("noise must be non-negative".into());
                }
                if !(*region_fraction > 0.0 && *region_fraction <= 1.0) {
                    return bad("region_fraction must lie in (0, 1]".into());
                }
                if !(-1.0..=1.0).contains(region_start)
                    || region_start + 2.0 * region_fraction > 1.0 + 1e-12
                {
                    return bad("region must lie inside [-1, 1]".into());
                }
                if !bump.is_finite() {
                    return bad("bump must be finite".into());
                }
            }
            Self::HeteroscedasticSubgroups {
                dim,
                group_feature,
                thresholds,
                groups,
                ..
            } => {
                if *dim == 0 {
                    return bad("dim must be positive".into());
                }
                if group_feature >= dim {
                    return bad("group_feature out of range".into());
                }
                if groups.len() != thresholds.len() + 1 {
                    return bad("groups must number one more than thresholds".into());
                }
                if thresholds.windows(2).any(|w| w[1] <= w[0])
                    || thresholds.iter().any(|t| !t.is_finite())
                {
                    return bad("thresholds must be finite and strictly ascending".into());
                }
                for g in groups {
                    if !(g.sigma >= 0.0 && g.sigma.is_finite()) || !g.shift.is_finite() {
                        return bad("group sigma must be non-negative and finite".into());
                    }
                    if !(g.skew > -1.0 && g.skew < 1.0) {
                        return bad("group skew must lie in (-1, 1)".into());
                    }
                }
            }
            Self::CreditLike {
                dim,
                noise,
                y0_quantile,
                ..
            } => {
                if *dim < 4 {
                    return bad("credit-like data needs dim >= 4".into());
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return bad("noise must be non-negative".into());
                }
                if !(*y0_quantile > 0.0 && *y0_quantile < 1.0) {
                    return bad("y0_quantile must lie in (0, 1)".into());
                }
            }
        }
        Ok(())
    }

    fn feature_names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("x{j}")).collect()
    }

    fn sample_x(&self, rng: &mut seeds::Rng) -> Vec<f64> {
        match self {
            Self::Linear { .. } | Self::ToyRegionBias { .. } => (0..self.dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            _ => (0..self.dim())
                .map(|_| StandardNormal.sample(rng))
                .collect(),
        }
    }

    fn sample_y(&self, x: &[f64], rng: &mut seeds::Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match self {
            Self::Linear { noise, .. } | Self::ToyRegionBias { noise, .. } => {
                self.mean_fn(x) + noise * z
            }
            Self::HeteroscedasticSubgroups { groups, .. } => {
                let g = &groups[self.group_of(x)];
                let (left, right) = (g.sigma * (1.0 - g.skew), g.sigma * (1.0 + g.skew));
                let u: f64 = rng.random();
                let noise = if u * (left + right) < left {
                    -left * z.abs()
                } else {
                    right * z.abs()
                };
                self.mean_fn(x) + g.shift + noise
            }
            Self::CreditLike { noise, .. } => (self.mean_fn(x) + noise * z).clamp(0.0, 1.0),
        }
    }

    /// Latent subgroup index of `x` (zero for generators without groups).
    pub fn group_of(&self, x: &[f64]) -> usize {
        match self {
            Self::HeteroscedasticSubgroups {
                group_feature,
                thresholds,
                ..
            } => thresholds.partition_point(|&t| t < x[*group_feature]),
            _ => 0,
        }
    }

    /// Noise-free part of the label (creditworthiness for credit-like data).
    fn mean_fn(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear {
                weights, intercept, ..
            } => intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>(),
            Self::ToyRegionBias {
                region_start,
                region_fraction,
                bump,
                ..
            } => {
                let t = x[0];
                let width = 2.0 * region_fraction;
                let inside = t >= *region_start && t < region_start + width;
                let b = if inside {
                    bump * (PI * (t - region_start) / width).sin().powi(2)
                } else {
                    0.0
                };
                (2.5 * t).sin() + b
            }
            Self::HeteroscedasticSubgroups { .. } => x
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * v / (1.0 + j as f64)
                })
                .sum(),
            Self::CreditLike { .. } => {
                let linear: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, v)| 0.6 * v / (1.0 + j as f64))
                    .sum();
                let logit =
                    0.8 + linear + 0.9 * (2.0 * x[0]).sin() + 0.7 * x[1] * x[2] - 0.4 * x[3] * x[3];
                sigmoid(logit)
            }
        }
    }

    /// True whether `x` falls in the toy generator's bump window.
    pub fn in_region(&self, x: &[f64]) -> bool {
        match self {
            Self::ToyRegionBias {
                region_start,
                region_fraction,
                ..
            } => x[0] >= *region_start && x[0] < region_start + 2.0 * region_fraction,
            _ => false,
        }
    }

    /// The true conditional distribution of `y` given `x`.
    ///
    /// Credit-like labels are clipped to `[0, 1]`; the returned Gaussian
    /// ignores the clipping, so its CDF is exact at every threshold strictly
    /// inside (0, 1).
    pub fn conditional(&self, x: &[f64]) -> Result<Forecast> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mu = self.mean_fn(x);
        let floor = 1e-12;
        Ok(match self {
            Self::Linear { noise, .. }
            | Self::ToyRegionBias { noise, .. }
            | Self::CreditLike { noise, .. } => {
                Forecast::Gaussian(GaussianForecast::new(mu, noise.max(floor))?)
            }
            Self::HeteroscedasticSubgroups { groups, .. } => {
                let g = &groups[self.group_of(x)];
                let sigma = g.sigma.max(floor);
                if g.skew == 0.0 {
                    Forecast::Gaussian(GaussianForecast::new(mu + g.shift, sigma)?)
                } else {
                    Forecast::TwoPiece(TwoPieceForecast::new(
                        mu + g.shift,
                        sigma * (1.0 - g.skew),
                        sigma * (1.0 + g.skew),
                    )?)
                }
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    /// Credit threshold, for credit-like data.
    pub y0: Option<f64>,
}

fn draw(spec: &GeneratorSpec, n: usize, rng: &mut seeds::Rng) -> Result<Dataset> {
    let mut features = Vec::with_capacity(n * spec.dim());
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = spec.sample_x(rng);
        labels.push(spec.sample_y(&x, rng));
        features.extend(x);
    }
    Dataset::from_flat(features, labels, spec.feature_names())
}

pub fn gen_toy(spec: &GeneratorSpec) -> Result<Dataset> {
    match spec {
        GeneratorSpec::ToyRegionBias { .. } | GeneratorSpec::Linear { .. } => {
            spec.validate()?;
            draw(spec, spec.n(), &mut seeds::stream(spec.seed(), "gen/data"))
        }
        _ => Err(Error::config(
            "gen_toy expects a toy-region-bias or linear spec",
        )),
    }
}

pub fn gen_heteroscedastic(spec: &GeneratorSpec) -> Result<Dataset> {
    match spec {
        GeneratorSpec::HeteroscedasticSubgroups { .. } => {
            spec.validate()?;
            draw(spec, spec.n(), &mut seeds::stream(spec.seed(), "gen/data"))
        }
        _ => Err(Error::config(
            "gen_heteroscedastic expects a heteroscedastic-subgroups spec",
        )),
    }
}

/// Credit-like data and its threshold `y0`, the `y0_quantile` quantile of a
/// reference population that depends on the generator's shape but not on
/// its size or seed, so independently generated splits share one `y0`.
pub fn gen_credit(spec: &GeneratorSpec) -> Result<(Dataset, f64)> {
    let GeneratorSpec::CreditLike { y0_quantile, .. } = spec else {
        return Err(Error::config("gen_credit expects a credit-like spec"));
    };
    spec.validate()?;
    let data = draw(spec, spec.n(), &mut seeds::stream(spec.seed(), "gen/data"))?;
    let reference = draw(
        spec,
        CREDIT_REFERENCE_N,
        &mut seeds::stream(0, "gen/credit-reference"),
    )?;
    let mut ys = reference.labels().to_vec();
    ys.sort_by(f64::total_cmp);
    let idx = ((y0_quantile * CREDIT_REFERENCE_N as f64) as usize).min(CREDIT_REFERENCE_N - 1);
    Ok((data, ys[idx]))
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    Ok(match spec {
        GeneratorSpec::Linear { .. } | GeneratorSpec::ToyRegionBias { .. } => Generated {
            dataset: gen_toy(spec)?,
            y0: None,
        },
        GeneratorSpec::HeteroscedasticSubgroups { .. } => Generated {
            dataset: gen_heteroscedastic(spec)?,
            y0: None,
        },
        GeneratorSpec::CreditLike { .. } => {
            let (dataset, y0) = gen_credit(spec)?;
            Generated {
                dataset,
                y0: Some(y0),
            }
        }
    })
}
