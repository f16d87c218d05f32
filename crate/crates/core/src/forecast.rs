//! Predicted CDFs and randomized forecasters.
//!
//! A randomized forecaster is a deterministic function `h̄(x, r)` returning a
//! CDF; drawing `r ~ Uniform[0, 1]` makes the forecast random. The concrete
//! variants are a trained network, the ground-truth oracle of a synthetic
//! generator, the pass-through construction `Phi(y / c + Phi^{-1}(r))`
//! whose PIT equals `r` as `c` grows, and an isotonic recalibration wrapper.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GeneratorSpec, Standardization};
use crate::math::{
    clamp_prob, half_normal_rule, inv_cdf_raw, pdf_raw, phi_raw, probit_rule, EmpiricalPit,
    MonotoneMap, PROB_FLOOR,
};
use crate::nn::Mlp;
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Log densities are floored here so sharpness reports stay finite.
const MIN_LOG_DENSITY: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianForecast {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianForecast {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::domain(format!(
                "invalid Gaussian forecast (mu = {mu}, sigma = {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }
}

/// Two-piece normal: mode `mode`, scale `left` below it and `right` above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPieceForecast {
    pub mode: f64,
    pub left: f64,
    pub right: f64,
}

impl TwoPieceForecast {
    pub fn new(mode: f64, left: f64, right: f64) -> Result<Self> {
        if !mode.is_finite()
            || !(left > 0.0 && left.is_finite())
            || !(right > 0.0 && right.is_finite())
        {
            return Err(Error::domain("invalid two-piece forecast"));
        }
        Ok(Self { mode, left, right })
    }

    fn left_mass(&self) -> f64 {
        self.left / (self.left + self.right)
    }

    fn cdf(&self, y: f64) -> f64 {
        let s = self.left + self.right;
        if y < self.mode {
            2.0 * self.left / s * phi_raw((y - self.mode) / self.left)
        } else {
            1.0 - 2.0 * self.right / s * phi_raw(-(y - self.mode) / self.right)
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let s = self.left + self.right;
        if p < self.left_mass() {
            self.mode + self.left * inv_cdf_raw(p * s / (2.0 * self.left))
        } else {
            let tail = ((1.0 - p) * s / (2.0 * self.right)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            self.mode - self.right * inv_cdf_raw(tail)
        }
    }

    fn density(&self, y: f64) -> f64 {
        let s = self.left + self.right;
        let scale = if y < self.mode { self.left } else { self.right };
        2.0 / s * pdf_raw((y - self.mode) / scale)
    }

    fn std_dev(&self) -> f64 {
        let d = self.right - self.left;
        ((1.0 - 2.0 / std::f64::consts::PI) * d * d + self.left * self.right).sqrt()
    }
}

/// A predicted distribution over the label, exposed through its CDF.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecast {
    Gaussian(GaussianForecast),
    TwoPiece(TwoPieceForecast),
    /// `map ∘ inner` where `map` is a monotone recalibration of CDF levels.
    Recalibrated {
        inner: Box<Forecast>,
        map: Arc<MonotoneMap>,
    },
}

impl From<GaussianForecast> for Forecast {
    fn from(g: GaussianForecast) -> Self {
        Forecast::Gaussian(g)
    }
}

impl Forecast {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Ok(Forecast::Gaussian(GaussianForecast::new(mu, sigma)?))
    }

    fn cdf_raw(&self, y: f64) -> f64 {
        match self {
            Forecast::Gaussian(g) => phi_raw((y - g.mu) / g.sigma),
            Forecast::TwoPiece(t) => t.cdf(y),
            Forecast::Recalibrated { inner, map } => map.eval(inner.cdf_raw(y)),
        }
    }

    /// `F(y)`, clamped to `[1e-15, 1 - 1e-15]`.
    pub fn cdf_at(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::domain(format!("label must be finite, got {y}")));
        }
        Ok(clamp_prob(self.cdf_raw(y)))
    }

    fn quantile_raw(&self, p: f64) -> f64 {
        match self {
            Forecast::Gaussian(g) => g.mu + g.sigma * inv_cdf_raw(p),
            Forecast::TwoPiece(t) => t.quantile(p),
            Forecast::Recalibrated { inner, map } => {
                let u = map.inverse(p).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                inner.quantile_raw(u)
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        Ok(self.quantile_raw(p))
    }

    /// Equal-tailed interval holding `level` of the predicted mass.
    pub fn credible_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!(
                "level must lie in (0, 1), got {level}"
            )));
        }
        Ok((
            self.quantile((1.0 - level) / 2.0)?,
            self.quantile((1.0 + level) / 2.0)?,
        ))
    }

    /// Log of the predicted density at `y`, floored at -700.
    pub fn log_density(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::domain(format!("label must be finite, got {y}")));
        }
        let value = match self {
            Forecast::Gaussian(g) => {
                let z = (y - g.mu) / g.sigma;
                -g.sigma.ln() - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Forecast::TwoPiece(t) => t.density(y).ln(),
            Forecast::Recalibrated { inner, map } => {
                map.derivative(inner.cdf_raw(y)).ln() + inner.log_density(y)?
            }
        };
        Ok(if value.is_nan() {
            MIN_LOG_DENSITY
        } else {
            value.max(MIN_LOG_DENSITY)
        })
    }

    /// `E[g(Y)]` under the forecast, by fixed 64-node quadrature over
    /// probit-spaced quantile levels.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        let rule = probit_rule();
        match self {
            Forecast::Gaussian(f) => rule.iter().map(|&(z, w)| w * g(f.mu + f.sigma * z)).sum(),
            // a mixture of two half normals; integrating each half avoids the kink at the mode
            Forecast::TwoPiece(t) => {
                let half = half_normal_rule();
                let lower: f64 = half.iter().map(|&(z, w)| w * g(t.mode - t.left * z)).sum();
                let upper: f64 = half.iter().map(|&(z, w)| w * g(t.mode + t.right * z)).sum();
                t.left_mass() * lower + (1.0 - t.left_mass()) * upper
            }
            Forecast::Recalibrated { .. } => rule
                .iter()
                .map(|&(z, w)| w * g(self.quantile_raw(clamp_prob(phi_raw(z)))))
                .sum(),
        }
    }

    /// Predicted standard deviation.
    pub fn std_dev(&self) -> f64 {
        match self {
            Forecast::Gaussian(g) => g.sigma,
            Forecast::TwoPiece(t) => t.std_dev(),
            Forecast::Recalibrated { .. } => {
                let mean = self.expect(|y| y);
                self.expect(|y| (y - mean) * (y - mean)).sqrt()
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile_raw(0.5)
    }
}

/// The randomized forecaster interface: a deterministic map from an input
/// and a seed `r ∈ [0, 1]` to a predicted CDF.
pub trait RandomizedForecaster {
    fn predict(&self, x: &[f64], r: f64) -> Result<Forecast>;
}

impl<T: RandomizedForecaster + ?Sized> RandomizedForecaster for &T {
    fn predict(&self, x: &[f64], r: f64) -> Result<Forecast> {
        (**self).predict(x, r)
    }
}

fn check_seed(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::domain(format!("seed r must lie in [0, 1], got {r}")))
    }
}

/// A trained Gaussian network together with the input standardization it
/// was fit with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRecord", into = "NetRecord")]
pub struct TrainedNet {
    pub net: Mlp,
    pub standardization: Standardization,
    pub sigma_floor: f64,
    pub config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetRecord {
    layer_sizes: Vec<usize>,
    seed_input: bool,
    sigma_floor: f64,
    weights: Vec<f64>,
    standardization: Standardization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_config: Option<TrainConfig>,
}

impl TryFrom<NetRecord> for TrainedNet {
    type Error = Error;

    fn try_from(rec: NetRecord) -> Result<Self> {
        let net = Mlp::from_params(&rec.layer_sizes, rec.seed_input, rec.weights)?;
        if net.output_dim() != 2 {
            return Err(Error::config("forecaster network must have 2 outputs"));
        }
        let d = net.input_dim();
        if rec.standardization.mean.len() != d || rec.standardization.scale.len() != d {
            return Err(Error::Shape {
                expected: d,
                got: rec.standardization.mean.len(),
            });
        }
        if rec
            .standardization
            .scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
            || rec.standardization.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::config(
                "standardization must be finite with positive scales",
            ));
        }
        if !(rec.sigma_floor.is_finite() && rec.sigma_floor > 0.0) {
            return Err(Error::config("sigma_floor must be positive"));
        }
        Ok(Self {
            net,
            standardization: rec.standardization,
            sigma_floor: rec.sigma_floor,
            config: rec.train_config,
        })
    }
}

impl From<TrainedNet> for NetRecord {
    fn from(t: TrainedNet) -> Self {
        Self {
            layer_sizes: t.net.sizes().to_vec(),
            seed_input: t.net.seed_input(),
            sigma_floor: t.sigma_floor,
            weights: t.net.params().to_vec(),
            standardization: t.standardization,
            train_config: t.config,
        }
    }
}

impl TrainedNet {
    pub fn predict_gaussian(&self, x: &[f64], r: f64) -> Result<GaussianForecast> {
        check_seed(r)?;
        let z = self.standardization.transform(x)?;
        let (_, mu, sigma) = self.net.forward_gaussian(&z, r, self.sigma_floor)?;
        GaussianForecast::new(mu, sigma)
    }
}

impl RandomizedForecaster for TrainedNet {
    fn predict(&self, x: &[f64], r: f64) -> Result<Forecast> {
        Ok(Forecast::Gaussian(self.predict_gaussian(x, r)?))
    }
}

/// The forecaster variants that can be saved and loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Forecaster {
    Trained {
        model: TrainedNet,
    },
    /// The true conditional distribution of a synthetic generator; ignores `r`.
    Oracle {
        truth: GeneratorSpec,
    },
    /// `h̄(x, r)(y) = Phi(y / scale + Phi^{-1}(r))`, a Gaussian with mean
    /// `-scale * Phi^{-1}(r)`. Its PIT tends to `r` as the scale grows.
    PassThrough {
        scale: f64,
    },
    Recalibrated {
        inner: Box<Forecaster>,
        knots: Arc<MonotoneMap>,
    },
}

/// Name and version written into every saved forecaster.
pub const CHECKPOINT_FORMAT: &str = "indcal-forecaster";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    forecaster: Forecaster,
}

impl Forecaster {
    pub fn pass_through(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("pass-through scale must be positive"));
        }
        Ok(Forecaster::PassThrough { scale })
    }

    pub fn oracle(truth: GeneratorSpec) -> Self {
        Forecaster::Oracle { truth }
    }

    pub fn trained(model: TrainedNet) -> Self {
        Forecaster::Trained { model }
    }

    pub fn recalibrated(inner: Forecaster, map: MonotoneMap) -> Self {
        Forecaster::Recalibrated {
            inner: Box::new(inner),
            knots: Arc::new(map),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Forecaster::PassThrough { scale } if !(*scale > 0.0 && scale.is_finite()) => {
                Err(Error::config("pass-through scale must be positive"))
            }
            Forecaster::Oracle { truth } => truth.validate(),
            Forecaster::Recalibrated { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            forecaster: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!(
                "unknown checkpoint format '{}'",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.forecaster.validate()?;
        Ok(ckpt.forecaster)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl RandomizedForecaster for Forecaster {
    fn predict(&self, x: &[f64], r: f64) -> Result<Forecast> {
        check_seed(r)?;
        match self {
            Forecaster::Trained { model } => model.predict(x, r),
            Forecaster::Oracle { truth } => truth.conditional(x),
            Forecaster::PassThrough { scale } => {
                let z = inv_cdf_raw(r.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR));
                Forecast::gaussian(-scale * z, *scale)
            }
            Forecaster::Recalibrated { inner, knots } => Ok(Forecast::Recalibrated {
                inner: Box::new(inner.predict(x, r)?),
                map: Arc::clone(knots),
            }),
        }
    }
}

/// PIT values `h̄(x_i, r_i)(y_i)` with the seeds `r_i` that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PitSample {
    pub pits: Vec<f64>,
    pub seeds: Vec<f64>,
}

impl PitSample {
    pub fn len(&self) -> usize {
        self.pits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pits.is_empty()
    }

    pub fn empirical(&self) -> Result<EmpiricalPit> {
        EmpiricalPit::new(self.pits.clone())
    }

    pub fn subset(&self, members: &[usize]) -> Result<EmpiricalPit> {
        EmpiricalPit::new(members.iter().map(|&i| self.pits[i]).collect())
    }

    /// `|PIT_i - r_i|` per sample.
    pub fn residuals(&self) -> Vec<f64> {
        self.pits
            .iter()
            .zip(&self.seeds)
            .map(|(p, r)| (p - r).abs())
            .collect()
    }
}

/// Evaluate every sample's PIT with a fresh seed `r_i ~ Uniform[0, 1]`.
pub fn pit_sample<F, R>(forecaster: &F, data: &Dataset, rng: &mut R) -> Result<PitSample>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    if data.is_empty() {
        return Err(Error::domain("dataset is empty"));
    }
    let mut pits = Vec::with_capacity(data.len());
    let mut seeds = Vec::with_capacity(data.len());
    for (x, y) in data.iter() {
        let r: f64 = rng.random();
        pits.push(forecaster.predict(x, r)?.cdf_at(y)?);
        seeds.push(r);
    }
    Ok(PitSample { pits, seeds })
}
