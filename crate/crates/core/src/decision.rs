//! Decisions from predicted distributions.
//!
//! Given a forecast of `y`, the Bayes action minimizes the expected loss
//! under the forecast. For a forecaster that is individually calibrated and
//! a monotone non-negative loss, the realized loss exceeds `k` times the
//! predicted minimum with probability at most `1/k`; average calibration
//! alone gives `2/k`. [`markov_check`] measures both.
//!
//! The credit game pits a bank using [`bank_decide`] against customers who
//! learn, from their own past outcomes, whether applying pays off.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::forecast::{Forecast, RandomizedForecaster};
use crate::nn::{Adam, Mlp};
use crate::seeds;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    NonIncreasing,
    NonDecreasing,
}

/// `l(y)` for one action.
#[derive(Clone)]
pub enum LossCurve {
    /// `below` for `y < threshold`, `at_or_above` otherwise. Expected values
    /// use the forecast CDF in closed form.
    Step {
        threshold: f64,
        below: f64,
        at_or_above: f64,
    },
    /// Expected values use quadrature.
    Smooth(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl LossCurve {
    pub fn smooth(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        LossCurve::Smooth(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        LossCurve::Step {
            threshold: 0.0,
            below: c,
            at_or_above: c,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            LossCurve::Step {
                threshold,
                below,
                at_or_above,
            } => {
                if y < *threshold {
                    *below
                } else {
                    *at_or_above
                }
            }
            LossCurve::Smooth(f) => f(y),
        }
    }
}

impl fmt::Debug for LossCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossCurve::Step {
                threshold,
                below,
                at_or_above,
            } => f
                .debug_struct("Step")
                .field("threshold", threshold)
                .field("below", below)
                .field("at_or_above", at_or_above)
                .finish(),
            LossCurve::Smooth(_) => f.write_str("Smooth(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActionLoss {
    pub name: String,
    pub curve: LossCurve,
    pub direction: Direction,
}

/// Labels at which declared directions and signs are checked.
fn probe_grid() -> impl Iterator<Item = f64> {
    (-400..=400).map(|i| (i as f64 / 50.0).sinh())
}

/// A finite action set with one monotone loss curve per action.
#[derive(Debug, Clone)]
pub struct MonotonicLoss {
    actions: Vec<ActionLoss>,
    non_negative: bool,
}

impl MonotonicLoss {
    /// Check every curve on a probe grid over `[-3000, 3000]`: finite values,
    /// the declared direction, and non-negativity when `non_negative` is set.
    pub fn new(actions: Vec<ActionLoss>, non_negative: bool) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::config("loss needs at least one action"));
        }
        for a in &actions {
            let mut prev: Option<f64> = None;
            for y in probe_grid() {
                let v = a.curve.eval(y);
                if !v.is_finite() {
                    return Err(Error::Contract(format!(
                        "loss of '{}' is not finite at y = {y}",
                        a.name
                    )));
                }
                if non_negative && v < 0.0 {
                    return Err(Error::Contract(format!(
                        "loss of '{}' is negative at y = {y}",
                        a.name
                    )));
                }
                if let Some(p) = prev {
                    let ok = match a.direction {
                        Direction::NonDecreasing => v >= p,
                        Direction::NonIncreasing => v <= p,
                    };
                    if !ok {
                        return Err(Error::Contract(format!(
                            "loss of '{}' breaks its declared direction near y = {y}",
                            a.name
                        )));
                    }
                }
                prev = Some(v);
            }
        }
        Ok(Self {
            actions,
            non_negative,
        })
    }

    pub fn actions(&self) -> &[ActionLoss] {
        &self.actions
    }

    pub fn non_negative(&self) -> bool {
        self.non_negative
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }
}

/// `E[l(Y, a)]` with `Y` distributed as `forecast`.
pub fn bayes_expected_loss(
    forecast: &Forecast,
    loss: &MonotonicLoss,
    action: usize,
) -> Result<f64> {
    let a = loss
        .actions
        .get(action)
        .ok_or_else(|| Error::domain(format!("action {action} out of range")))?;
    let value = match &a.curve {
        LossCurve::Step {
            threshold,
            below,
            at_or_above,
        } => {
            if below == at_or_above {
                *below
            } else {
                let p = forecast.cdf_at(*threshold)?;
                below * p + at_or_above * (1.0 - p)
            }
        }
        LossCurve::Smooth(f) => forecast.expect(|y| f(y)),
    };
    if !value.is_finite() {
        return Err(Error::Contract(format!(
            "expected loss of '{}' is not finite",
            a.name
        )));
    }
    Ok(value)
}

/// The action minimizing expected loss and the minimum `l_H`. Ties go to
/// the action listed first.
pub fn bayes_action(forecast: &Forecast, loss: &MonotonicLoss) -> Result<(usize, f64)> {
    let mut best = (0, bayes_expected_loss(forecast, loss, 0)?);
    for a in 1..loss.actions.len() {
        let v = bayes_expected_loss(forecast, loss, a)?;
        if v < best.1 {
            best = (a, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Yes,
    No,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Yes => "yes",
            Decision::No => "no",
        })
    }
}

/// Payoffs for approving a customer with `y >= y0`, approving one with
/// `y < y0`, and refusing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityTable {
    pub approve_qualified: f64,
    pub approve_unqualified: f64,
    pub refuse: f64,
}

impl UtilityTable {
    pub const BANK: Self = Self {
        approve_qualified: 1.0,
        approve_unqualified: -3.0,
        refuse: 0.0,
    };

    pub const CUSTOMER: Self = Self {
        approve_qualified: 0.2,
        approve_unqualified: 1.0,
        refuse: -0.5,
    };

    pub fn utility(&self, decision: Decision, qualified: bool) -> f64 {
        match (decision, qualified) {
            (Decision::Yes, true) => self.approve_qualified,
            (Decision::Yes, false) => self.approve_unqualified,
            (Decision::No, _) => self.refuse,
        }
    }

    /// Largest `Pr[y < y0]` at which approving has expected utility at
    /// least that of refusing; 1/4 for the default bank table.
    pub fn approval_threshold(&self) -> Result<f64> {
        let gap = self.approve_qualified - self.approve_unqualified;
        if gap.is_nan() || gap <= 0.0 || self.approve_qualified < self.refuse {
            return Err(Error::config(
                "bank table must prefer approving qualified customers over refusing, and over approving unqualified ones",
            ));
        }
        Ok((self.approve_qualified - self.refuse) / gap)
    }

    /// The table as a loss over the actions `yes` and `no`.
    pub fn as_loss(&self, y0: f64) -> Result<MonotonicLoss> {
        MonotonicLoss::new(
            vec![
                ActionLoss {
                    name: "yes".into(),
                    curve: LossCurve::Step {
                        threshold: y0,
                        below: -self.approve_unqualified,
                        at_or_above: -self.approve_qualified,
                    },
                    direction: if self.approve_unqualified <= self.approve_qualified {
                        Direction::NonIncreasing
                    } else {
                        Direction::NonDecreasing
                    },
                },
                ActionLoss {
                    name: "no".into(),
                    curve: LossCurve::constant(-self.refuse),
                    direction: Direction::NonIncreasing,
                },
            ],
            false,
        )
    }
}

/// The negated bank utility table as a loss over `yes` and `no`.
pub fn bank_loss(y0: f64) -> MonotonicLoss {
    UtilityTable::BANK
        .as_loss(y0)
        .expect("the bank table is monotone")
}

/// Approve iff the forecast puts at most 1/4 probability below `y0`.
pub fn bank_decide(forecast: &Forecast, y0: f64) -> Result<Decision> {
    decide_with_threshold(forecast, y0, 0.25)
}

fn decide_with_threshold(forecast: &Forecast, y0: f64, threshold: f64) -> Result<Decision> {
    Ok(if forecast.cdf_at(y0)? <= threshold {
        Decision::Yes
    } else {
        Decision::No
    })
}

/// Two strictly positive exponential losses, `exp(s (y - center))` for
/// action `high` and `exp(-s (y - center))` for action `low`. Their Bayes
/// action compares predicted upper and lower tails.
pub fn exponential_loss_pair(center: f64, scale: f64) -> Result<MonotonicLoss> {
    if !(scale > 0.0 && scale.is_finite() && center.is_finite()) {
        return Err(Error::config(
            "exponential loss needs a finite center and positive scale",
        ));
    }
    // capped so the probe grid stays finite
    let cap = 700.0;
    MonotonicLoss::new(
        vec![
            ActionLoss {
                name: "high".into(),
                curve: LossCurve::smooth(move |y| (scale * (y - center)).min(cap).exp()),
                direction: Direction::NonDecreasing,
            },
            ActionLoss {
                name: "low".into(),
                curve: LossCurve::smooth(move |y| (-scale * (y - center)).min(cap).exp()),
                direction: Direction::NonIncreasing,
            },
        ],
        true,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovRow {
    pub k: f64,
    /// Fraction of samples with `l(y, φ_H(x)) >= k l_H(x)`.
    pub empirical: f64,
    /// `2/k`, the bound under average calibration.
    pub bound_avg: f64,
    /// `1/k`, the bound under individual calibration.
    pub bound_paic: f64,
}

/// Empirical `Pr[l(x, y, φ_H(x)) >= k l_H(x)]` for each `k`, with a fresh
/// seed per sample.
pub fn markov_check<F, R>(
    forecaster: &F,
    data: &Dataset,
    loss: &MonotonicLoss,
    ks: &[f64],
    rng: &mut R,
) -> Result<Vec<MarkovRow>>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    if !loss.non_negative {
        return Err(Error::config(
            "the Markov check needs a loss declared non-negative",
        ));
    }
    if data.is_empty() {
        return Err(Error::domain("dataset is empty"));
    }
    if ks.is_empty() {
        return Err(Error::config("no k values given"));
    }
    if let Some(k) = ks.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::config(format!("k must be positive, got {k}")));
    }
    let mut ratios = Vec::with_capacity(data.len());
    for (x, y) in data.iter() {
        let forecast = forecaster.predict(x, rng.random())?;
        let (action, predicted) = bayes_action(&forecast, loss)?;
        let realized = loss.actions[action].curve.eval(y);
        if realized < 0.0 || predicted < 0.0 {
            return Err(Error::Contract(format!(
                "observed negative loss {realized} for a loss declared non-negative"
            )));
        }
        ratios.push((realized, predicted));
    }
    let n = ratios.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ratios.iter().filter(|(l, lh)| *l >= k * lh).count();
            MarkovRow {
                k,
                empirical: hits as f64 / n,
                bound_avg: 2.0 / k,
                bound_paic: 1.0 / k,
            }
        })
        .collect())
}

/// `k,empirical,bound_avg,bound_paic` rows.
pub fn write_markov_csv<W: Write>(rows: &[MarkovRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "empirical", "bound_avg", "bound_paic"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.empirical.to_string(),
            r.bound_avg.to_string(),
            r.bound_paic.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<markov writer>", e))?;
    Ok(())
}

/// How customers fit their utility model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiConfig {
    pub hidden: Vec<usize>,
    /// Arrivals between refits.
    pub refit_every: usize,
    /// Adam steps per refit, warm-started from the previous fit.
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PsiConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            refit_every: 200,
            steps: 300,
            batch_size: 64,
            learning_rate: 3e-3,
        }
    }
}

impl PsiConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config(
                "psi hidden layers must be non-empty and positive",
            ));
        }
        if self.refit_every == 0 || self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "psi refit_every, steps and batch_size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("psi learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Past applications: `(x, y)` and the utility the customer received.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PsiHistory {
    inputs: Vec<Vec<f64>>,
    utilities: Vec<f64>,
}

impl PsiHistory {
    pub fn push(&mut self, x: &[f64], y: f64, utility: f64) {
        let mut row = x.to_vec();
        row.push(y);
        self.inputs.push(row);
        self.utilities.push(utility);
    }

    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }
}

/// Customers' regression `ψ(x, y)` of the utility of applying. Predicts 0
/// until first fit, so everyone applies at the start.
#[derive(Debug, Clone)]
pub struct PsiModel {
    net: Mlp,
    adam: Adam,
    // input shift and scale, fit on the history at each refit
    center: Vec<f64>,
    scale: Vec<f64>,
    fitted: bool,
}

impl PsiModel {
    pub fn cold(dim: usize, config: &PsiConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![dim + 1];
        sizes.extend(&config.hidden);
        sizes.push(1);
        let net = Mlp::init(&sizes, false, seeds::derive(seed, "psi/init"))?;
        let adam = Adam::new(net.num_params(), config.learning_rate);
        Ok(Self {
            net,
            adam,
            center: vec![0.0; dim + 1],
            scale: vec![1.0; dim + 1],
            fitted: false,
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    fn normalize(&self, x: &[f64], y: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().chain(std::iter::once(&y)));
        for ((v, c), s) in out.iter_mut().zip(&self.center).zip(&self.scale) {
            *v = (*v - c) / s;
        }
    }

    pub fn predict(&self, x: &[f64], y: f64) -> Result<f64> {
        if !self.fitted {
            return Ok(0.0);
        }
        let mut z = Vec::with_capacity(x.len() + 1);
        self.normalize(x, y, &mut z);
        Ok(self.net.forward(&z, 0.0)?.outputs()[0])
    }

    /// Continue fitting on the whole history by minibatch squared error.
    pub fn refit<R: Rng + ?Sized>(
        &mut self,
        history: &PsiHistory,
        config: &PsiConfig,
        rng: &mut R,
    ) -> Result<()> {
        if history.is_empty() {
            return Ok(());
        }
        let n = history.len();
        let cols = self.center.len();
        for j in 0..cols {
            let mean = history.inputs.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = history
                .inputs
                .iter()
                .map(|r| (r[j] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            self.center[j] = mean;
            self.scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let mut grad = vec![0.0; self.net.num_params()];
        let mut z = Vec::with_capacity(cols);
        let mut trace = self.net.new_trace();
        let batch = config.batch_size.min(n);
        for _ in 0..config.steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for _ in 0..batch {
                let i = rng.random_range(0..n);
                let row = &history.inputs[i];
                self.normalize(&row[..cols - 1], row[cols - 1], &mut z);
                self.net.forward_into(&mut trace, &z, 0.0)?;
                let residual = trace.outputs()[0] - history.utilities[i];
                self.net
                    .backward(&trace, &[2.0 * residual / batch as f64], &mut grad)?;
            }
            self.adam.step_mlp(&mut self.net, &grad)?;
        }
        self.fitted = true;
        Ok(())
    }
}

/// Fit a fresh `ψ` on `history`; an empty history gives `ψ ≡ 0`.
pub fn train_customer_model(
    history: &PsiHistory,
    dim: usize,
    config: &PsiConfig,
    seed: u64,
) -> Result<PsiModel> {
    let mut model = PsiModel::cold(dim, config, seed)?;
    model.refit(history, config, &mut seeds::stream(seed, "psi/batches"))?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankGameConfig {
    /// Credit threshold: customers with `y >= y0` are qualified.
    pub y0: f64,
    pub bank_utility: UtilityTable,
    pub customer_utility: UtilityTable,
    pub psi: PsiConfig,
    pub seed: u64,
}

impl Default for BankGameConfig {
    fn default() -> Self {
        Self {
            y0: 0.5,
            bank_utility: UtilityTable::BANK,
            customer_utility: UtilityTable::CUSTOMER,
            psi: PsiConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Every arrival applies.
    Random,
    /// Arrivals apply iff `ψ(x, y) >= 0`.
    Rational,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Random => "random",
            Phase::Rational => "rational",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRound {
    pub phase: Phase,
    pub round: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub applied: bool,
    /// `None` when the customer did not apply.
    pub decision: Option<Decision>,
    pub bank_utility: f64,
    pub customer_utility: f64,
    /// Applied with `y < y0`, whatever the bank decided.
    pub exploit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub rounds: Vec<GameRound>,
}

impl GameTrace {
    /// One row per round: phase, round, features, y, applied, decision,
    /// utilities and the exploit flag.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.rounds.first().map_or(0, |r| r.x.len());
        let mut header = vec!["phase".to_string(), "round".to_string()];
        header.extend((0..d).map(|j| format!("x{j}")));
        header.extend(
            [
                "y",
                "applied",
                "decision",
                "bank_utility",
                "customer_utility",
                "exploit",
            ]
            .map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.rounds {
            let mut row = vec![r.phase.to_string(), r.round.to_string()];
            row.extend(r.x.iter().map(f64::to_string));
            row.push(r.y.to_string());
            row.push(r.applied.to_string());
            row.push(
                r.decision
                    .map_or_else(|| "none".to_string(), |d| d.to_string()),
            );
            row.push(r.bank_utility.to_string());
            row.push(r.customer_utility.to_string());
            row.push(r.exploit.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<trace writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub arrivals: usize,
    pub applications: usize,
    pub approvals: usize,
    pub unqualified_approvals: usize,
    pub total_bank_utility: f64,
    /// Per arrival.
    pub mean_bank_utility: f64,
    pub total_customer_utility: f64,
    /// Exploiting arrivals over all arrivals.
    pub exploit_fraction: f64,
    /// Unqualified approvals over approvals; 0 without approvals.
    pub unqualified_approval_fraction: f64,
    /// Exploit fraction per block of `refit_every` arrivals.
    pub exploit_trajectory: Vec<f64>,
}

impl PhaseSummary {
    fn from_rounds(phase: Phase, rounds: &[GameRound], block: usize) -> Self {
        let arrivals = rounds.len();
        let count = |f: &dyn Fn(&GameRound) -> bool| rounds.iter().filter(|r| f(r)).count();
        let applications = count(&|r| r.applied);
        let approvals = count(&|r| r.decision == Some(Decision::Yes));
        let unqualified_approvals = count(&|r| r.decision == Some(Decision::Yes) && r.exploit);
        let total_bank_utility: f64 = rounds.iter().map(|r| r.bank_utility).sum();
        let total_customer_utility: f64 = rounds.iter().map(|r| r.customer_utility).sum();
        let exploits = count(&|r| r.exploit);
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            phase,
            arrivals,
            applications,
            approvals,
            unqualified_approvals,
            total_bank_utility,
            mean_bank_utility: total_bank_utility / arrivals as f64,
            total_customer_utility,
            exploit_fraction: ratio(exploits, arrivals),
            unqualified_approval_fraction: ratio(unqualified_approvals, approvals),
            exploit_trajectory: rounds
                .chunks(block.max(1))
                .map(|c| ratio(c.iter().filter(|r| r.exploit).count(), c.len()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub config: BankGameConfig,
    pub random: PhaseSummary,
    pub rational: PhaseSummary,
}

#[allow(clippy::too_many_arguments)]
fn play_round<F, R>(
    bank: &F,
    config: &BankGameConfig,
    threshold: f64,
    phase: Phase,
    round: usize,
    (x, y): (&[f64], f64),
    applied: bool,
    rng: &mut R,
) -> Result<GameRound>
where
    F: RandomizedForecaster + ?Sized,
    R: Rng + ?Sized,
{
    let qualified = y >= config.y0;
    let decision = if applied {
        let forecast = bank.predict(x, rng.random())?;
        Some(decide_with_threshold(&forecast, config.y0, threshold)?)
    } else {
        None
    };
    let (bank_utility, customer_utility) = match decision {
        Some(d) => (
            config.bank_utility.utility(d, qualified),
            config.customer_utility.utility(d, qualified),
        ),
        None => (0.0, 0.0),
    };
    Ok(GameRound {
        phase,
        round,
        x: x.to_vec(),
        y,
        applied,
        decision,
        bank_utility,
        customer_utility,
        exploit: applied && !qualified,
    })
}

/// Play the same stream of arrivals twice against a frozen bank: once with
/// every arrival applying, once with customers applying iff `ψ(x, y) >= 0`,
/// `ψ` being refit on their realized utilities every `psi.refit_every`
/// arrivals. Customers who do not apply receive 0 and are not added to the
/// history. The bank approves iff the predicted `Pr[y < y0]` is at most the
/// threshold implied by its utility table, drawing a fresh seed per
/// application.
pub fn run_credit_game<F>(
    bank: &F,
    stream: &Dataset,
    config: &BankGameConfig,
) -> Result<(GameTrace, GameSummary)>
where
    F: RandomizedForecaster + ?Sized,
{
    if stream.is_empty() {
        return Err(Error::domain("customer stream is empty"));
    }
    if !config.y0.is_finite() {
        return Err(Error::config("y0 must be finite"));
    }
    config.psi.validate()?;
    let threshold = config.bank_utility.approval_threshold()?;
    let mut trace = GameTrace::default();

    let mut bank_rng = seeds::stream(config.seed, "game/bank/random");
    for (i, row) in stream.iter().enumerate() {
        trace.rounds.push(play_round(
            bank,
            config,
            threshold,
            Phase::Random,
            i,
            row,
            true,
            &mut bank_rng,
        )?);
    }

    let mut bank_rng = seeds::stream(config.seed, "game/bank/rational");
    let mut psi_rng = seeds::stream(config.seed, "game/psi/batches");
    let mut psi = PsiModel::cold(
        stream.dim(),
        &config.psi,
        seeds::derive(config.seed, "game/psi"),
    )?;
    let mut history = PsiHistory::default();
    for (i, (x, y)) in stream.iter().enumerate() {
        if i > 0 && i % config.psi.refit_every == 0 {
            psi.refit(&history, &config.psi, &mut psi_rng)?;
        }
        let applied = psi.predict(x, y)? >= 0.0;
        let round = play_round(
            bank,
            config,
            threshold,
            Phase::Rational,
            i,
            (x, y),
            applied,
            &mut bank_rng,
        )?;
        if applied {
            history.push(x, y, round.customer_utility);
        }
        trace.rounds.push(round);
    }

    let n = stream.len();
    let block = config.psi.refit_every;
    let summary = GameSummary {
        config: config.clone(),
        random: PhaseSummary::from_rounds(Phase::Random, &trace.rounds[..n], block),
        rational: PhaseSummary::from_rounds(Phase::Rational, &trace.rounds[n..], block),
    };
    Ok((trace, summary))
}
