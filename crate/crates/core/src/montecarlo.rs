//! Bankruptcy probability under noisy liquidation.
//!
//! During a uniform liquidation of `δq` shares per day the price follows a
//! random walk whose drift is the increment of expected impact:
//!
//! ```text
//! p(t+1) = p(t) - p0 [I(s(t) + δq) - I(s(t))] + p0 σ n(t)
//! ```
//!
//! with `s(t) = t δq` the shares sold so far and `n(t)` an i.i.d. shock.
//! Without noise the price follows `p0 (1 - I(s))` exactly.
//!
//! Each trial draws from its own ChaCha8 stream keyed by
//! `(master_seed, trial_index)`, so results are bit-identical whatever the
//! thread count or scheduling.

use std::fmt;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure_positive, CoreError, Result};
use crate::impact::{expected_impact, ImpactParams};
use crate::leverage::csv_err;
use crate::registry::{Registry, Strategy};
use crate::valuation::Position;

/// Fraction of negative-price steps above which a warning is logged.
pub const NEGATIVE_PRICE_WARN_FRACTION: f64 = 1e-3;

/// Relative tolerance when checking that `Q / δq` is a whole number of days.
const DAYS_TOLERANCE: f64 = 1e-9;

pub type TrialRng = ChaCha8Rng;

/// Uniform execution plan: `delta_q` shares per day for `days` days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiquidationSchedule {
    quantity: f64,
    delta_q: f64,
    days: u64,
    daily_volume: f64,
}

impl LiquidationSchedule {
    /// Fails unless `quantity / delta_q` is a whole number of days `>= 1`.
    pub fn new(quantity: f64, delta_q: f64, daily_volume: f64) -> Result<Self> {
        ensure_positive("Q", quantity)?;
        ensure_positive("delta_q", delta_q)?;
        ensure_positive("V", daily_volume)?;
        let t = quantity / delta_q;
        let days = t.round();
        if days < 1.0 || (t - days).abs() > DAYS_TOLERANCE * days {
            return Err(CoreError::invalid(
                "delta_q",
                format!("Q / delta_q = {t} is not a whole number of days >= 1"),
            ));
        }
        Ok(LiquidationSchedule {
            quantity,
            delta_q,
            days: days as u64,
            daily_volume,
        })
    }

    pub fn over_days(quantity: f64, days: u64, daily_volume: f64) -> Result<Self> {
        if days == 0 {
            return Err(CoreError::invalid("T", "must be >= 1 day"));
        }
        ensure_positive("Q", quantity)?;
        ensure_positive("V", daily_volume)?;
        Ok(LiquidationSchedule {
            quantity,
            delta_q: quantity / days as f64,
            days,
            daily_volume,
        })
    }

    pub fn quantity(&self) -> f64 {
        self.quantity
    }

    pub fn delta_q(&self) -> f64 {
        self.delta_q
    }

    /// `T = Q / δq`.
    pub fn days(&self) -> u64 {
        self.days
    }

    pub fn daily_volume(&self) -> f64 {
        self.daily_volume
    }

    /// Participation rate `η = δq / V = Q / (V T)`.
    pub fn eta(&self) -> f64 {
        self.delta_q / self.daily_volume
    }

    /// Shares sold after `t` days; exactly `Q` on the last day.
    pub fn sold_after(&self, t: u64) -> f64 {
        if t >= self.days {
            self.quantity
        } else {
            t as f64 * self.delta_q
        }
    }
}

/// Source of the standardized daily shock `n(t)`.
pub trait NoiseModel: Strategy {
    fn shock(&self, rng: &mut TrialRng) -> f64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GaussianNoise;

impl Strategy for GaussianNoise {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn description(&self) -> &'static str {
        "i.i.d. standard normal daily shocks"
    }
}

impl NoiseModel for GaussianNoise {
    fn shock(&self, rng: &mut TrialRng) -> f64 {
        StandardNormal.sample(rng)
    }
}

/// Deterministic limit: the price follows expected impact exactly.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoNoise;

impl Strategy for NoNoise {
    fn name(&self) -> &'static str {
        "none"
    }
    fn description(&self) -> &'static str {
        "no background noise; price follows expected impact"
    }
}

impl NoiseModel for NoNoise {
    fn shock(&self, _rng: &mut TrialRng) -> f64 {
        0.0
    }
}

pub fn noise_models() -> &'static Registry<dyn NoiseModel> {
    static REGISTRY: OnceLock<Registry<dyn NoiseModel>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn NoiseModel>::new("noise model")
            .with(Arc::new(GaussianNoise))
            .with(Arc::new(NoNoise))
    })
}

/// Summary of one simulated liquidation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOutcome {
    /// Total proceeds `Σ δq p(t)`.
    pub proceeds: f64,
    pub liabilities: f64,
    /// Minimum over days of `proceeds so far + q(t) p(t) - L`.
    pub min_marked_equity: f64,
    pub final_price: f64,
    pub negative_price_steps: u64,
}

impl PathOutcome {
    /// `proceeds - L`.
    pub fn final_equity(&self) -> f64 {
        self.proceeds - self.liabilities
    }
}

/// Decides whether a simulated liquidation ended in bankruptcy.
pub trait BankruptcyCriterion: Strategy {
    fn is_bankrupt(&self, outcome: &PathOutcome) -> bool;
}

/// Bankrupt iff total proceeds fall short of the liabilities.
#[derive(Debug, Default, Clone, Copy)]
pub struct AtEnd;

impl Strategy for AtEnd {
    fn name(&self) -> &'static str {
        "at-end"
    }
    fn description(&self) -> &'static str {
        "bankrupt iff total liquidation proceeds < liabilities"
    }
}

impl BankruptcyCriterion for AtEnd {
    fn is_bankrupt(&self, outcome: &PathOutcome) -> bool {
        outcome.final_equity() < 0.0
    }
}

/// Bankrupt iff the marked equity dips below zero on any day.
#[derive(Debug, Default, Clone, Copy)]
pub struct AnywhereOnPath;

impl Strategy for AnywhereOnPath {
    fn name(&self) -> &'static str {
        "anywhere-on-path"
    }
    fn description(&self) -> &'static str {
        "bankrupt iff proceeds so far + holdings at the current price < liabilities on any day"
    }
}

impl BankruptcyCriterion for AnywhereOnPath {
    fn is_bankrupt(&self, outcome: &PathOutcome) -> bool {
        outcome.min_marked_equity < 0.0
    }
}

pub fn bankruptcy_criteria() -> &'static Registry<dyn BankruptcyCriterion> {
    static REGISTRY: OnceLock<Registry<dyn BankruptcyCriterion>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn BankruptcyCriterion>::new("bankruptcy criterion")
            .with(Arc::new(AtEnd))
            .with(Arc::new(AnywhereOnPath))
    })
}

#[derive(Clone)]
pub struct MonteCarloConfig {
    pub position: Position,
    /// Impact parameters. `sigma` also scales the daily noise unless
    /// `noise_sigma` overrides it.
    pub params: ImpactParams,
    pub schedule: LiquidationSchedule,
    pub n_trials: u64,
    pub master_seed: u64,
    pub noise: Arc<dyn NoiseModel>,
    pub criterion: Arc<dyn BankruptcyCriterion>,
    pub noise_sigma: Option<f64>,
}

impl fmt::Debug for MonteCarloConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonteCarloConfig")
            .field("position", &self.position)
            .field("params", &self.params)
            .field("schedule", &self.schedule)
            .field("n_trials", &self.n_trials)
            .field("master_seed", &self.master_seed)
            .field("noise", &self.noise.name())
            .field("criterion", &self.criterion.name())
            .field("noise_sigma", &self.noise_sigma)
            .finish()
    }
}

impl MonteCarloConfig {
    /// Gaussian noise at the asset's volatility, bankruptcy judged at the end.
    pub fn new(
        position: Position,
        params: ImpactParams,
        schedule: LiquidationSchedule,
        n_trials: u64,
        master_seed: u64,
    ) -> Self {
        MonteCarloConfig {
            position,
            params,
            schedule,
            n_trials,
            master_seed,
            noise: Arc::new(GaussianNoise),
            criterion: Arc::new(AtEnd),
            noise_sigma: None,
        }
    }

    pub fn with_noise(mut self, noise: Arc<dyn NoiseModel>) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_criterion(mut self, criterion: Arc<dyn BankruptcyCriterion>) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.position.validate()?;
        self.params.validate()?;
        if self.n_trials == 0 {
            return Err(CoreError::invalid("n_trials", "must be >= 1"));
        }
        let q = self.position.quantity;
        if (q - self.schedule.quantity()).abs() > 1e-12 * q.max(1.0) {
            return Err(CoreError::invalid(
                "schedule",
                format!(
                    "liquidates {} shares but the position holds {q}",
                    self.schedule.quantity()
                ),
            ));
        }
        if let Some(s) = self.noise_sigma {
            crate::error::ensure_non_negative("noise_sigma", s)?;
        }
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        self.position.p0 * self.noise_sigma.unwrap_or(self.params.sigma)
    }
}

/// Full record of one trial: `prices[t]` for `t = 0..=T` and the proceeds
/// of each day's sale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricePath {
    pub prices: Vec<f64>,
    pub daily_proceeds: Vec<f64>,
    pub outcome: PathOutcome,
}

fn trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Runs one trial, reporting `(day, price, proceeds of that day)` for
/// `day = 1..=T` to `on_day`.
fn run_trial<F>(config: &MonteCarloConfig, trial_index: u64, mut on_day: F) -> Result<PathOutcome>
where
    F: FnMut(u64, f64, f64),
{
    let pos = &config.position;
    let sched = &config.schedule;
    let p0 = pos.p0;
    let scale = config.noise_scale();
    let mut rng = trial_rng(config.master_seed, trial_index);

    let mut noise_sum = 0.0;
    let mut proceeds = 0.0;
    let mut min_equity = pos.quantity * p0 - pos.liabilities;
    let mut price = p0;
    let mut negative = 0;
    for day in 1..=sched.days() {
        // Deterministic part p0 (1 - I(s)) equals the telescoped sum of the
        // daily impact increments; the shocks accumulate on top.
        let sold = sched.sold_after(day);
        noise_sum += config.noise.shock(&mut rng);
        price = p0 * (1.0 - expected_impact(&config.params, sold)?) + scale * noise_sum;
        if price < 0.0 {
            negative += 1;
        }
        let sale = sched.delta_q() * price;
        proceeds += sale;
        let marked = proceeds + (pos.quantity - sold) * price - pos.liabilities;
        min_equity = min_equity.min(marked);
        on_day(day, price, sale);
    }
    Ok(PathOutcome {
        proceeds,
        liabilities: pos.liabilities,
        min_marked_equity: min_equity,
        final_price: price,
        negative_price_steps: negative,
    })
}

/// Simulates one liquidation path; deterministic in
/// `(config.master_seed, trial_index)`.
pub fn simulate_price_path(config: &MonteCarloConfig, trial_index: u64) -> Result<PricePath> {
    config.validate()?;
    let days = config.schedule.days() as usize;
    let mut prices = Vec::with_capacity(days + 1);
    let mut daily = Vec::with_capacity(days);
    prices.push(config.position.p0);
    let outcome = run_trial(config, trial_index, |_, p, sale| {
        prices.push(p);
        daily.push(sale);
    })?;
    Ok(PricePath {
        prices,
        daily_proceeds: daily,
        outcome,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub p_bankrupt: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub std_error: f64,
    pub n_trials: u64,
    pub bankrupt_trials: u64,
    /// Trials in which the price went negative at least once.
    pub negative_price_trials: u64,
    pub negative_price_steps: u64,
    pub total_steps: u64,
}

impl MonteCarloResult {
    fn from_counts(
        n_trials: u64,
        bankrupt: u64,
        neg_trials: u64,
        neg_steps: u64,
        steps: u64,
    ) -> Self {
        let p = bankrupt as f64 / n_trials as f64;
        MonteCarloResult {
            p_bankrupt: p,
            std_error: (p * (1.0 - p) / n_trials as f64).sqrt(),
            n_trials,
            bankrupt_trials: bankrupt,
            negative_price_trials: neg_trials,
            negative_price_steps: neg_steps,
            total_steps: steps,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    bankrupt: u64,
    neg_trials: u64,
    neg_steps: u64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            bankrupt: self.bankrupt + other.bankrupt,
            neg_trials: self.neg_trials + other.neg_trials,
            neg_steps: self.neg_steps + other.neg_steps,
        }
    }
}

/// Fraction of trials classified bankrupt by `config.criterion`.
///
/// Trials run in parallel; only integer counts are aggregated, so the
/// result does not depend on scheduling.
pub fn bankruptcy_probability(config: &MonteCarloConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let tally = (0..config.n_trials)
        .into_par_iter()
        .map(|trial| {
            let outcome = run_trial(config, trial, |_, _, _| {})?;
            Ok::<_, CoreError>(Tally {
                bankrupt: config.criterion.is_bankrupt(&outcome) as u64,
                neg_trials: (outcome.negative_price_steps > 0) as u64,
                neg_steps: outcome.negative_price_steps,
            })
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let steps = config.n_trials * config.schedule.days();
    let result = MonteCarloResult::from_counts(
        config.n_trials,
        tally.bankrupt,
        tally.neg_trials,
        tally.neg_steps,
        steps,
    );
    if tally.neg_steps as f64 > NEGATIVE_PRICE_WARN_FRACTION * steps as f64 {
        log::warn!(
            "{} of {} simulated steps had negative prices; noise is too large for the price-based model",
            tally.neg_steps,
            steps
        );
    }
    Ok(result)
}

/// Parameters of a bankruptcy-probability sweep over total impact.
///
/// For each `𝓘` the position size is chosen at fixed `V` and `σ` so that
/// `I(Q) = 𝓘`, and the horizon `T = Q / (η V)` so that the participation rate
/// stays at `η`. `σ` itself is set once per curve so that the horizon at the
/// critical impact is `days_at_critical`:
/// `σ = 𝓘_c / (Y sqrt(η T_c))`, giving `T(𝓘) = T_c (𝓘 / 𝓘_c)²`.
#[derive(Clone)]
pub struct TransitionSpec {
    pub lambda0: f64,
    pub eta: f64,
    pub cal_i_grid: Vec<f64>,
    pub n_trials: u64,
    pub master_seed: u64,
    pub y: f64,
    pub daily_volume: f64,
    pub p0: f64,
    pub days_at_critical: f64,
    pub noise: Arc<dyn NoiseModel>,
    pub criterion: Arc<dyn BankruptcyCriterion>,
}

impl fmt::Debug for TransitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransitionSpec")
            .field("lambda0", &self.lambda0)
            .field("eta", &self.eta)
            .field("grid_points", &self.cal_i_grid.len())
            .field("n_trials", &self.n_trials)
            .field("master_seed", &self.master_seed)
            .field("days_at_critical", &self.days_at_critical)
            .field("noise", &self.noise.name())
            .field("criterion", &self.criterion.name())
            .finish()
    }
}

/// Default horizon, in days, of the liquidation at the critical impact.
pub const DEFAULT_DAYS_AT_CRITICAL: f64 = 100.0;

impl TransitionSpec {
    pub fn new(
        lambda0: f64,
        eta: f64,
        cal_i_grid: Vec<f64>,
        n_trials: u64,
        master_seed: u64,
    ) -> Self {
        TransitionSpec {
            lambda0,
            eta,
            cal_i_grid,
            n_trials,
            master_seed,
            y: 1.0,
            daily_volume: 1e5,
            p0: 1.0,
            days_at_critical: DEFAULT_DAYS_AT_CRITICAL,
            noise: Arc::new(GaussianNoise),
            criterion: Arc::new(AtEnd),
        }
    }

    pub fn critical_impact(&self) -> f64 {
        1.5 / self.lambda0
    }

    /// Daily volatility shared by every point of the curve.
    pub fn sigma(&self) -> f64 {
        self.critical_impact() / (self.y * (self.eta * self.days_at_critical).sqrt())
    }

    fn validate(&self) -> Result<()> {
        if self.cal_i_grid.is_empty() {
            return Err(CoreError::invalid("calI_grid", "must not be empty"));
        }
        if !(self.lambda0 >= 1.0) || !self.lambda0.is_finite() {
            return Err(CoreError::invalid(
                "lambda0",
                format!("must be >= 1, got {}", self.lambda0),
            ));
        }
        ensure_positive("eta", self.eta)?;
        ensure_positive("Y", self.y)?;
        ensure_positive("V", self.daily_volume)?;
        ensure_positive("p0", self.p0)?;
        ensure_positive("days_at_critical", self.days_at_critical)?;
        if self.n_trials == 0 {
            return Err(CoreError::invalid("n_trials", "must be >= 1"));
        }
        for &c in &self.cal_i_grid {
            crate::error::ensure_non_negative("calI", c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    /// `𝓘 = 0`: there is no position to liquidate, so no bankruptcy.
    EmptyPosition,
    Infeasible {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionPoint {
    pub cal_i: f64,
    pub status: PointStatus,
    pub days: Option<u64>,
    /// `δq / V` after rounding the horizon to whole days.
    pub eta_effective: Option<f64>,
    pub with_impact: Option<MonteCarloResult>,
    pub without_impact: Option<MonteCarloResult>,
}

impl TransitionPoint {
    pub fn p_bankrupt(&self) -> Option<f64> {
        match self.status {
            PointStatus::Ok => self.with_impact.map(|r| r.p_bankrupt),
            PointStatus::EmptyPosition => Some(0.0),
            PointStatus::Infeasible { .. } => None,
        }
    }

    pub fn std_error(&self) -> Option<f64> {
        match self.status {
            PointStatus::Ok => self.with_impact.map(|r| r.std_error),
            PointStatus::EmptyPosition => Some(0.0),
            PointStatus::Infeasible { .. } => None,
        }
    }

    pub fn p_bankrupt_noimpact(&self) -> Option<f64> {
        match self.status {
            PointStatus::Ok => self.without_impact.map(|r| r.p_bankrupt),
            PointStatus::EmptyPosition => Some(0.0),
            PointStatus::Infeasible { .. } => None,
        }
    }

    /// Trials and bankruptcies behind the with-impact estimate.
    fn counts(&self) -> Option<(u64, u64)> {
        match self.status {
            PointStatus::Ok => self.with_impact.map(|r| (r.n_trials, r.bankrupt_trials)),
            _ => None,
        }
    }
}

/// Logistic model `p(𝓘) = 1 / (1 + exp(-(𝓘 - center) / scale))` fitted by
/// binomial maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticFit {
    pub center: f64,
    pub scale: f64,
    /// `𝓘(p = 0.9) - 𝓘(p = 0.1) = 2 ln 9 · scale`.
    pub width_10_90: f64,
    pub iterations: u32,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionCurve {
    pub lambda0: f64,
    pub eta: f64,
    pub sigma: f64,
    pub critical_impact: f64,
    pub points: Vec<TransitionPoint>,
}

fn mix_seed(master: u64, index: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bankruptcy probability as a function of total impact, with and without
/// impact. Infeasible grid points (horizon under one day) are marked and
/// skipped; the rest of the curve is still computed.
pub fn transition_curve(spec: &TransitionSpec) -> Result<TransitionCurve> {
    spec.validate()?;
    let sigma = spec.sigma();
    let points = spec
        .cal_i_grid
        .iter()
        .enumerate()
        .map(|(i, &cal_i)| transition_point(spec, sigma, i as u64, cal_i))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionCurve {
        lambda0: spec.lambda0,
        eta: spec.eta,
        sigma,
        critical_impact: spec.critical_impact(),
        points,
    })
}

fn transition_point(
    spec: &TransitionSpec,
    sigma: f64,
    index: u64,
    cal_i: f64,
) -> Result<TransitionPoint> {
    let empty = |status| TransitionPoint {
        cal_i,
        status,
        days: None,
        eta_effective: None,
        with_impact: None,
        without_impact: None,
    };
    if cal_i == 0.0 {
        return Ok(empty(PointStatus::EmptyPosition));
    }
    let ratio = cal_i / (spec.y * sigma);
    let quantity = spec.daily_volume * ratio * ratio;
    let horizon = quantity / (spec.eta * spec.daily_volume);
    if horizon < 1.0 {
        return Ok(empty(PointStatus::Infeasible {
            reason: format!("horizon T = {horizon:.3} days is under one day"),
        }));
    }
    let days = horizon.round() as u64;
    let schedule = LiquidationSchedule::over_days(quantity, days, spec.daily_volume)?;
    let position = Position::from_leverage(spec.lambda0, quantity, spec.p0)?;
    let params = ImpactParams::new(spec.y, sigma, spec.daily_volume)?;
    let seed = mix_seed(spec.master_seed, index);
    let config = MonteCarloConfig::new(position, params, schedule, spec.n_trials, seed)
        .with_noise(spec.noise.clone())
        .with_criterion(spec.criterion.clone());
    let with_impact = bankruptcy_probability(&config)?;
    let no_impact = MonteCarloConfig {
        params: ImpactParams { y: 0.0, ..params },
        noise_sigma: Some(sigma),
        ..config
    };
    let without_impact = bankruptcy_probability(&no_impact)?;
    Ok(TransitionPoint {
        cal_i,
        status: PointStatus::Ok,
        days: Some(days),
        eta_effective: Some(schedule.eta()),
        with_impact: Some(with_impact),
        without_impact: Some(without_impact),
    })
}

impl TransitionCurve {
    fn usable(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .filter_map(|p| p.p_bankrupt().map(|pb| (p.cal_i, pb)))
    }

    /// `𝓘` at which the empirical curve first rises through `level`,
    /// linearly interpolated between grid points.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.usable().collect();
        pts.windows(2).find_map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if y0 < level && y1 >= level {
                Some(x0 + (level - y0) * (x1 - x0) / (y1 - y0))
            } else {
                None
            }
        })
    }

    /// Empirical 10%-to-90% width; `None` if the curve never reaches both
    /// levels on the grid.
    pub fn empirical_width(&self) -> Option<f64> {
        Some(self.crossing(0.9)? - self.crossing(0.1)?)
    }

    /// Binomial maximum-likelihood logistic fit over the feasible points.
    pub fn fit_logistic(&self) -> Result<LogisticFit> {
        let data: Vec<(f64, f64, f64)> = self
            .points
            .iter()
            .filter_map(|p| p.counts().map(|(n, k)| (p.cal_i, n as f64, k as f64)))
            .collect();
        fit_logistic(&data)
    }

    /// Writes `calI,p_bankrupt,std_error,p_bankrupt_noimpact`; infeasible
    /// points carry the literal `infeasible`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["calI", "p_bankrupt", "std_error", "p_bankrupt_noimpact"])
            .map_err(csv_err)?;
        for p in &self.points {
            let cell =
                |v: Option<f64>| v.map_or_else(|| "infeasible".to_string(), |v| v.to_string());
            w.write_record([
                p.cal_i.to_string(),
                cell(p.p_bankrupt()),
                cell(p.std_error()),
                cell(p.p_bankrupt_noimpact()),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Newton-Raphson on the binomial log-likelihood of `logit p = a + b x`.
/// `data` holds `(x, trials, successes)`.
pub fn fit_logistic(data: &[(f64, f64, f64)]) -> Result<LogisticFit> {
    if data.len() < 2 {
        return Err(CoreError::Domain(
            "logistic fit needs at least two points".into(),
        ));
    }
    if data.iter().all(|&(_, _, k)| k == 0.0) || data.iter().all(|&(_, n, k)| k == n) {
        return Err(CoreError::Domain(
            "logistic fit needs both outcomes; the curve shows no transition".into(),
        ));
    }
    // Centre and scale x so the Hessian stays well conditioned.
    let n_pts = data.len() as f64;
    let mean = data.iter().map(|d| d.0).sum::<f64>() / n_pts;
    let spread = (data.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / n_pts).sqrt();
    if !(spread > 0.0) {
        return Err(CoreError::Domain(
            "logistic fit needs distinct x values".into(),
        ));
    }
    let z = |x: f64| (x - mean) / spread;
    let loglik = |a: f64, b: f64| -> f64 {
        data.iter()
            .map(|&(x, n, k)| {
                let eta = a + b * z(x);
                // log p = -log(1 + e^-eta), log(1-p) = -log(1 + e^eta)
                -k * softplus(-eta) - (n - k) * softplus(eta)
            })
            .sum()
    };

    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut ll = loglik(a, b);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 100 {
        iterations += 1;
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, n, k) in data {
            let zx = z(x);
            let p = sigmoid(a + b * zx);
            let r = k - n * p;
            let w = n * p * (1.0 - p);
            ga += r;
            gb += r * zx;
            haa += w;
            hab += w * zx;
            hbb += w * zx * zx;
        }
        let det = haa * hbb - hab * hab;
        if !(det > 0.0) {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        // Step halving keeps the likelihood monotone.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (na, nb) = (a + step * da, b + step * db);
            let nll = loglik(na, nb);
            if nll >= ll - 1e-12 * ll.abs() {
                a = na;
                b = nb;
                let gain = nll - ll;
                ll = nll;
                accepted = true;
                if gain.abs() < 1e-12 * ll.abs().max(1.0)
                    && (step * da).abs() < 1e-10
                    && (step * db).abs() < 1e-10
                {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted;
            break;
        }
    }
    if !(b > 0.0) {
        return Err(CoreError::Domain(format!(
            "logistic fit has non-increasing slope {b}; the curve shows no transition"
        )));
    }
    // Back to the original x scale: logit p = a + b (x - mean) / spread.
    let scale = spread / b;
    let center = mean - a * scale;
    Ok(LogisticFit {
        center,
        scale,
        width_10_90: 2.0 * 9f64.ln() * scale,
        iterations,
        converged,
    })
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp()
    } else {
        t.exp().ln_1p()
    }
}
