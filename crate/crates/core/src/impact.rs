//! Expected market impact under the square-root law.
//!
//! Two routes to the same quantity are provided: the volume-based formula
//! `I(q) = Y σ sqrt(q / V)` and the spread-based formula `I = Y b S sqrt(N)`
//! with `N = q / v`. When both parameter sets are available the volume-based
//! route is authoritative.
//!
//! Impact is expressed on prices (not log-prices); the validity checks flag
//! inputs where that approximation or the square-root regime itself is
//! questionable without ever blocking a computation.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, CoreError, Result};
use crate::montecarlo::LiquidationSchedule;
use crate::registry::{Registry, Strategy};
use crate::units::parse_fraction;

/// Default upper bound on total impact for the price-based approximation.
pub const DEFAULT_MAX_IMPACT: f64 = 0.20;
/// Default upper bound on daily participation `δq / V`.
pub const DEFAULT_MAX_PARTICIPATION: f64 = 0.20;
/// Band of spread-volatility coefficients observed across markets; values
/// outside it are accepted with a warning.
pub const SPREAD_VOL_COEFF_BAND: (f64, f64) = (0.6, 0.9);

/// Liquidity and impact coefficients of one asset.
///
/// Units: `sigma` is a daily fraction, `volume` is per day in the same units
/// as the position size, `spread` is a fraction of price, `quote_volume` is
/// in position units and `phi` is transactions per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactParams {
    #[serde(rename = "Y")]
    pub y: f64,
    pub sigma: f64,
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    #[serde(rename = "v", skip_serializing_if = "Option::is_none")]
    pub quote_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

impl ImpactParams {
    pub fn new(y: f64, sigma: f64, volume: f64) -> Result<Self> {
        let params = ImpactParams {
            y,
            sigma,
            volume,
            spread: None,
            quote_volume: None,
            b: None,
            phi: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_spread(mut self, spread: f64, quote_volume: f64, b: f64) -> Result<Self> {
        self.spread = Some(spread);
        self.quote_volume = Some(quote_volume);
        self.b = Some(b);
        self.validate()?;
        Ok(self)
    }

    pub fn with_phi(mut self, phi: f64) -> Result<Self> {
        self.phi = Some(phi);
        self.validate()?;
        Ok(self)
    }

    /// `Y` and `σ` may be zero (the no-impact limit); `V` must be positive.
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("Y", self.y)?;
        ensure_non_negative("sigma", self.sigma)?;
        ensure_positive("V", self.volume)?;
        if let Some(s) = self.spread {
            ensure_positive("S", s)?;
        }
        if let Some(v) = self.quote_volume {
            ensure_positive("v", v)?;
        }
        if let Some(b) = self.b {
            ensure_positive("b", b)?;
        }
        if let Some(phi) = self.phi {
            ensure_positive("phi", phi)?;
        }
        if !(self.y.is_finite() && self.sigma.is_finite() && self.volume.is_finite()) {
            return Err(CoreError::invalid(
                "params",
                "Y, sigma and V must be finite",
            ));
        }
        Ok(())
    }

    /// True when the spread-based formula has everything it needs.
    pub fn has_spread_inputs(&self) -> bool {
        self.spread.is_some() && self.quote_volume.is_some() && self.b.is_some()
    }

    /// True when `b` lies outside the usual 0.6..0.9 band.
    pub fn b_outside_band(&self) -> bool {
        self.b
            .map(|b| b < SPREAD_VOL_COEFF_BAND.0 || b > SPREAD_VOL_COEFF_BAND.1)
            .unwrap_or(false)
    }

    /// Parses a flat key-value config (TOML `key = value` lines or a JSON
    /// object). Values may be numbers or percentage strings such as `"2%"`.
    /// A missing `Y` defaults to 1.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let partial = PartialParams::from_config_str(text)?;
        partial.into_params()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat numeric struct always serializes")
    }
}

/// Every `ImpactParams` key, optional. Used for configs where an asset may
/// carry only one of the two parameter sets. Unknown keys are rejected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialParams {
    #[serde(rename = "Y", default, deserialize_with = "de_fraction")]
    pub y: Option<f64>,
    #[serde(default, deserialize_with = "de_fraction")]
    pub sigma: Option<f64>,
    #[serde(rename = "V", default, deserialize_with = "de_fraction")]
    pub volume: Option<f64>,
    #[serde(rename = "S", default, deserialize_with = "de_fraction")]
    pub spread: Option<f64>,
    #[serde(rename = "v", default, deserialize_with = "de_fraction")]
    pub quote_volume: Option<f64>,
    #[serde(default, deserialize_with = "de_fraction")]
    pub b: Option<f64>,
    #[serde(default, deserialize_with = "de_fraction")]
    pub phi: Option<f64>,
}

impl PartialParams {
    pub fn from_config_str(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let parsed: std::result::Result<PartialParams, String> = if trimmed.starts_with('{') {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        parsed.map_err(|reason| CoreError::Parse {
            location: "impact parameter config".into(),
            reason,
        })
    }

    pub fn into_params(self) -> Result<ImpactParams> {
        let sigma = self
            .sigma
            .ok_or_else(|| CoreError::invalid("sigma", "missing"))?;
        let volume = self
            .volume
            .ok_or_else(|| CoreError::invalid("V", "missing"))?;
        let params = ImpactParams {
            y: self.y.unwrap_or(1.0),
            sigma,
            volume,
            spread: self.spread,
            quote_volume: self.quote_volume,
            b: self.b,
            phi: self.phi,
        };
        params.validate()?;
        Ok(params)
    }
}

fn de_fraction<'de, D>(deserializer: D) -> std::result::Result<Option<f64>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
        Text(String),
    }
    match Option::<Raw>::deserialize(deserializer)? {
        None => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Int(v)) => Ok(Some(v as f64)),
        Some(Raw::Text(t)) => parse_fraction(&t)
            .map(Some)
            .map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeDirection {
    Buy,
    Sell,
}

impl TradeDirection {
    /// `ε`: +1 for buys, -1 for sells.
    pub fn epsilon(self) -> f64 {
        match self {
            TradeDirection::Buy => 1.0,
            TradeDirection::Sell => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Validity {
    Ok,
    WarnLargeImpact,
    WarnLargeParticipation,
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Validity::Ok => "OK",
            Validity::WarnLargeImpact => "WARN_LARGE_IMPACT",
            Validity::WarnLargeParticipation => "WARN_LARGE_PARTICIPATION",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityThresholds {
    pub max_impact: f64,
    pub max_participation: f64,
}

impl Default for ValidityThresholds {
    fn default() -> Self {
        ValidityThresholds {
            max_impact: DEFAULT_MAX_IMPACT,
            max_participation: DEFAULT_MAX_PARTICIPATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub impact: f64,
    pub participation: Option<f64>,
    /// Empty when every check passed.
    pub warnings: Vec<Validity>,
}

impl ValidityReport {
    /// The most severe flag; impact outranks participation.
    pub fn status(&self) -> Validity {
        self.warnings.first().copied().unwrap_or(Validity::Ok)
    }

    pub fn is_ok(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Expected impact of a trade, priced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactQuote {
    pub relative_impact: f64,
    pub pre_trade_price: f64,
    pub expected_final_price: f64,
    pub validity: Validity,
}

/// `Y σ sqrt(q / V)`.
pub fn expected_impact(params: &ImpactParams, q: f64) -> Result<f64> {
    ensure_non_negative("q", q)?;
    Ok(params.y * params.sigma * (q / params.volume).sqrt())
}

/// Spread-based impact `Y b S sqrt(N)` where `N = Q / v` is the number of
/// child orders of best-quote size.
pub fn impact_from_spread(y: f64, b: f64, spread: f64, n: f64) -> Result<f64> {
    ensure_positive("Y", y)?;
    ensure_positive("b", b)?;
    ensure_positive("S", spread)?;
    ensure_non_negative("N", n)?;
    Ok(y * b * spread * n.sqrt())
}

/// Volatility over horizon `T` days implied by the spread and trade rate,
/// `b S sqrt(φ T)`.
pub fn volatility_from_spread(b: f64, spread: f64, phi: f64, horizon_days: f64) -> Result<f64> {
    ensure_positive("b", b)?;
    ensure_positive("S", spread)?;
    ensure_positive("phi", phi)?;
    ensure_non_negative("T", horizon_days)?;
    Ok(b * spread * (phi * horizon_days).sqrt())
}

/// Checks total impact only (no schedule known).
pub fn check_impact(
    params: &ImpactParams,
    q: f64,
    thresholds: &ValidityThresholds,
) -> Result<ValidityReport> {
    let impact = expected_impact(params, q)?;
    let mut warnings = Vec::new();
    if impact > thresholds.max_impact {
        warnings.push(Validity::WarnLargeImpact);
    }
    Ok(ValidityReport {
        impact,
        participation: None,
        warnings,
    })
}

/// Flags total impact above `max_impact` and daily participation `δq / V`
/// above `max_participation`.
pub fn check_validity(
    params: &ImpactParams,
    q: f64,
    schedule: &LiquidationSchedule,
    thresholds: &ValidityThresholds,
) -> Result<ValidityReport> {
    let mut report = check_impact(params, q, thresholds)?;
    let participation = schedule.delta_q() / params.volume;
    report.participation = Some(participation);
    if participation > thresholds.max_participation {
        report.warnings.push(Validity::WarnLargeParticipation);
    }
    Ok(report)
}

/// Prices the expected impact of a trade of `q` shares from `p0`.
pub fn quote(
    params: &ImpactParams,
    q: f64,
    direction: TradeDirection,
    p0: f64,
    thresholds: &ValidityThresholds,
) -> Result<ImpactQuote> {
    ensure_positive("p0", p0)?;
    let report = check_impact(params, q, thresholds)?;
    Ok(ImpactQuote {
        relative_impact: report.impact,
        pre_trade_price: p0,
        expected_final_price: p0 * (1.0 + direction.epsilon() * report.impact),
        validity: report.status(),
    })
}

/// A way of estimating total impact `I(q)` from an asset's parameters.
///
/// Every model here is a pure square-root law in `q`, so the valuation and
/// leverage formulas only need the total impact `I(Q)`.
pub trait ImpactModel: Strategy {
    fn impact(&self, params: &ImpactParams, q: f64) -> Result<f64>;
}

/// `Y σ sqrt(q / V)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct VolumeImpact;

impl Strategy for VolumeImpact {
    fn name(&self) -> &'static str {
        "volume"
    }
    fn description(&self) -> &'static str {
        "square-root law from daily volatility and volume: Y*sigma*sqrt(q/V)"
    }
}

impl ImpactModel for VolumeImpact {
    fn impact(&self, params: &ImpactParams, q: f64) -> Result<f64> {
        expected_impact(params, q)
    }
}

/// `Y b S sqrt(q / v)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct SpreadImpact;

impl Strategy for SpreadImpact {
    fn name(&self) -> &'static str {
        "spread"
    }
    fn description(&self) -> &'static str {
        "square-root law from bid-ask spread and best-quote volume: Y*b*S*sqrt(q/v)"
    }
}

impl ImpactModel for SpreadImpact {
    fn impact(&self, params: &ImpactParams, q: f64) -> Result<f64> {
        ensure_non_negative("q", q)?;
        let (Some(s), Some(v), Some(b)) = (params.spread, params.quote_volume, params.b) else {
            return Err(CoreError::invalid(
                "params",
                "spread model needs S, v and b",
            ));
        };
        impact_from_spread(params.y, b, s, q / v)
    }
}

/// Built-in impact models: `volume` (default) and `spread`.
pub fn impact_models() -> &'static Registry<dyn ImpactModel> {
    static REGISTRY: OnceLock<Registry<dyn ImpactModel>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn ImpactModel>::new("impact model")
            .with(Arc::new(VolumeImpact))
            .with(Arc::new(SpreadImpact))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(y: f64, sigma: f64, v: f64) -> ImpactParams {
        ImpactParams::new(y, sigma, v).unwrap()
    }

    #[test]
    fn msft_row_impact() {
        let p = params(1.0, 0.02, 1.0);
        let i = expected_impact(&p, 10.0).unwrap();
        assert!((i - 0.0632).abs() < 5e-5, "{i}");
    }

    #[test]
    fn zero_trade_has_zero_impact() {
        let p = params(0.7, 0.03, 123.0);
        assert_eq!(expected_impact(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn direct_evaluation() {
        // 0.5 * 0.02 * sqrt(0.25); sqrt(0.25) is exact in binary.
        let p = params(0.5, 0.02, 1000.0);
        assert!((expected_impact(&p, 250.0).unwrap() - 0.005).abs() < 1e-17);
    }

    #[test]
    fn negative_size_is_rejected() {
        let p = params(1.0, 0.02, 1.0);
        assert!(matches!(
            expected_impact(&p, -1.0),
            Err(CoreError::InvalidArgument { name: "q", .. })
        ));
    }

    #[test]
    fn spread_formula_examples() {
        // BUND: N = 140e9 / 40e6 = 3500.
        let i = impact_from_spread(1.0, 0.79, 1.5e-4, 3500.0).unwrap();
        assert!((i - 0.0070).abs() < 5e-5, "{i}");
        assert_eq!(impact_from_spread(1.0, 0.8, 1e-3, 0.0).unwrap(), 0.0);
        assert!((impact_from_spread(1.0, 0.6, 0.01, 100.0).unwrap() - 0.06).abs() < 1e-15);
        assert!(impact_from_spread(0.0, 0.6, 0.01, 100.0).is_err());
        assert!(impact_from_spread(1.0, 0.6, -0.01, 100.0).is_err());
    }

    #[test]
    fn volatility_from_spread_examples() {
        assert!((volatility_from_spread(0.75, 2e-4, 1e4, 1.0).unwrap() - 0.015).abs() < 1e-15);
        assert_eq!(volatility_from_spread(0.75, 2e-4, 1e4, 0.0).unwrap(), 0.0);
        assert!((volatility_from_spread(1.0, 0.01, 1.0, 4.0).unwrap() - 0.02).abs() < 1e-15);
        assert!(volatility_from_spread(1.0, 0.01, 0.0, 4.0).is_err());
    }

    #[test]
    fn validity_flags() {
        let th = ValidityThresholds::default();
        // I(Q) = 0.06 with participation 0.1.
        let p = params(1.0, 0.06, 100.0);
        let sched = LiquidationSchedule::new(100.0, 10.0, 100.0).unwrap();
        let r = check_validity(&p, 100.0, &sched, &th).unwrap();
        assert_eq!(r.status(), Validity::Ok);

        let big = params(1.0, 0.25, 100.0);
        let r = check_validity(&big, 100.0, &sched, &th).unwrap();
        assert_eq!(r.warnings, vec![Validity::WarnLargeImpact]);

        let fast = LiquidationSchedule::new(100.0, 50.0, 100.0).unwrap();
        let r = check_validity(&p, 100.0, &fast, &th).unwrap();
        assert_eq!(r.warnings, vec![Validity::WarnLargeParticipation]);
        assert_eq!(r.participation, Some(0.5));
    }

    #[test]
    fn quote_direction() {
        let p = params(1.0, 0.02, 1.0);
        let th = ValidityThresholds::default();
        let sell = quote(&p, 1.0, TradeDirection::Sell, 100.0, &th).unwrap();
        let buy = quote(&p, 1.0, TradeDirection::Buy, 100.0, &th).unwrap();
        assert!((sell.expected_final_price - 98.0).abs() < 1e-12);
        assert!((buy.expected_final_price - 102.0).abs() < 1e-12);
        assert_eq!(buy.validity, Validity::Ok);
    }

    #[test]
    fn params_validation() {
        assert!(ImpactParams::new(1.0, 0.02, 0.0).is_err());
        assert!(ImpactParams::new(-1.0, 0.02, 1.0).is_err());
        assert!(ImpactParams::new(1.0, f64::NAN, 1.0).is_err());
        assert!(ImpactParams::new(1.0, 0.0, 1.0).is_ok());
        let p = params(1.0, 0.02, 1.0);
        assert!(p.with_spread(0.0, 1.0, 0.7).is_err());
        assert!(p.with_spread(1e-4, 1.0, 0.95).unwrap().b_outside_band());
    }

    #[test]
    fn config_round_trip_toml_and_json() {
        let p = params(0.8, 0.025, 2e6)
            .with_spread(1.4e-3, 2500.0, 0.75)
            .unwrap()
            .with_phi(800.0)
            .unwrap();
        let text = p.to_toml_string();
        assert!(text.contains("V = 2000000.0"), "{text}");
        assert!(text.contains("v = 2500.0"), "{text}");
        assert_eq!(ImpactParams::from_config_str(&text).unwrap(), p);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(ImpactParams::from_config_str(&json).unwrap(), p);
    }

    #[test]
    fn config_accepts_percentages_and_rejects_unknown_keys() {
        let p = ImpactParams::from_config_str("sigma = \"2%\"\nV = 1000\n").unwrap();
        assert!((p.sigma - 0.02).abs() < 1e-15);
        assert_eq!(p.y, 1.0);
        assert!(ImpactParams::from_config_str("sigma = 0.02\nV = 1\nvol = 3\n").is_err());
        assert!(ImpactParams::from_config_str("sigma = 0.02\n").is_err());
    }

    #[test]
    fn registry_has_both_models() {
        let reg = impact_models();
        assert_eq!(reg.names(), vec!["volume", "spread"]);
        let p = params(1.0, 0.02, 1.0).with_spread(1e-3, 1.0, 0.7).unwrap();
        let spread = reg.get("spread").unwrap().impact(&p, 100.0).unwrap();
        assert!((spread - 0.7e-3 * 10.0).abs() < 1e-15);
        assert!(reg
            .get("spread")
            .unwrap()
            .impact(&params(1.0, 0.02, 1.0), 1.0)
            .is_err());
    }

    proptest! {
        #[test]
        fn pure_square_root_scaling(q1 in 1e-6f64..1e6, q2 in 1e-6f64..1e6,
                                    sigma in 1e-4f64..0.2, v in 1e-3f64..1e9) {
            let p = params(1.0, sigma, v);
            let r1 = expected_impact(&p, q1).unwrap() / q1.sqrt();
            let r2 = expected_impact(&p, q2).unwrap() / q2.sqrt();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.abs());
        }

        #[test]
        fn scale_invariance(q in 0.0f64..1e6, v in 1e-3f64..1e9, k in 1e-3f64..1e3) {
            let a = expected_impact(&params(1.0, 0.02, v), q).unwrap();
            let b = expected_impact(&params(1.0, 0.02, k * v), k * q).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn spread_and_volume_routes_agree(y in 0.1f64..2.0, b in 0.5f64..1.0,
                                          s in 1e-5f64..0.1, phi in 1.0f64..1e5,
                                          t in 0.1f64..100.0, v in 1.0f64..1e6,
                                          q in 0.0f64..1e8) {
            // With V_T = v φ T and N = Q / v, the horizon drops out.
            let sigma_t = volatility_from_spread(b, s, phi, t).unwrap();
            let p = params(y, sigma_t, v * phi * t);
            let via_volume = expected_impact(&p, q).unwrap();
            let via_spread = impact_from_spread(y, b, s, q / v).unwrap();
            prop_assert!((via_volume - via_spread).abs() <= 1e-12 * via_spread.max(1e-300));
        }
    }
}
