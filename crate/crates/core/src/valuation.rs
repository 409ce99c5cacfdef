//! Impact-adjusted valuation of a single-asset position.
//!
//! A position is valued at its expected proceeds under complete, uniform
//! liquidation rather than at the marginal (mark-to-market) price:
//!
//! ```text
//! V(Q) = ∫₀^Q p0 (1 - I(q)) dq = p0 Q (1 - 2/3 I(Q))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, CoreError, Result};
use crate::impact::{expected_impact, ImpactParams};

/// A leveraged holding in one asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// Shares (or notional units) held, `Q`.
    pub quantity: f64,
    /// Mark-to-market price `p0`.
    pub p0: f64,
    /// Liabilities `L`.
    pub liabilities: f64,
    /// Equity available before entering the position. Only used when the
    /// entry leg is simulated; defaults to `Q p0 - L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_equity: Option<f64>,
}

impl Position {
    pub fn new(quantity: f64, p0: f64, liabilities: f64) -> Result<Self> {
        let pos = Position {
            quantity,
            p0,
            liabilities,
            initial_equity: None,
        };
        pos.validate()?;
        Ok(pos)
    }

    /// A position of `quantity` shares at `p0` financed so that its
    /// mark-to-market leverage is `lambda0`.
    pub fn from_leverage(lambda0: f64, quantity: f64, p0: f64) -> Result<Self> {
        if lambda0.is_nan() || lambda0 < 1.0 {
            return Err(CoreError::invalid(
                "lambda0",
                format!("must be >= 1, got {lambda0}"),
            ));
        }
        Position::new(quantity, p0, quantity * p0 * (1.0 - 1.0 / lambda0))
    }

    pub fn with_initial_equity(mut self, equity: f64) -> Self {
        self.initial_equity = Some(equity);
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("Q", self.quantity)?;
        ensure_positive("p0", self.p0)?;
        ensure_non_negative("L", self.liabilities)?;
        Ok(())
    }

    pub fn mtm_value(&self) -> f64 {
        self.quantity * self.p0
    }

    /// `Q p0 - L`; may be of any sign.
    pub fn mtm_equity(&self) -> f64 {
        self.mtm_value() - self.liabilities
    }

    pub fn initial_equity(&self) -> f64 {
        self.initial_equity.unwrap_or_else(|| self.mtm_equity())
    }

    /// `Q p0 / (Q p0 - L)`, `+∞` when equity is not positive.
    pub fn mtm_leverage(&self) -> f64 {
        crate::leverage::mtm_leverage(self.quantity, self.p0, self.liabilities)
    }
}

/// `I(Q)` for the whole position.
pub fn total_impact(pos: &Position, params: &ImpactParams) -> Result<f64> {
    expected_impact(params, pos.quantity)
}

/// Expected proceeds of liquidating in `n_increments` equal blocks, each
/// executed at the impact accumulated after it.
pub fn liquidation_value_discrete(
    pos: &Position,
    params: &ImpactParams,
    n_increments: u64,
) -> Result<f64> {
    pos.validate()?;
    if n_increments == 0 {
        return Err(CoreError::invalid("n_increments", "must be >= 1"));
    }
    let n = n_increments as f64;
    let block = pos.quantity / n;
    // Neumaier summation of I(t Q / N): the terms grow smoothly, but N can
    // reach 10^7 in convergence checks.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in 1..=n_increments {
        let term = expected_impact(params, block * t as f64)?;
        let next = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - next) + term;
        } else {
            comp += (term - next) + sum;
        }
        sum = next;
    }
    let impact_sum = sum + comp;
    Ok(pos.p0 * (pos.quantity - block * impact_sum))
}

/// Continuous-limit liquidation value `p0 Q (1 - 2/3 I(Q))`.
///
/// Returned as-is even where the formula extrapolates (for `I(Q) > 1.5` it
/// is negative); callers attach validity warnings.
pub fn liquidation_value(pos: &Position, params: &ImpactParams) -> Result<f64> {
    pos.validate()?;
    let calibrated = total_impact(pos, params)?;
    Ok(liquidation_value_for_impact(pos, calibrated))
}

/// Liquidation value given the total impact `I(Q)` from any square-root
/// impact model.
pub fn liquidation_value_for_impact(pos: &Position, total_impact: f64) -> f64 {
    pos.p0 * pos.quantity * (1.0 - 2.0 / 3.0 * total_impact)
}

/// `p̃ = V / Q = p0 (1 - 2/3 I(Q))`.
pub fn average_valuation_price(pos: &Position, params: &ImpactParams) -> Result<f64> {
    pos.validate()?;
    if pos.quantity == 0.0 {
        return Err(CoreError::invalid(
            "Q",
            "average price of an empty position is undefined",
        ));
    }
    let calibrated = total_impact(pos, params)?;
    Ok(pos.p0 * (1.0 - 2.0 / 3.0 * calibrated))
}

/// Expected proceeds of the remaining `Q - sold` shares when they are sold
/// as a continuation of the same liquidation (no pause, so the impact
/// already accrued by the first `sold` shares is still in the price).
pub fn remaining_liquidation_value(
    pos: &Position,
    params: &ImpactParams,
    sold: f64,
) -> Result<f64> {
    pos.validate()?;
    check_sold(pos, sold)?;
    let q = pos.quantity;
    let k = params.y * params.sigma / params.volume.sqrt();
    Ok(pos.p0 * ((q - sold) - 2.0 / 3.0 * k * (q * q.sqrt() - sold * sold.sqrt())))
}

pub(crate) fn check_sold(pos: &Position, sold: f64) -> Result<()> {
    if sold.is_nan() || sold < 0.0 || sold > pos.quantity {
        return Err(CoreError::invalid(
            "sold",
            format!("must lie in [0, {}], got {sold}", pos.quantity),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Params with `I(Q) = target` for a position of `q` shares.
    fn params_for(target: f64, q: f64) -> ImpactParams {
        ImpactParams::new(1.0, target, q).unwrap()
    }

    /// Midpoint-rule quadrature of `p0 (1 - Y σ sqrt(u / V))` on `[a, b]`.
    fn quad(params: &ImpactParams, p0: f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let u = a + (i as f64 + 0.5) * h;
                p0 * (1.0 - params.y * params.sigma * (u / params.volume).sqrt())
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn no_impact_is_mark_to_market() {
        let pos = Position::new(1234.0, 56.0, 0.0).unwrap();
        let flat = ImpactParams::new(1.0, 0.0, 10.0).unwrap();
        assert_eq!(liquidation_value(&pos, &flat).unwrap(), pos.mtm_value());
        for n in [1, 7, 1000] {
            let v = liquidation_value_discrete(&pos, &flat, n).unwrap();
            assert!((v - pos.mtm_value()).abs() < 1e-9, "{n}: {v}");
        }
        let zero_y = ImpactParams::new(0.0, 0.02, 10.0).unwrap();
        assert_eq!(average_valuation_price(&pos, &zero_y).unwrap(), 56.0);
    }

    #[test]
    fn single_block_pays_full_impact() {
        let pos = Position::new(100.0, 20.0, 0.0).unwrap();
        let p = params_for(0.09, 100.0);
        let v = liquidation_value_discrete(&pos, &p, 1).unwrap();
        assert!((v - 100.0 * 20.0 * (1.0 - 0.09)).abs() < 1e-9);
        assert!(liquidation_value_discrete(&pos, &p, 0).is_err());
    }

    #[test]
    fn discrete_sum_approaches_continuous_value() {
        let pos = Position::new(1e4, 100.0, 0.0).unwrap();
        let p = params_for(0.09, 1e4);
        let discrete = liquidation_value_discrete(&pos, &p, 1_000_000).unwrap();
        assert!(
            (discrete - 940_000.0).abs() / 940_000.0 < 1e-4,
            "{discrete}"
        );
    }

    #[test]
    fn continuous_value_matches_fine_discrete_sum() {
        // Q / V = 10, σ = 0.02, p0 Q = 1e9.
        let pos = Position::new(10.0, 1e8, 0.0).unwrap();
        let p = ImpactParams::new(1.0, 0.02, 1.0).unwrap();
        let v = liquidation_value(&pos, &p).unwrap();
        assert!((v - 9.578e8).abs() < 1e5, "{v}");
        let oracle = liquidation_value_discrete(&pos, &p, 10_000_000).unwrap();
        assert!((v - oracle).abs() / v < 1e-7);
    }

    #[test]
    fn extrapolated_value_is_returned_negative() {
        let pos = Position::new(1.0, 10.0, 0.0).unwrap();
        let v = liquidation_value(&pos, &params_for(1.5, 1.0)).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
        let v = liquidation_value(&pos, &params_for(2.0, 1.0)).unwrap();
        assert!(v < 0.0);
    }

    #[test]
    fn average_price_examples() {
        let pos = Position::new(50.0, 100.0, 0.0).unwrap();
        let p = average_valuation_price(&pos, &params_for(0.06, 50.0)).unwrap();
        assert!((p - 96.0).abs() < 1e-12);
        let pos = Position::new(50.0, 50.0, 0.0).unwrap();
        let p = average_valuation_price(&pos, &params_for(0.15, 50.0)).unwrap();
        assert!((p - 45.0).abs() < 1e-12);
        let empty = Position::new(0.0, 50.0, 0.0).unwrap();
        assert!(average_valuation_price(&empty, &params_for(0.15, 50.0)).is_err());
    }

    #[test]
    fn remaining_value_endpoints_and_quadrature() {
        let pos = Position::new(100.0, 1.0, 0.0).unwrap();
        let p = ImpactParams::new(1.0, 0.1, 100.0).unwrap();
        let full = remaining_liquidation_value(&pos, &p, 0.0).unwrap();
        assert!((full - liquidation_value(&pos, &p).unwrap()).abs() < 1e-12);
        assert_eq!(remaining_liquidation_value(&pos, &p, 100.0).unwrap(), 0.0);

        let half = remaining_liquidation_value(&pos, &p, 50.0).unwrap();
        let oracle = quad(&p, 1.0, 50.0, 100.0, 1_000_000);
        assert!((half - oracle).abs() < 1e-8, "{half} vs {oracle}");

        assert!(remaining_liquidation_value(&pos, &p, -1.0).is_err());
        assert!(remaining_liquidation_value(&pos, &p, 100.5).is_err());
    }

    #[test]
    fn position_validation() {
        assert!(Position::new(-1.0, 1.0, 0.0).is_err());
        assert!(Position::new(1.0, 0.0, 0.0).is_err());
        assert!(Position::new(1.0, 1.0, -1.0).is_err());
        let pos = Position::from_leverage(9.0, 1.0, 1.0).unwrap();
        assert!((pos.mtm_leverage() - 9.0).abs() < 1e-12);
        assert!(Position::from_leverage(0.5, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn discrete_gap_shrinks_with_more_blocks(calibrated in 0.001f64..0.5) {
            let pos = Position::new(1.0, 1.0, 0.0).unwrap();
            let p = params_for(calibrated, 1.0);
            let cont = liquidation_value(&pos, &p).unwrap();
            let gaps: Vec<f64> = [10u64, 100, 1000]
                .iter()
                .map(|&n| (liquidation_value_discrete(&pos, &p, n).unwrap() - cont).abs())
                .collect();
            prop_assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        }

        #[test]
        fn value_is_subadditive_in_size(q in 1.0f64..1e6, sigma in 1e-4f64..0.1) {
            let p = ImpactParams::new(1.0, sigma, 1e5).unwrap();
            let one = liquidation_value(&Position::new(q, 10.0, 0.0).unwrap(), &p).unwrap();
            let two = liquidation_value(&Position::new(2.0 * q, 10.0, 0.0).unwrap(), &p).unwrap();
            prop_assert!(two < 2.0 * one);
        }
    }
}
