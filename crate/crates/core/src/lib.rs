//! Valuation of leveraged positions under the square-root impact law.
//!
//! Positions are valued at their expected liquidation price rather than the
//! last traded price. From that follow impact-adjusted leverage, the critical
//! leverage above which deleveraging cannot succeed, and Monte Carlo
//! bankruptcy probabilities.

pub mod error;
pub mod estimation;
pub mod impact;
pub mod leverage;
pub mod montecarlo;
pub mod registry;
pub mod report;
pub mod roots;
pub mod units;
pub mod valuation;

pub use error::{CoreError, Result};
pub use estimation::{estimate_params, load_series, EstimationPolicy, MarketSeries};
pub use impact::{expected_impact, ImpactParams};
pub use leverage::{bankruptcy_point, critical_impact, criticality, crossover_point, Regime};
pub use montecarlo::{
    bankruptcy_probability, LiquidationSchedule, MonteCarloConfig, MonteCarloResult,
};
pub use registry::{Registry, Strategy};
pub use valuation::Position;
