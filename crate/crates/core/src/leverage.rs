//! Leverage along entry and exit paths, and the critical-leverage transition.
//!
//! Selling a leveraged position under a concave impact law first *raises*
//! mark-to-market leverage. With `x` the fraction sold and `𝓘 = I(Q)`:
//!
//! ```text
//! λ(x) = λ0 (1 - x)(1 - 𝓘 √x) / (1 - λ0 𝓘 √x (1 - x/3))
//! ```
//!
//! The denominator vanishes before `x = 1` iff `λ0 𝓘 > 3/2`: beyond that
//! critical point the position cannot be unwound without bankruptcy.
//!
//! Divergent leverage is data, not an error: it is carried as `+∞`
//! ([`DIVERGENT`]) and written as `inf` in CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, CoreError, Result};
use crate::impact::{expected_impact, ImpactParams};
use crate::roots::bisect;
use crate::valuation::{check_sold, remaining_liquidation_value, total_impact, Position};

/// Sentinel for leverage whose equity denominator is zero or negative.
pub const DIVERGENT: f64 = f64::INFINITY;

/// `λ0 𝓘` at the critical point.
pub const CRITICAL_PRODUCT: f64 = 1.5;

/// Absolute tolerance on `λ0 𝓘 - 3/2` within which a pair is classified as
/// exactly critical.
pub const REGIME_TOLERANCE: f64 = 1e-12;

/// Relative disagreement above which the printed closed form for `x*` is
/// flagged against the root of the trajectory equation.
pub const CLOSED_FORM_MISMATCH: f64 = 1e-6;

/// Default number of points on a uniform trajectory grid.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// One sample of a leverage path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Fraction of the position transacted so far, in `[0, 1]`.
    pub x: f64,
    pub q_held: f64,
    pub marginal_price: f64,
    /// Cash raised (exit) or spent (entry) so far.
    pub cash: f64,
    pub lambda_noimpact: f64,
    pub lambda_mtm: f64,
    pub lambda_adj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "SUBCRITICAL",
            Regime::Critical => "CRITICAL",
            Regime::Supercritical => "SUPERCRITICAL",
        })
    }
}

/// Classifies `(λ0, 𝓘)` by the sign of `λ0 𝓘 - 3/2`.
pub fn regime(lambda0: f64, cal_i: f64) -> Regime {
    let gap = lambda0 * cal_i - CRITICAL_PRODUCT;
    if gap.abs() <= REGIME_TOLERANCE {
        Regime::Critical
    } else if gap < 0.0 {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    }
}

/// Crossover point `x*` and the cross-checks computed alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// Smallest `x` in `(0, 1)` where `λ(x)` returns to `λ0`, from bisection
    /// on the trajectory equation.
    pub x_star: f64,
    /// `|λ(x*) - λ0| / λ0`.
    pub residual: f64,
    /// The commonly printed closed form, evaluated literally. `None` when it is
    /// not a real number for these inputs.
    pub printed_closed_form: Option<f64>,
    /// `|printed - x*| / x*`, when the printed value exists.
    pub printed_disagreement: Option<f64>,
    /// True when the printed form is missing or disagrees by more than
    /// [`CLOSED_FORM_MISMATCH`].
    pub printed_mismatch: bool,
    /// `x*` from the quadratic in `√x` that the trajectory equation reduces
    /// to; an independent algebraic route.
    pub quadratic_root: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    /// Total impact `𝓘 = I(Q)`.
    pub cal_i: f64,
    pub lambda0: f64,
    pub regime: Regime,
    /// Present iff subcritical.
    pub x_star: Option<f64>,
    /// Present iff supercritical (`< 1`) or critical (`= 1`).
    pub x_c: Option<f64>,
    /// Critical impact `3 / (2 λ0)`.
    pub i_c: f64,
    /// Critical leverage `3 / (2 𝓘)`; absent when `𝓘 = 0`.
    pub lambda_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover: Option<Crossover>,
}

/// Mark-to-market leverage `Q p / (Q p - L)`; [`DIVERGENT`] when the equity
/// is zero or negative.
pub fn mtm_leverage(quantity: f64, price: f64, liabilities: f64) -> f64 {
    ratio_or_divergent(quantity * price, quantity * price - liabilities)
}

fn ratio_or_divergent(asset: f64, equity: f64) -> f64 {
    if equity > 0.0 {
        asset / equity
    } else {
        DIVERGENT
    }
}

/// Expected cash raised after selling `q_sold` shares:
/// `p0 q (1 - 2/3 𝓘 sqrt(q / Q))`.
pub fn cash_raised(pos: &Position, params: &ImpactParams, q_sold: f64) -> Result<f64> {
    pos.validate()?;
    check_sold(pos, q_sold)?;
    if q_sold == 0.0 {
        return Ok(0.0);
    }
    let cal_i = total_impact(pos, params)?;
    Ok(pos.p0 * q_sold * (1.0 - 2.0 / 3.0 * cal_i * (q_sold / pos.quantity).sqrt()))
}

/// Mark-to-market leverage after selling a fraction `x`, in closed form.
pub fn leverage_at(lambda0: f64, cal_i: f64, x: f64) -> f64 {
    let root_x = x.sqrt();
    let denominator = 1.0 - lambda0 * cal_i * root_x * (1.0 - x / 3.0);
    if denominator <= 0.0 {
        return DIVERGENT;
    }
    lambda0 * (1.0 - x) * (1.0 - cal_i * root_x) / denominator
}

/// First-order behaviour near `x = 0`: `λ0 (1 + (λ0 - 1) 𝓘 √x)`.
pub fn small_x_expansion(lambda0: f64, cal_i: f64, x: f64) -> f64 {
    lambda0 * (1.0 + (lambda0 - 1.0) * cal_i * x.sqrt())
}

fn check_lambda0(lambda0: f64) -> Result<()> {
    if lambda0.is_nan() || lambda0 < 1.0 || lambda0.is_infinite() {
        return Err(CoreError::invalid(
            "lambda0",
            format!("must be a finite leverage >= 1, got {lambda0}"),
        ));
    }
    Ok(())
}

/// Unit position (`Q = 1`, `p0 = 1`) with leverage `λ0` and impact
/// parameters giving `I(Q) = 𝓘`.
pub fn normalized_position(lambda0: f64, cal_i: f64) -> Result<(Position, ImpactParams)> {
    check_lambda0(lambda0)?;
    ensure_non_negative("calI", cal_i)?;
    let pos = Position::from_leverage(lambda0, 1.0, 1.0)?;
    let params = ImpactParams::new(1.0, cal_i, 1.0)?;
    Ok((pos, params))
}

/// Deleveraging path of a unit position with leverage `λ0` and total
/// impact `𝓘`, sampled at the fractions in `grid`.
pub fn deleverage_trajectory(
    lambda0: f64,
    cal_i: f64,
    grid: &[f64],
) -> Result<Vec<TrajectoryPoint>> {
    let (pos, params) = normalized_position(lambda0, cal_i)?;
    exit_path(&pos, &params, grid, lambda0)
}

/// Exit path of `pos` at the sold fractions in `grid`.
///
/// `lambda_mtm` follows the closed-form trajectory, `lambda_noimpact` is
/// `λ0 (1 - x)` and `lambda_adj` is the impact-adjusted leverage.
pub fn exit_trajectory(
    pos: &Position,
    params: &ImpactParams,
    grid: &[f64],
) -> Result<Vec<TrajectoryPoint>> {
    pos.validate()?;
    let lambda0 = pos.mtm_leverage();
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return Err(CoreError::invalid("L", "position has no positive equity"));
    }
    exit_path(pos, params, grid, lambda0)
}

fn exit_path(
    pos: &Position,
    params: &ImpactParams,
    grid: &[f64],
    lambda0: f64,
) -> Result<Vec<TrajectoryPoint>> {
    check_grid(grid)?;
    let cal_i = total_impact(pos, params)?;
    grid.par_iter()
        .map(|&x| {
            let sold = (x * pos.quantity).min(pos.quantity);
            Ok(TrajectoryPoint {
                x,
                q_held: pos.quantity - sold,
                marginal_price: pos.p0 * (1.0 - cal_i * x.sqrt()),
                cash: cash_raised(pos, params, sold)?,
                lambda_noimpact: lambda0 * (1.0 - x),
                lambda_mtm: leverage_at(lambda0, cal_i, x),
                lambda_adj: impact_adjusted_leverage_exit(pos, params, sold)?,
            })
        })
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if let Some(bad) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(CoreError::invalid(
            "grid",
            format!("fractions must lie in [0, 1], got {bad}"),
        ));
    }
    Ok(())
}

/// `n` equally spaced fractions from 0 to 1 inclusive.
pub fn uniform_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(CoreError::invalid(
            "grid_size",
            format!("must be >= 2, got {n}"),
        ));
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(|i| i as f64 / last).collect())
}

/// Fraction `x*` at which leverage first drops back to `λ0` while selling.
///
/// Only defined below the critical point. For `λ0 = 1` or `𝓘 = 0` the
/// leverage never rises and `x* = 0`.
pub fn crossover_point(lambda0: f64, cal_i: f64) -> Result<Crossover> {
    check_lambda0(lambda0)?;
    ensure_non_negative("calI", cal_i)?;
    if regime(lambda0, cal_i) != Regime::Subcritical {
        return Err(CoreError::Domain(format!(
            "crossover point requires lambda0 * calI < 3/2, got {}",
            lambda0 * cal_i
        )));
    }
    let quadratic_root = crossover_quadratic(lambda0, cal_i);
    if lambda0 == 1.0 || cal_i == 0.0 {
        return Ok(Crossover {
            x_star: 0.0,
            residual: 0.0,
            printed_closed_form: printed_crossover(lambda0, cal_i),
            printed_disagreement: None,
            printed_mismatch: false,
            quadratic_root,
        });
    }

    // In u = √x, λ(u²) - λ0 is positive on (0, u*) and negative on (u*, 1].
    let excess = |u: f64| leverage_at(lambda0, cal_i, u * u) - lambda0;
    let root = bisect(excess, 0.0, 1.0, 1.0, 0.0)?;
    let x_star = root.x * root.x;
    let residual = (leverage_at(lambda0, cal_i, x_star) - lambda0).abs() / lambda0;

    let printed = printed_crossover(lambda0, cal_i);
    let printed_disagreement = printed.map(|p| (p - x_star).abs() / x_star);
    let printed_mismatch = printed_disagreement
        .map(|d| d > CLOSED_FORM_MISMATCH)
        .unwrap_or(true);
    if printed_mismatch {
        log::debug!(
            "closed-form crossover {printed:?} disagrees with root {x_star} (lambda0={lambda0}, calI={cal_i})"
        );
    }
    Ok(Crossover {
        x_star,
        residual,
        printed_closed_form: printed,
        printed_disagreement,
        printed_mismatch,
        quadratic_root,
    })
}

/// The closed form for `x*` as commonly printed:
/// `sqrt((1 - sqrt(1 - 4/3 (λ0-1)(3-λ0) 𝓘²)) / ((2 - λ0/3) 𝓘))`.
pub fn printed_crossover(lambda0: f64, cal_i: f64) -> Option<f64> {
    let disc = 1.0 - 4.0 / 3.0 * (lambda0 - 1.0) * (3.0 - lambda0) * cal_i * cal_i;
    let inner = (1.0 - disc.sqrt()) / ((2.0 - lambda0 / 3.0) * cal_i);
    let value = inner.sqrt();
    value.is_finite().then_some(value)
}

/// Setting `λ(x) = λ0` and dividing by `√x` leaves
/// `𝓘 (1 - λ0/3) u² - u + 𝓘 (λ0 - 1) = 0` with `u = √x`; this returns the
/// square of its small root.
fn crossover_quadratic(lambda0: f64, cal_i: f64) -> f64 {
    let a = cal_i * (1.0 - lambda0 / 3.0);
    let c = cal_i * (lambda0 - 1.0);
    // 2c / (1 + sqrt(1 - 4ac)) avoids cancellation and handles a = 0.
    let u = 2.0 * c / (1.0 + (1.0 - 4.0 * a * c).sqrt());
    u * u
}

/// Fraction `x_c` at which leverage diverges during liquidation, if it is
/// reached before the position is fully sold.
///
/// Solves `λ0 𝓘 u (1 - u²/3) = 1` for `u = √x` in `(0, 1]`. Returns exactly
/// 1 when the pair is critical within [`REGIME_TOLERANCE`].
pub fn bankruptcy_point(lambda0: f64, cal_i: f64) -> Option<f64> {
    if !(lambda0 > 1.0 && cal_i > 0.0) || !lambda0.is_finite() || !cal_i.is_finite() {
        return None;
    }
    match regime(lambda0, cal_i) {
        Regime::Subcritical => None,
        Regime::Critical => Some(1.0),
        Regime::Supercritical => {
            let k = lambda0 * cal_i;
            let f = |u: f64| k * u * (1.0 - u * u / 3.0) - 1.0;
            let root = bisect(f, 0.0, 1.0, -1.0, 1e-13).ok()?;
            Some(root.x * root.x)
        }
    }
}

/// Critical total impact `3 / (2 λ0)` for a given starting leverage.
pub fn critical_impact(lambda0: f64) -> Result<f64> {
    ensure_positive("lambda0", lambda0)?;
    Ok(CRITICAL_PRODUCT / lambda0)
}

/// Critical leverage for a given total impact, `3 / (2 𝓘)`.
pub fn critical_leverage_for_impact(cal_i: f64) -> Result<f64> {
    ensure_positive("calI", cal_i)?;
    Ok(CRITICAL_PRODUCT / cal_i)
}

/// Critical leverage of a position of `quantity` shares from volatility and
/// volume: `3 / (2 Y σ) sqrt(V / Q)`.
pub fn critical_leverage(params: &ImpactParams, quantity: f64) -> Result<f64> {
    ensure_positive("Y", params.y)?;
    ensure_positive("sigma", params.sigma)?;
    ensure_positive("Q", quantity)?;
    Ok(CRITICAL_PRODUCT / (params.y * params.sigma) * (params.volume / quantity).sqrt())
}

/// Critical leverage from the spread route: `3 / (2 Y b S sqrt(N))`.
pub fn critical_leverage_from_spread(y: f64, b: f64, spread: f64, n: f64) -> Result<f64> {
    ensure_positive("N", n)?;
    let impact = crate::impact::impact_from_spread(y, b, spread, n)?;
    critical_leverage_for_impact(impact)
}

/// Full criticality analysis of `(λ0, 𝓘)`.
pub fn criticality(lambda0: f64, cal_i: f64) -> Result<CriticalityReport> {
    check_lambda0(lambda0)?;
    ensure_non_negative("calI", cal_i)?;
    let regime = regime(lambda0, cal_i);
    let crossover = match regime {
        Regime::Subcritical => Some(crossover_point(lambda0, cal_i)?),
        _ => None,
    };
    Ok(CriticalityReport {
        cal_i,
        lambda0,
        regime,
        x_star: crossover.map(|c| c.x_star),
        x_c: bankruptcy_point(lambda0, cal_i),
        i_c: critical_impact(lambda0)?,
        lambda_c: (cal_i > 0.0).then(|| CRITICAL_PRODUCT / cal_i),
        crossover,
    })
}

/// Impact-adjusted leverage while exiting, after `sold` shares.
///
/// The remaining shares are valued as the continuation of a complete
/// liquidation: `λ̃ = R / (R - L + C)` with `R` the remaining liquidation
/// value and `C` the cash raised. `R + C` equals the full liquidation
/// value throughout, so the denominator is constant along the exit.
pub fn impact_adjusted_leverage_exit(
    pos: &Position,
    params: &ImpactParams,
    sold: f64,
) -> Result<f64> {
    let remaining = remaining_liquidation_value(pos, params, sold)?;
    let cash = cash_raised(pos, params, sold)?;
    let mut equity = remaining - pos.liabilities + cash;
    // Exactly critical positions have zero equity; don't let rounding
    // decide the sign.
    if equity.abs() <= REGIME_TOLERANCE * pos.mtm_value() {
        equity = 0.0;
    }
    Ok(ratio_or_divergent(remaining, equity))
}

/// Entry and exit legs of a round trip through `pos`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrip {
    pub entry: Vec<TrajectoryPoint>,
    pub exit: Vec<TrajectoryPoint>,
}

/// Leverage while steadily building `pos` from nothing, then unwinding it.
///
/// Entry financing: the manager starts with cash `E0` (the position's
/// initial equity), spends it first and borrows the rest, so at every point
/// `cash - L(q) = E0 - spent(q)`. Leverage is held-asset value over equity,
/// with equity `asset + E0 - spent`:
///
/// * `lambda_noimpact`: price stays at `p0`, giving `q p0 / E0`.
/// * `lambda_mtm`: asset marked at the impacted price `p0 (1 + I(q))`.
/// * `lambda_adj`: asset valued at its own liquidation price
///   `p0 (1 - 2/3 I(q))`, referenced to `p0` rather than the inflated mark.
///
/// The exit leg is [`exit_trajectory`] of `pos` itself.
pub fn entry_exit_trajectories(
    pos: &Position,
    params: &ImpactParams,
    grid_size: usize,
) -> Result<RoundTrip> {
    pos.validate()?;
    let equity = pos.initial_equity();
    if !(equity > 0.0) {
        return Err(CoreError::invalid(
            "E0",
            format!("initial equity must be > 0, got {equity}"),
        ));
    }
    let grid = uniform_grid(grid_size)?;
    let entry = grid
        .par_iter()
        .map(|&x| entry_point(pos, params, equity, x))
        .collect::<Result<Vec<_>>>()?;
    let exit = exit_trajectory(pos, params, &grid)?;
    Ok(RoundTrip { entry, exit })
}

fn entry_point(
    pos: &Position,
    params: &ImpactParams,
    equity: f64,
    x: f64,
) -> Result<TrajectoryPoint> {
    let q = (x * pos.quantity).min(pos.quantity);
    let impact = expected_impact(params, q)?;
    let marginal_price = pos.p0 * (1.0 + impact);
    let spent = pos.p0 * q * (1.0 + 2.0 / 3.0 * impact);
    let net_cash = equity - spent;

    let noimpact_asset = q * pos.p0;
    let mtm_asset = q * marginal_price;
    let adj_asset = q * pos.p0 * (1.0 - 2.0 / 3.0 * impact);
    Ok(TrajectoryPoint {
        x,
        q_held: q,
        marginal_price,
        cash: spent,
        lambda_noimpact: noimpact_asset / equity,
        lambda_mtm: ratio_or_divergent(mtm_asset, mtm_asset + net_cash),
        lambda_adj: ratio_or_divergent(adj_asset, adj_asset + net_cash),
    })
}

/// Liabilities on the entry leg after buying `q_held` shares.
pub fn entry_liabilities(pos: &Position, params: &ImpactParams, q_held: f64) -> Result<f64> {
    let impact = expected_impact(params, q_held)?;
    let spent = pos.p0 * q_held * (1.0 + 2.0 / 3.0 * impact);
    Ok((spent - pos.initial_equity()).max(0.0))
}

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "x",
    "q_held",
    "marginal_price",
    "cash",
    "lambda_noimpact",
    "lambda_mtm",
    "lambda_adj",
];

fn point_record(p: &TrajectoryPoint) -> [String; 7] {
    [
        p.x.to_string(),
        p.q_held.to_string(),
        p.marginal_price.to_string(),
        p.cash.to_string(),
        p.lambda_noimpact.to_string(),
        p.lambda_mtm.to_string(),
        p.lambda_adj.to_string(),
    ]
}

/// Writes trajectory rows as CSV; divergent leverage is written as `inf`.
pub fn write_trajectory_csv<W: Write>(out: W, points: &[TrajectoryPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS).map_err(csv_err)?;
    for p in points {
        w.write_record(point_record(p)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Round-trip CSV: the trajectory columns prefixed by a `leg` column
/// (`entry` or `exit`).
pub fn write_roundtrip_csv<W: Write>(out: W, trip: &RoundTrip) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["leg"];
    header.extend(TRAJECTORY_COLUMNS);
    w.write_record(&header).map_err(csv_err)?;
    for (leg, points) in [("entry", &trip.entry), ("exit", &trip.exit)] {
        for p in points.iter() {
            let rec = point_record(p);
            w.write_record(std::iter::once(leg).chain(rec.iter().map(String::as_str)))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> CoreError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CoreError::Io(io),
        other => CoreError::Parse {
            location: "csv".into(),
            reason: format!("{other:?}"),
        },
    }
}
