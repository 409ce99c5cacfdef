mod bankruptcy;
mod critical;
mod estimate;
mod report;
mod trajectory;
mod value;

use anyhow::{Context, Result};

use impactval_core::impact::{impact_models, ImpactParams, PartialParams};
use impactval_core::valuation::Position;

use crate::args::{Cli, Command, ParamsArgs, PositionArgs};
use crate::usage;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Value(args) => value::run(cli, args),
        Command::Trajectory(args) => trajectory::run(cli, args),
        Command::Critical(args) => critical::run(cli, args),
        Command::Bankruptcy(args) => bankruptcy::run(cli, args),
        Command::Report(args) => report::run(cli, args),
        Command::Estimate(args) => estimate::run(cli, args),
    }
}

fn partial_params(args: &ParamsArgs) -> Result<PartialParams> {
    let mut p = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            PartialParams::from_config_str(&text)
                .with_context(|| format!("in {}", path.display()))?
        }
        None => PartialParams::default(),
    };
    let overrides = [
        (&mut p.y, args.y),
        (&mut p.sigma, args.sigma),
        (&mut p.volume, args.volume),
        (&mut p.spread, args.spread),
        (&mut p.quote_volume, args.quote_volume),
        (&mut p.b, args.b),
        (&mut p.phi, args.phi),
    ];
    for (slot, flag) in overrides {
        if flag.is_some() {
            *slot = flag;
        }
    }
    Ok(p)
}

/// Impact parameters for a position of `quantity` shares.
///
/// With the volume model they are taken as given. Any other model is
/// evaluated at `quantity` and turned into equivalent square-root
/// parameters (`σ = I(Q)`, `V = Q`) so every downstream formula sees the
/// same total impact.
pub fn resolve_params(args: &ParamsArgs, quantity: f64) -> Result<ImpactParams> {
    let partial = partial_params(args)?;
    let model = impact_models()
        .get(&args.impact_model)
        .map_err(|e| usage(e.to_string()))?;
    if partial.b.is_some_and(|b| !(0.6..=0.9).contains(&b)) {
        log::warn!(
            "b = {} lies outside the usual 0.6-0.9 band",
            partial.b.unwrap_or_default()
        );
    }
    if model.name() == "volume" {
        if partial.sigma.is_none() {
            return Err(usage("missing --sigma (or `sigma` in --params)"));
        }
        if partial.volume.is_none() {
            return Err(usage("missing --V (or `V` in --params)"));
        }
        return Ok(partial.into_params()?);
    }
    let probe = ImpactParams {
        y: partial.y.unwrap_or(1.0),
        sigma: partial.sigma.unwrap_or(0.0),
        volume: partial.volume.unwrap_or(1.0),
        spread: partial.spread,
        quote_volume: partial.quote_volume,
        b: partial.b,
        phi: partial.phi,
    };
    let total = model
        .impact(&probe, quantity)
        .map_err(|e| usage(e.to_string()))?;
    let (sigma, volume) = if quantity > 0.0 {
        (total, quantity)
    } else {
        (0.0, 1.0)
    };
    let params = ImpactParams {
        y: 1.0,
        sigma,
        volume,
        ..probe
    };
    params.validate()?;
    Ok(params)
}

pub fn resolve_position(args: &PositionArgs) -> Result<Position> {
    let quantity = args.quantity.ok_or_else(|| usage("missing --Q"))?;
    let p0 = args.p0.ok_or_else(|| usage("missing --p0"))?;
    Ok(Position::new(
        quantity,
        p0,
        args.liabilities.unwrap_or(0.0),
    )?)
}

pub fn has_position(args: &PositionArgs) -> bool {
    args.quantity.is_some() || args.p0.is_some() || args.liabilities.is_some()
}
