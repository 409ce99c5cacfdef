use anyhow::{Context, Result};

use impactval_core::estimation::{estimate, load_series, EstimationPolicy};

use crate::args::{Cli, EstimateArgs, Format};
use crate::output::{emit, json};
use crate::usage;

/// Writes the estimated parameters as a config that `--params` accepts:
/// TOML by default, JSON with `--format json`.
pub fn run(cli: &Cli, args: &EstimateArgs) -> Result<()> {
    let policy = EstimationPolicy {
        window_days: args.window,
        exclusion_days: args.exclusion,
        halflife_days: args.halflife,
    };
    policy.validate().map_err(|e| usage(e.to_string()))?;
    let source = args.series.display().to_string();
    let series = load_series(&args.series).with_context(|| format!("loading {source}"))?;
    let est =
        estimate(&series, &policy, args.y).with_context(|| format!("estimating from {source}"))?;
    log::info!(
        "window {} to {}, {} returns",
        est.window_start,
        est.window_end,
        est.returns_used
    );
    let p = est.params;
    let body = match cli.format {
        Format::Json => json(&p)?,
        Format::Text => p.to_toml_string().into_bytes(),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["Y", "sigma", "V", "S", "v"])?;
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            w.write_record([
                p.y.to_string(),
                p.sigma.to_string(),
                p.volume.to_string(),
                opt(p.spread),
                opt(p.quote_volume),
            ])?;
            w.into_inner()?
        }
    };
    emit(cli.out.as_deref(), &body)
}
