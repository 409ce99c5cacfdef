use anyhow::{Context, Result};

use impactval_core::report::{parse_assets, report, AssetReportRow};
use impactval_core::units::percent;

use crate::args::{Cli, Format, ReportArgs};
use crate::output::{emit, json, or_dash, table};

/// Representative assets, Q = V for futures and Q = 10 V for stocks.
pub const BUNDLED_ASSETS: &str = include_str!("../../data/assets.toml");

const HEADER: [&str; 8] = ["asset", "sigma", "V", "S", "v", "I1", "I2", "lambda_c"];

pub fn run(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let text = match &args.assets {
        Some(path) => {
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => BUNDLED_ASSETS.to_string(),
    };
    let assets = parse_assets(&text)?;
    let rows = report(&assets);
    for row in &rows {
        if let Some(e) = &row.error {
            log::warn!("{}: {e}", row.name);
        }
    }
    let body = match cli.format {
        Format::Json => json(&rows)?,
        Format::Csv => csv_body(&rows)?,
        Format::Text => text_body(&rows).into_bytes(),
    };
    emit(cli.out.as_deref(), &body)
}

fn text_body(rows: &[AssetReportRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![
                r.name.clone(),
                or_dash(r.sigma, |v| percent(v, 1)),
                or_dash(r.volume, |v| format!("{v:e}")),
                or_dash(r.spread, |v| percent(v, 3)),
                or_dash(r.quote_volume, |v| format!("{v:e}")),
                or_dash(r.impact_vol_based, |v| percent(v, 1)),
                or_dash(r.impact_spread_based, |v| percent(v, 1)),
                or_dash(r.lambda_c, |v| format!("{v:.1}")),
            ];
            if let Some(e) = &r.error {
                line[7] = format!("error: {e}");
            }
            line
        })
        .collect();
    table(&HEADER, &cells)
}

fn csv_body(rows: &[AssetReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name",
        "sigma",
        "V",
        "S",
        "v",
        "impact_vol_based",
        "impact_spread_based",
        "lambda_c",
        "error",
    ])?;
    let cell = |v: Option<f64>| or_dash(v, |v| v.to_string());
    for r in rows {
        w.write_record([
            r.name.clone(),
            cell(r.sigma),
            cell(r.volume),
            cell(r.spread),
            cell(r.quote_volume),
            cell(r.impact_vol_based),
            cell(r.impact_spread_based),
            cell(r.lambda_c),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    Ok(w.into_inner()?)
}
