use anyhow::Result;
use serde::Serialize;

use impactval_core::impact::{check_impact, check_validity, ValidityThresholds};
use impactval_core::leverage::impact_adjusted_leverage_exit;
use impactval_core::montecarlo::LiquidationSchedule;
use impactval_core::units::percent;
use impactval_core::valuation::{liquidation_value, total_impact};

use super::{resolve_params, resolve_position};
use crate::args::{Cli, Format, ValueArgs};
use crate::output::{emit, json, leverage_text, or_dash, ser_opt_leverage, table};

#[derive(Debug, Serialize)]
struct ValueReport {
    #[serde(rename = "Q")]
    quantity: f64,
    p0: f64,
    #[serde(rename = "L")]
    liabilities: f64,
    /// Total impact `I(Q)`.
    impact: f64,
    mtm_value: f64,
    impact_adjusted_value: f64,
    /// `None` for an empty position.
    average_price: Option<f64>,
    /// `1 - impact-adjusted / mark-to-market`.
    haircut: f64,
    /// `None` for an empty, unfinanced position.
    #[serde(serialize_with = "ser_opt_leverage")]
    mtm_leverage: Option<f64>,
    #[serde(serialize_with = "ser_opt_leverage")]
    impact_adjusted_leverage: Option<f64>,
    participation: Option<f64>,
    warnings: Vec<String>,
}

pub fn run(cli: &Cli, args: &ValueArgs) -> Result<()> {
    let pos = resolve_position(&args.position)?;
    let params = resolve_params(&args.params, pos.quantity)?;
    let impact = total_impact(&pos, &params)?;
    let thresholds = ValidityThresholds::default();
    let validity = match args.delta_q {
        Some(dq) => {
            let schedule = LiquidationSchedule::new(pos.quantity, dq, params.volume)?;
            check_validity(&params, pos.quantity, &schedule, &thresholds)?
        }
        None => check_impact(&params, pos.quantity, &thresholds)?,
    };
    let mtm = pos.mtm_value();
    let adjusted = liquidation_value(&pos, &params)?;
    let held = !(mtm == 0.0 && pos.liabilities == 0.0);
    let report = ValueReport {
        quantity: pos.quantity,
        p0: pos.p0,
        liabilities: pos.liabilities,
        impact,
        mtm_value: mtm,
        impact_adjusted_value: adjusted,
        average_price: (pos.quantity > 0.0).then(|| adjusted / pos.quantity),
        haircut: if mtm > 0.0 { 1.0 - adjusted / mtm } else { 0.0 },
        mtm_leverage: held.then(|| pos.mtm_leverage()),
        impact_adjusted_leverage: if held {
            Some(impact_adjusted_leverage_exit(&pos, &params, 0.0)?)
        } else {
            None
        },
        participation: validity.participation,
        warnings: validity.warnings.iter().map(|w| w.to_string()).collect(),
    };
    for w in &report.warnings {
        log::warn!("{w}: the square-root law is outside its validated range");
    }

    let body = match cli.format {
        Format::Json => json(&report)?,
        Format::Csv => csv_body(&report)?,
        Format::Text => text_body(&report).into_bytes(),
    };
    emit(cli.out.as_deref(), &body)
}

fn text_body(r: &ValueReport) -> String {
    let rows = vec![
        vec!["mark-to-market value".into(), format!("{:.6}", r.mtm_value)],
        vec![
            "impact-adjusted value".into(),
            format!("{:.6}", r.impact_adjusted_value),
        ],
        vec![
            "average valuation price".into(),
            or_dash(r.average_price, |p| format!("{p:.6}")),
        ],
        vec![
            "total impact".into(),
            format!("{:.6} ({})", r.impact, percent(r.impact, 2)),
        ],
        vec![
            "haircut".into(),
            format!("{:.6} ({})", r.haircut, percent(r.haircut, 2)),
        ],
        vec![
            "mark-to-market leverage".into(),
            or_dash(r.mtm_leverage, leverage_text),
        ],
        vec![
            "impact-adjusted leverage".into(),
            or_dash(r.impact_adjusted_leverage, leverage_text),
        ],
        vec![
            "participation rate".into(),
            or_dash(r.participation, |p| format!("{p:.6} ({})", percent(p, 2))),
        ],
        vec![
            "validity".into(),
            if r.warnings.is_empty() {
                "OK".into()
            } else {
                r.warnings.join(", ")
            },
        ],
    ];
    table(&["field", "value"], &rows)
}

fn csv_body(r: &ValueReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Q",
        "p0",
        "L",
        "impact",
        "mtm_value",
        "impact_adjusted_value",
        "average_price",
        "haircut",
        "mtm_leverage",
        "impact_adjusted_leverage",
        "validity",
    ])?;
    let lev = |v: Option<f64>| match v {
        Some(v) if v.is_infinite() => "inf".to_string(),
        Some(v) => v.to_string(),
        None => String::new(),
    };
    w.write_record([
        r.quantity.to_string(),
        r.p0.to_string(),
        r.liabilities.to_string(),
        r.impact.to_string(),
        r.mtm_value.to_string(),
        r.impact_adjusted_value.to_string(),
        r.average_price.map_or_else(String::new, |p| p.to_string()),
        r.haircut.to_string(),
        lev(r.mtm_leverage),
        lev(r.impact_adjusted_leverage),
        if r.warnings.is_empty() {
            "OK".into()
        } else {
            r.warnings.join(";")
        },
    ])?;
    Ok(w.into_inner()?)
}
