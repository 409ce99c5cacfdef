use anyhow::Result;
use serde::Serialize;

use impactval_core::leverage::{critical_impact, criticality, CriticalityReport};
use impactval_core::units::percent;
use impactval_core::valuation::total_impact;

use super::{has_position, resolve_params, resolve_position};
use crate::args::{Cli, CriticalArgs, Format};
use crate::output::{emit, json, or_dash, table};
use crate::usage;

/// Critical impact only, when no impact level was given.
#[derive(Debug, Serialize)]
struct Threshold {
    lambda0: f64,
    i_c: f64,
}

pub fn run(cli: &Cli, args: &CriticalArgs) -> Result<()> {
    let (lambda0, cal_i) = match args.lambda0 {
        Some(l) => (l, args.cal_i),
        None => {
            if !has_position(&args.position) {
                return Err(usage("pass --lambda0 [--calI], or a position (--Q, --p0, --L) with impact parameters"));
            }
            let pos = resolve_position(&args.position)?;
            let params = resolve_params(&args.params, pos.quantity)?;
            let lambda0 = pos.mtm_leverage();
            if !lambda0.is_finite() {
                anyhow::bail!("position equity Q p0 - L is not positive; leverage is undefined");
            }
            (lambda0, Some(total_impact(&pos, &params)?))
        }
    };

    let Some(cal_i) = cal_i else {
        let t = Threshold {
            lambda0,
            i_c: critical_impact(lambda0)?,
        };
        let body = match cli.format {
            Format::Json => json(&t)?,
            Format::Csv => format!("lambda0,i_c\n{},{}\n", t.lambda0, t.i_c).into_bytes(),
            Format::Text => table(
                &["field", "value"],
                &[
                    vec!["lambda0".into(), format!("{lambda0}")],
                    vec![
                        "critical impact I_c".into(),
                        format!("{:.6} ({})", t.i_c, percent(t.i_c, 2)),
                    ],
                ],
            )
            .into_bytes(),
        };
        return emit(cli.out.as_deref(), &body);
    };

    let report = criticality(lambda0, cal_i)?;
    if report.crossover.is_some_and(|c| c.printed_mismatch) {
        log::info!(
            "printed closed form for x* disagrees with the root of the trajectory equation"
        );
    }
    let body = match cli.format {
        Format::Json => json(&report)?,
        Format::Csv => csv_body(&report)?,
        Format::Text => text_body(&report).into_bytes(),
    };
    emit(cli.out.as_deref(), &body)
}

fn text_body(r: &CriticalityReport) -> String {
    let num = |v: f64| format!("{v:.6}");
    let mut rows = vec![
        vec!["lambda0".into(), format!("{}", r.lambda0)],
        vec![
            "total impact".into(),
            format!("{:.6} ({})", r.cal_i, percent(r.cal_i, 2)),
        ],
        vec!["regime".into(), r.regime.to_string()],
        vec![
            "critical impact I_c".into(),
            format!("{:.6} ({})", r.i_c, percent(r.i_c, 2)),
        ],
        vec![
            "critical leverage lambda_c".into(),
            or_dash(r.lambda_c, num),
        ],
        vec!["crossover x*".into(), or_dash(r.x_star, num)],
        vec!["bankruptcy point x_c".into(), or_dash(r.x_c, num)],
    ];
    if let Some(c) = r.crossover {
        rows.push(vec![
            "x* (printed closed form)".into(),
            or_dash(c.printed_closed_form, num),
        ]);
        rows.push(vec![
            "x* (quadratic in sqrt x)".into(),
            num(c.quadratic_root),
        ]);
    }
    table(&["field", "value"], &rows)
}

fn csv_body(r: &CriticalityReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "lambda0", "calI", "regime", "i_c", "lambda_c", "x_star", "x_c",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    w.write_record([
        r.lambda0.to_string(),
        r.cal_i.to_string(),
        r.regime.to_string(),
        r.i_c.to_string(),
        opt(r.lambda_c),
        opt(r.x_star),
        opt(r.x_c),
    ])?;
    Ok(w.into_inner()?)
}
