use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use impactval_core::montecarlo::{
    bankruptcy_criteria, noise_models, transition_curve, LogisticFit, TransitionCurve,
    TransitionSpec,
};

use crate::args::{fraction, BankruptcyArgs, Cli, Format};
use crate::output::{emit, json, label, or_dash, output_dir, table};
use crate::usage;

#[derive(Serialize)]
struct CurveOutput<'a> {
    curve: &'a TransitionCurve,
    fit: Option<LogisticFit>,
    empirical_crossing: Option<f64>,
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| usage(format!("bad --calI-grid `{text}`: {why}"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(bad("expected start:stop:step"));
        };
        let (start, stop, step) = (
            fraction(start).map_err(|e| bad(&e))?,
            fraction(stop).map_err(|e| bad(&e))?,
            fraction(step).map_err(|e| bad(&e))?,
        );
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Round away representation noise such as 0.30000000000000004.
        Ok((0..=n)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect())
    } else {
        let values = text
            .split(',')
            .map(|s| fraction(s).map_err(|e| bad(&e)))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(bad("empty grid"));
        }
        Ok(values)
    }
}

pub fn run(cli: &Cli, args: &BankruptcyArgs) -> Result<()> {
    let grid = parse_grid(&args.cal_i_grid)?;
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if args.eta.is_empty() {
        return Err(usage("--eta needs at least one value"));
    }
    let noise = noise_models()
        .get(&args.noise)
        .map_err(|e| usage(e.to_string()))?;
    let criterion = bankruptcy_criteria()
        .get(&args.criterion)
        .map_err(|e| usage(e.to_string()))?;

    let mut curves = Vec::with_capacity(args.eta.len());
    for &eta in &args.eta {
        let mut spec = TransitionSpec::new(args.lambda0, eta, grid.clone(), args.trials, cli.seed);
        spec.days_at_critical = args.days_at_critical;
        spec.noise = noise.clone();
        spec.criterion = criterion.clone();
        let curve = transition_curve(&spec)?;
        for p in &curve.points {
            if let impactval_core::montecarlo::PointStatus::Infeasible { reason } = &p.status {
                log::warn!("eta={eta}, calI={}: infeasible ({reason})", p.cal_i);
            }
        }
        curves.push((eta, curve));
    }

    if let [(_, curve)] = curves.as_slice() {
        return emit(cli.out.as_deref(), &render(cli.format, curve)?);
    }
    let dir = output_dir(cli.out.as_deref(), "eta values")?;
    let ext = match cli.format {
        Format::Json => "json",
        Format::Csv => "csv",
        Format::Text => "txt",
    };
    for (eta, curve) in &curves {
        let file = dir.join(format!(
            "bankruptcy_lambda{}_eta{}.{ext}",
            label(args.lambda0),
            label(*eta)
        ));
        emit(Some(Path::new(&file)), &render(cli.format, curve)?)?;
        log::info!("wrote {}", file.display());
    }
    Ok(())
}

fn fit(curve: &TransitionCurve) -> Option<LogisticFit> {
    match curve.fit_logistic() {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("eta={}: no logistic fit ({e})", curve.eta);
            None
        }
    }
}

fn render(format: Format, curve: &TransitionCurve) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            Ok(buf)
        }
        Format::Json => json(&CurveOutput {
            curve,
            fit: fit(curve),
            empirical_crossing: curve.crossing(0.5),
        }),
        Format::Text => {
            let cell =
                |v: Option<f64>| v.map_or_else(|| "infeasible".to_string(), |v| format!("{v:.4}"));
            let rows: Vec<Vec<String>> = curve
                .points
                .iter()
                .map(|p| {
                    vec![
                        format!("{:.4}", p.cal_i),
                        cell(p.p_bankrupt()),
                        cell(p.std_error()),
                        cell(p.p_bankrupt_noimpact()),
                        p.days.map_or_else(|| "--".into(), |d| d.to_string()),
                    ]
                })
                .collect();
            let mut text = format!(
                "lambda0 = {}, eta = {}, sigma = {:.6}, I_c = {:.6}\n",
                curve.lambda0, curve.eta, curve.sigma, curve.critical_impact
            );
            text.push_str(&table(
                &[
                    "calI",
                    "p_bankrupt",
                    "std_error",
                    "p_bankrupt_noimpact",
                    "days",
                ],
                &rows,
            ));
            let fitted = fit(curve);
            text.push_str(&format!(
                "fitted p=0.5 at calI = {}, 10-90 width = {}; empirical p=0.5 at calI = {}\n",
                or_dash(fitted.map(|f| f.center), |v| format!("{v:.4}")),
                or_dash(fitted.map(|f| f.width_10_90), |v| format!("{v:.4}")),
                or_dash(curve.crossing(0.5), |v| format!("{v:.4}")),
            ));
            Ok(text.into_bytes())
        }
    }
}
