use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use impactval_core::leverage::{
    deleverage_trajectory, entry_exit_trajectories, exit_trajectory, normalized_position,
    uniform_grid, write_roundtrip_csv, write_trajectory_csv, RoundTrip, TrajectoryPoint,
};

use super::{has_position, resolve_params, resolve_position};
use crate::args::{Cli, Format, TrajectoryArgs, TrajectoryMode};
use crate::output::{emit, json, label, output_dir, ser_leverage};
use crate::usage;

enum Legs {
    Exit(Vec<TrajectoryPoint>),
    RoundTrip(RoundTrip),
}

#[derive(Serialize)]
struct JsonPoint {
    x: f64,
    q_held: f64,
    marginal_price: f64,
    cash: f64,
    #[serde(serialize_with = "ser_leverage")]
    lambda_noimpact: f64,
    #[serde(serialize_with = "ser_leverage")]
    lambda_mtm: f64,
    #[serde(serialize_with = "ser_leverage")]
    lambda_adj: f64,
}

impl From<&TrajectoryPoint> for JsonPoint {
    fn from(p: &TrajectoryPoint) -> Self {
        JsonPoint {
            x: p.x,
            q_held: p.q_held,
            marginal_price: p.marginal_price,
            cash: p.cash,
            lambda_noimpact: p.lambda_noimpact,
            lambda_mtm: p.lambda_mtm,
            lambda_adj: p.lambda_adj,
        }
    }
}

fn points(path: &[TrajectoryPoint]) -> Vec<JsonPoint> {
    path.iter().map(JsonPoint::from).collect()
}

pub fn run(cli: &Cli, args: &TrajectoryArgs) -> Result<()> {
    if args.grid < 2 {
        return Err(usage(format!(
            "--grid must be at least 2, got {}",
            args.grid
        )));
    }
    let grid = uniform_grid(args.grid)?;

    let Some(lambda0) = args.lambda0 else {
        if !has_position(&args.position) {
            return Err(usage(
                "pass --lambda0 with --calI, or a position (--Q, --p0, --L) with impact parameters",
            ));
        }
        if !args.cal_i.is_empty() {
            return Err(usage(
                "--calI goes with --lambda0; a position takes its impact from the parameters",
            ));
        }
        let pos = resolve_position(&args.position)?;
        let params = resolve_params(&args.params, pos.quantity)?;
        let path = match args.mode {
            TrajectoryMode::Exit => Legs::Exit(exit_trajectory(&pos, &params, &grid)?),
            TrajectoryMode::Roundtrip => {
                Legs::RoundTrip(entry_exit_trajectories(&pos, &params, args.grid)?)
            }
        };
        return emit(cli.out.as_deref(), &render(cli.format, &path)?);
    };

    if args.cal_i.is_empty() {
        return Err(usage("--lambda0 needs at least one --calI value"));
    }
    let mut runs = Vec::with_capacity(args.cal_i.len());
    for &cal_i in &args.cal_i {
        let path = match args.mode {
            TrajectoryMode::Exit => Legs::Exit(deleverage_trajectory(lambda0, cal_i, &grid)?),
            TrajectoryMode::Roundtrip => {
                let (pos, params) = normalized_position(lambda0, cal_i)?;
                Legs::RoundTrip(entry_exit_trajectories(&pos, &params, args.grid)?)
            }
        };
        runs.push((cal_i, path));
    }
    if let [(_, path)] = runs.as_slice() {
        return emit(cli.out.as_deref(), &render(cli.format, path)?);
    }
    let dir = output_dir(cli.out.as_deref(), "trajectories")?;
    let ext = if cli.format == Format::Json {
        "json"
    } else {
        "csv"
    };
    for (cal_i, path) in &runs {
        let name = format!(
            "trajectory_lambda{}_calI{}.{ext}",
            label(lambda0),
            label(*cal_i)
        );
        let file = dir.join(name);
        emit(Some(Path::new(&file)), &render(cli.format, path)?)?;
        log::info!("wrote {}", file.display());
    }
    Ok(())
}

fn render(format: Format, path: &Legs) -> Result<Vec<u8>> {
    if format == Format::Json {
        return match path {
            Legs::Exit(p) => json(&points(p)),
            Legs::RoundTrip(t) => {
                #[derive(Serialize)]
                struct Trip {
                    entry: Vec<JsonPoint>,
                    exit: Vec<JsonPoint>,
                }
                json(&Trip {
                    entry: points(&t.entry),
                    exit: points(&t.exit),
                })
            }
        };
    }
    let mut buf = Vec::new();
    match path {
        Legs::Exit(p) => write_trajectory_csv(&mut buf, p)?,
        Legs::RoundTrip(t) => write_roundtrip_csv(&mut buf, t)?,
    }
    Ok(buf)
}
