use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use impactval_core::units::parse_fraction;

#[derive(Debug, Parser)]
#[command(
    name = "impactval",
    version,
    about = "Impact-adjusted valuation and leverage risk"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    pub format: Format,

    /// Master seed for Monte Carlo runs.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Write output here instead of stdout. Must be a directory when a
    /// command produces several files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mark-to-market and impact-adjusted value of a position.
    Value(ValueArgs),
    /// Leverage along a deleveraging (or entry and exit) path.
    Trajectory(TrajectoryArgs),
    /// Regime, critical impact and critical leverage.
    Critical(CriticalArgs),
    /// Monte Carlo bankruptcy probability as a function of total impact.
    Bankruptcy(BankruptcyArgs),
    /// Impact and critical leverage table for a list of assets.
    Report(ReportArgs),
    /// Estimate impact parameters from a daily market data CSV.
    Estimate(EstimateArgs),
}

pub fn fraction(text: &str) -> Result<f64, String> {
    parse_fraction(text).map_err(|e| e.to_string())
}

/// Impact parameters, from a config file and/or flags. Flags win.
#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    /// TOML or JSON file with impact parameters (as written by `estimate`).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Impact prefactor (default 1).
    #[arg(long = "Y", value_parser = fraction)]
    pub y: Option<f64>,
    /// Daily volatility, e.g. 0.02 or 2%.
    #[arg(long, value_parser = fraction)]
    pub sigma: Option<f64>,
    /// Daily traded volume, in position units.
    #[arg(long = "V", value_parser = fraction)]
    pub volume: Option<f64>,
    /// Bid-ask spread as a fraction of price.
    #[arg(long = "S", value_parser = fraction)]
    pub spread: Option<f64>,
    /// Volume available at the best quote.
    #[arg(long = "v", value_parser = fraction)]
    pub quote_volume: Option<f64>,
    /// Spread-to-volatility coefficient, usually 0.6 to 0.9.
    #[arg(long, value_parser = fraction)]
    pub b: Option<f64>,
    /// Transactions per day.
    #[arg(long, value_parser = fraction)]
    pub phi: Option<f64>,
    /// How total impact is computed: volume or spread.
    #[arg(long, default_value = "volume")]
    pub impact_model: String,
}

#[derive(Debug, Clone, Args)]
pub struct PositionArgs {
    /// Position size in shares.
    #[arg(long = "Q", value_parser = fraction)]
    pub quantity: Option<f64>,
    /// Current price.
    #[arg(long, value_parser = fraction)]
    pub p0: Option<f64>,
    /// Liabilities financing the position.
    #[arg(long = "L", value_parser = fraction)]
    pub liabilities: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValueArgs {
    #[command(flatten)]
    pub position: PositionArgs,
    #[command(flatten)]
    pub params: ParamsArgs,
    /// Shares sold per day; enables the participation-rate check.
    #[arg(long, value_parser = fraction)]
    pub delta_q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajectoryMode {
    Exit,
    Roundtrip,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Initial leverage of a unit position. Use with --calI.
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Total impact I(Q); several values give one file each.
    #[arg(long = "calI", value_delimiter = ',', value_parser = fraction)]
    pub cal_i: Vec<f64>,
    #[command(flatten)]
    pub position: PositionArgs,
    #[command(flatten)]
    pub params: ParamsArgs,
    /// Number of grid points from x = 0 to x = 1.
    #[arg(long, default_value_t = 1001)]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = TrajectoryMode::Exit)]
    pub mode: TrajectoryMode,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long = "calI", value_parser = fraction)]
    pub cal_i: Option<f64>,
    #[command(flatten)]
    pub position: PositionArgs,
    #[command(flatten)]
    pub params: ParamsArgs,
}

#[derive(Debug, Args)]
pub struct BankruptcyArgs {
    #[arg(long, default_value_t = 9.0)]
    pub lambda0: f64,
    /// Participation rate(s) Q / (V T); several values give one file each.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub eta: Vec<f64>,
    /// Total impact grid: `start:stop:step` or a comma-separated list.
    #[arg(long = "calI-grid", default_value = "0:0.3:0.01")]
    pub cal_i_grid: String,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Liquidation horizon, in days, at the critical impact.
    #[arg(long, default_value_t = impactval_core::montecarlo::DEFAULT_DAYS_AT_CRITICAL)]
    pub days_at_critical: f64,
    /// Daily noise model: gaussian or none.
    #[arg(long, default_value = "gaussian")]
    pub noise: String,
    /// Bankruptcy test: at-end or anywhere-on-path.
    #[arg(long, default_value = "at-end")]
    pub criterion: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Asset config (TOML, one section per asset). Defaults to the bundled
    /// table of representative assets.
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV with columns date, close, volume[, spread][, best_quote_volume].
    pub series: PathBuf,
    #[arg(long, default_value_t = impactval_core::estimation::DEFAULT_WINDOW_DAYS)]
    pub window: usize,
    #[arg(long, default_value_t = impactval_core::estimation::DEFAULT_EXCLUSION_DAYS)]
    pub exclusion: usize,
    #[arg(long, default_value_t = impactval_core::estimation::DEFAULT_HALFLIFE_DAYS)]
    pub halflife: f64,
    #[arg(long = "Y", value_parser = fraction, default_value = "1")]
    pub y: f64,
}
