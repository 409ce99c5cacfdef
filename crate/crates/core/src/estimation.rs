//! Slow estimation of `σ`, `V`, `S` and `v` from daily market data.
//!
//! Estimates use an exponential moving average over a long window that
//! skips the most recent days, so a sudden move in the last week cannot feed
//! back into the valuation of the positions that caused it.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::impact::ImpactParams;

pub const DEFAULT_WINDOW_DAYS: usize = 126;
pub const DEFAULT_EXCLUSION_DAYS: usize = 5;
pub const DEFAULT_HALFLIFE_DAYS: f64 = 63.0;

/// Daily close, volume and optional quote data, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketSeries {
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
    volume: Vec<f64>,
    spread: Option<Vec<f64>>,
    best_quote_volume: Option<Vec<f64>>,
}

impl MarketSeries {
    /// Validates ordering, column lengths and positivity. Errors carry the
    /// 1-based row of the first offending entry.
    pub fn new(
        dates: Vec<NaiveDate>,
        close: Vec<f64>,
        volume: Vec<f64>,
        spread: Option<Vec<f64>>,
        best_quote_volume: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = dates.len();
        let lengths_match = close.len() == n
            && volume.len() == n
            && spread.as_ref().map_or(true, |s| s.len() == n)
            && best_quote_volume.as_ref().map_or(true, |v| v.len() == n);
        if !lengths_match {
            return Err(CoreError::invalid(
                "series",
                "columns have different lengths",
            ));
        }
        for i in 0..n {
            let row = i + 1;
            if i > 0 && dates[i] <= dates[i - 1] {
                return Err(CoreError::Data {
                    row,
                    reason: format!("date {} does not follow {}", dates[i], dates[i - 1]),
                });
            }
            check_positive(row, "close", close[i])?;
            check_positive(row, "volume", volume[i])?;
            if let Some(s) = &spread {
                check_positive(row, "spread", s[i])?;
            }
            if let Some(v) = &best_quote_volume {
                check_positive(row, "best_quote_volume", v[i])?;
            }
        }
        Ok(MarketSeries {
            dates,
            close,
            volume,
            spread,
            best_quote_volume,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    pub fn spread(&self) -> Option<&[f64]> {
        self.spread.as_deref()
    }

    pub fn best_quote_volume(&self) -> Option<&[f64]> {
        self.best_quote_volume.as_deref()
    }
}

fn check_positive(row: usize, column: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CoreError::Data {
            row,
            reason: format!("{column} must be positive and finite, got {value}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationPolicy {
    pub window_days: usize,
    /// Most recent days ignored entirely.
    pub exclusion_days: usize,
    /// May be infinite, which gives equal weights.
    pub halflife_days: f64,
}

impl Default for EstimationPolicy {
    fn default() -> Self {
        EstimationPolicy {
            window_days: DEFAULT_WINDOW_DAYS,
            exclusion_days: DEFAULT_EXCLUSION_DAYS,
            halflife_days: DEFAULT_HALFLIFE_DAYS,
        }
    }
}

impl EstimationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 {
            return Err(CoreError::invalid("window_days", "must be >= 1"));
        }
        if self.exclusion_days >= self.window_days {
            return Err(CoreError::invalid(
                "exclusion_days",
                format!(
                    "must be < window_days ({}), got {}",
                    self.window_days, self.exclusion_days
                ),
            ));
        }
        if self.halflife_days.is_nan() || self.halflife_days <= 0.0 {
            return Err(CoreError::invalid(
                "halflife_days",
                format!("must be > 0, got {}", self.halflife_days),
            ));
        }
        Ok(())
    }

    pub fn required_rows(&self) -> usize {
        self.window_days + self.exclusion_days
    }
}

/// Normalized weights `2^(-k/h)` for lag `k`, oldest value first.
pub fn ema_weights(len: usize, halflife_days: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(CoreError::invalid("values", "must not be empty"));
    }
    if halflife_days.is_nan() || halflife_days <= 0.0 {
        return Err(CoreError::invalid(
            "halflife_days",
            format!("must be > 0, got {halflife_days}"),
        ));
    }
    let decay = (-std::f64::consts::LN_2 / halflife_days).exp();
    let mut w: Vec<f64> = (0..len).map(|i| decay.powi((len - 1 - i) as i32)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Weighted mean with the latest value (last element) at lag 0.
pub fn ema(values: &[f64], halflife_days: f64) -> Result<f64> {
    let w = ema_weights(values.len(), halflife_days)?;
    Ok(values.iter().zip(&w).map(|(v, w)| v * w).sum())
}

/// Estimated parameters together with the window actually used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub params: ImpactParams,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub returns_used: usize,
}

/// `σ = sqrt(EMA(r²))` of close-to-close returns, `V`, `S` and `v` as EMAs,
/// all over the `window_days` rows preceding the excluded tail.
pub fn estimate_params(
    series: &MarketSeries,
    policy: &EstimationPolicy,
    y: f64,
) -> Result<ImpactParams> {
    Ok(estimate(series, policy, y)?.params)
}

pub fn estimate(series: &MarketSeries, policy: &EstimationPolicy, y: f64) -> Result<Estimate> {
    policy.validate()?;
    let required = policy.required_rows();
    if series.len() < required {
        return Err(CoreError::InsufficientHistory {
            required,
            available: series.len(),
        });
    }
    let end = series.len() - policy.exclusion_days;
    let start = end - policy.window_days;
    let h = policy.halflife_days;

    // The first window row uses its predecessor when there is one.
    let first_return = start.max(1);
    let squared: Vec<f64> = (first_return..end)
        .map(|t| {
            let r = series.close[t] / series.close[t - 1] - 1.0;
            r * r
        })
        .collect();
    let sigma = if squared.is_empty() {
        0.0
    } else {
        ema(&squared, h)?.sqrt()
    };
    let volume = ema(&series.volume[start..end], h)?;

    let mut params = ImpactParams::new(y, sigma, volume)?;
    if let Some(s) = &series.spread {
        params.spread = Some(ema(&s[start..end], h)?);
    }
    if let Some(v) = &series.best_quote_volume {
        params.quote_volume = Some(ema(&v[start..end], h)?);
    }
    params.validate()?;
    Ok(Estimate {
        params,
        window_start: series.dates[start],
        window_end: series.dates[end - 1],
        returns_used: squared.len(),
    })
}

#[derive(Debug, Deserialize)]
struct Row {
    date: String,
    close: String,
    volume: String,
    spread: Option<String>,
    best_quote_volume: Option<String>,
}

pub fn load_series(path: impl AsRef<Path>) -> Result<MarketSeries> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_series(file, &path.display().to_string())
}

/// Parses CSV with header `date,close,volume[,spread][,best_quote_volume]`.
/// `source` names the input in error messages.
pub fn read_series<R: Read>(input: R, source: &str) -> Result<MarketSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(source, 0, e.to_string()))?
        .clone();
    for required in ["date", "close", "volume"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CoreError::Parse {
                location: format!("{source}: header"),
                reason: format!("missing required column `{required}`"),
            });
        }
    }
    let has_spread = headers.iter().any(|h| h == "spread");
    let has_quote = headers.iter().any(|h| h == "best_quote_volume");

    let mut dates = Vec::new();
    let mut close = Vec::new();
    let mut volume = Vec::new();
    let mut spread = Vec::new();
    let mut quote = Vec::new();
    for (i, record) in reader.deserialize::<Row>().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(source, row, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&record.date, "%Y-%m-%d")
            .map_err(|e| parse_err(source, row, format!("date `{}`: {e}", record.date)))?;
        dates.push(date);
        close.push(number(source, row, "close", &record.close)?);
        volume.push(number(source, row, "volume", &record.volume)?);
        if has_spread {
            spread.push(number(
                source,
                row,
                "spread",
                record.spread.as_deref().unwrap_or(""),
            )?);
        }
        if has_quote {
            let cell = record.best_quote_volume.as_deref().unwrap_or("");
            quote.push(number(source, row, "best_quote_volume", cell)?);
        }
    }
    MarketSeries::new(
        dates,
        close,
        volume,
        has_spread.then_some(spread),
        has_quote.then_some(quote),
    )
    .map_err(|e| match e {
        CoreError::Data { row, reason } => parse_err(source, row, reason),
        other => other,
    })
}

fn number(source: &str, row: usize, column: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| parse_err(source, row, format!("{column} `{cell}` is not a number")))
}

fn parse_err(source: &str, row: usize, reason: String) -> CoreError {
    let location = if row == 0 {
        source.to_string()
    } else {
        format!("{source}: row {row}")
    };
    CoreError::Parse { location, reason }
}
