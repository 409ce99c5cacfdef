//! Per-asset impact and critical-leverage summary.
//!
//! Asset configs are TOML with one flat section per asset. Each section
//! holds the impact parameter keys plus `Q` and an optional `name`
//! (defaulting to the section key). Either parameter set may be missing.
//!
//! ```toml
//! [MSFT]
//! Q = 12.5e9
//! sigma = "2%"
//! V = 1.25e9
//! S = 0.00037
//! v = 1e6
//! b = 0.77
//! ```

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::impact::{impact_from_spread, PartialParams};
use crate::leverage::CRITICAL_PRODUCT;

#[derive(Debug, Clone, PartialEq)]
pub struct AssetSpec {
    pub name: String,
    pub quantity: Option<f64>,
    pub params: PartialParams,
}

/// One line of the report. `None` means the input or result is not
/// available and renders as `--`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssetReportRow {
    pub name: String,
    pub sigma: Option<f64>,
    #[serde(rename = "V")]
    pub volume: Option<f64>,
    #[serde(rename = "S")]
    pub spread: Option<f64>,
    #[serde(rename = "v")]
    pub quote_volume: Option<f64>,
    pub impact_vol_based: Option<f64>,
    pub impact_spread_based: Option<f64>,
    pub lambda_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Parses an asset config, keeping section order.
pub fn parse_assets(text: &str) -> Result<Vec<AssetSpec>> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CoreError::Parse {
        location: "asset config".into(),
        reason: e.to_string(),
    })?;
    table
        .into_iter()
        .map(|(key, value)| {
            let parse_err = |reason: String| CoreError::Parse {
                location: format!("asset config section [{key}]"),
                reason,
            };
            let toml::Value::Table(mut section) = value else {
                return Err(parse_err("expected a table of asset parameters".into()));
            };
            let name = match section.remove("name") {
                None => key.clone(),
                Some(toml::Value::String(s)) => s,
                Some(other) => {
                    return Err(parse_err(format!("`name` must be a string, got {other}")))
                }
            };
            let quantity = match section.remove("Q") {
                None => None,
                Some(toml::Value::Float(f)) => Some(f),
                Some(toml::Value::Integer(i)) => Some(i as f64),
                Some(other) => return Err(parse_err(format!("`Q` must be a number, got {other}"))),
            };
            let params: PartialParams = toml::Value::Table(section)
                .try_into()
                .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
            Ok(AssetSpec {
                name,
                quantity,
                params,
            })
        })
        .collect()
}

/// Computes `𝓘₁ = Y σ sqrt(Q / V)`, `𝓘₂ = Y b S sqrt(Q / v)` and
/// `λ_c = 3 / (2 𝓘)`, preferring `𝓘₁`. Problems become a row-level
/// `error` rather than failing the whole report.
pub fn report_row(asset: &AssetSpec) -> AssetReportRow {
    let p = &asset.params;
    let mut row = AssetReportRow {
        name: asset.name.clone(),
        sigma: p.sigma,
        volume: p.volume,
        spread: p.spread,
        quote_volume: p.quote_volume,
        impact_vol_based: None,
        impact_spread_based: None,
        lambda_c: None,
        error: None,
    };
    match compute(asset) {
        Ok((i1, i2)) => {
            row.impact_vol_based = i1;
            row.impact_spread_based = i2;
            row.lambda_c = i1.or(i2).map(|i| CRITICAL_PRODUCT / i);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn compute(asset: &AssetSpec) -> Result<(Option<f64>, Option<f64>)> {
    let p = &asset.params;
    let q = asset
        .quantity
        .ok_or_else(|| CoreError::invalid("Q", "missing"))?;
    crate::error::ensure_non_negative("Q", q)?;
    let y = p.y.unwrap_or(1.0);
    let i1 = match (p.sigma, p.volume) {
        (Some(sigma), Some(v)) => {
            crate::error::ensure_non_negative("sigma", sigma)?;
            crate::error::ensure_positive("V", v)?;
            Some(y * sigma * (q / v).sqrt())
        }
        _ => None,
    };
    let i2 = match (p.spread, p.quote_volume, p.b) {
        (Some(s), Some(v), Some(b)) => {
            crate::error::ensure_positive("v", v)?;
            Some(impact_from_spread(y, b, s, q / v)?)
        }
        _ => None,
    };
    if i1.is_none() && i2.is_none() {
        return Err(CoreError::invalid(
            "params",
            "need sigma and V, or S, v and b",
        ));
    }
    Ok((i1, i2))
}

pub fn report(assets: &[AssetSpec]) -> Vec<AssetReportRow> {
    assets.iter().map(report_row).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_in_order() {
        let text = r#"
[zeta]
Q = 10
sigma = "2%"
V = 1

[alpha]
name = "Alpha Corp"
Q = 1
S = 0.1
v = 0.1
b = 0.5
"#;
        let assets = parse_assets(text).unwrap();
        assert_eq!(assets[0].name, "zeta");
        assert_eq!(assets[1].name, "Alpha Corp");
        assert_eq!(assets[0].params.sigma, Some(0.02));
        let rows = report(&assets);
        assert!((rows[0].impact_vol_based.unwrap() - 0.02 * 10f64.sqrt()).abs() < 1e-15);
        assert!(rows[0].impact_spread_based.is_none());
        assert!(rows[1].impact_vol_based.is_none());
        let i2 = 0.5 * 0.1 * 10f64.sqrt();
        assert!((rows[1].lambda_c.unwrap() - 1.5 / i2).abs() < 1e-12);
    }

    #[test]
    fn vol_based_impact_drives_lambda_c() {
        let text = "[x]\nQ = 4\nsigma = 0.05\nV = 1\nS = 0.01\nv = 1\nb = 0.7\n";
        let row = report_row(&parse_assets(text).unwrap()[0]);
        assert!((row.lambda_c.unwrap() - 1.5 / 0.1).abs() < 1e-12);
    }

    #[test]
    fn row_errors_do_not_abort() {
        let text = "[a]\nQ = 1\n\n[b]\nsigma = 0.01\nV = 1\n\n[c]\nQ = 1\nsigma = 0.01\nV = 1\n";
        let rows = report(&parse_assets(text).unwrap());
        assert!(rows[0].error.is_some());
        assert!(rows[1].error.as_deref().unwrap().contains("Q"));
        assert!(rows[2].error.is_none());
    }

    #[test]
    fn empty_and_bad_configs() {
        assert!(parse_assets("").unwrap().is_empty());
        assert!(parse_assets("[a]\nQ = 1\nbogus = 3\n").is_err());
        assert!(parse_assets("x = 1\n").is_err());
        assert!(parse_assets("[a]\nQ = \"lots\"\n").is_err());
    }
}
