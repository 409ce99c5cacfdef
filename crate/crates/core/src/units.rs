//! Parsing of decimal fractions that may be written as percentages.

use crate::error::{CoreError, Result};

/// Parses `"0.02"`, `"2%"` or `"2 %"` into `0.02`. Basis points are not
/// accepted; write them as fractions.
pub fn parse_fraction(text: &str) -> Result<f64> {
    let trimmed = text.trim();
    let (body, scale) = match trimmed.strip_suffix('%') {
        Some(rest) => (rest.trim_end(), 0.01),
        None => (trimmed, 1.0),
    };
    let value: f64 = body.parse().map_err(|_| CoreError::Parse {
        location: format!("`{text}`"),
        reason: "expected a decimal number or a percentage like `2%`".into(),
    })?;
    if !value.is_finite() {
        return Err(CoreError::Parse {
            location: format!("`{text}`"),
            reason: "value must be finite".into(),
        });
    }
    Ok(value * scale)
}

/// Renders a fraction as a percentage with the given number of decimals.
pub fn percent(value: f64, decimals: usize) -> String {
    format!("{:.*}%", decimals, value * 100.0)
}
