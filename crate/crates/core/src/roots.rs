//! Bracketed scalar root finding.

use crate::error::{CoreError, Result};

/// Result of a bisection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    /// Width of the final bracket.
    pub bracket_width: f64,
    pub iterations: u32,
}

/// Bisection on `[lo, hi]`.
///
/// `lo_sign` is the sign `f` takes just to the right of `lo` and must be
/// nonzero; the value `f(lo)` itself is never evaluated, which allows
/// brackets whose endpoint is a trivial root (e.g. `u = 0`). `f(hi)` must have
/// the opposite sign. Iterates until the bracket is narrower than `x_tol` or
/// the midpoint hits an exact zero.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, lo_sign: f64, x_tol: f64) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(CoreError::invalid(
            "bracket",
            format!("need lo < hi, got [{lo}, {hi}]"),
        ));
    }
    if lo_sign == 0.0 || lo_sign.is_nan() {
        return Err(CoreError::invalid("lo_sign", "must be nonzero"));
    }
    let f_hi = f(hi);
    if f_hi.is_nan() || f_hi.signum() == lo_sign.signum() || f_hi == 0.0 {
        if f_hi == 0.0 {
            return Ok(Root {
                x: hi,
                bracket_width: 0.0,
                iterations: 0,
            });
        }
        return Err(CoreError::Domain(format!(
            "no sign change on [{lo}, {hi}]: f(hi) = {f_hi}"
        )));
    }

    let sign_lo = lo_sign.signum();
    let (mut a, mut b) = (lo, hi);
    let mut iterations = 0;
    // 200 halvings exhaust f64 resolution on any finite bracket.
    while b - a > x_tol && iterations < 200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(Root {
                x: mid,
                bracket_width: 0.0,
                iterations,
            });
        }
        if fm.signum() == sign_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Root {
        x: 0.5 * (a + b),
        bracket_width: b - a,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, -1.0, 1e-14).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn trivial_root_at_lower_endpoint_is_skipped() {
        // f(u) = u (u - 0.5) vanishes at 0, but is negative just right of it.
        let r = bisect(|u| u * (u - 0.5), 0.0, 1.0, -1.0, 1e-15).unwrap();
        assert!((r.x - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_missing_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1.0, 1e-12).is_err());
        assert!(bisect(|x| x, 1.0, 0.0, -1.0, 1e-12).is_err());
    }

    #[test]
    fn root_at_upper_endpoint() {
        let r = bisect(|x| x - 1.0, 0.0, 1.0, -1.0, 1e-12).unwrap();
        assert_eq!(r.x, 1.0);
    }
}
