//! A normalised univariate density, plus the bracketed-bisection quantile all
//! implementors share.

use crate::error::{Error, Result};

/// A normalised density (or mass function) on the real line.
pub trait Density: Send + Sync {
    /// Natural log of the density; `-inf` outside the support.
    fn ln_pdf(&self, x: f64) -> f64;

    fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    fn cdf(&self, x: f64) -> f64;

    /// Closed hull of the support; either end may be infinite.
    fn support(&self) -> (f64, f64);

    /// A point near the bulk of the mass and a rough width, used to seed
    /// searches and quadrature breakpoints.
    fn location_hint(&self) -> (f64, f64);

    fn quantile(&self, p: f64) -> Result<f64> {
        bisect_quantile(|x| self.cdf(x), p, self.support(), self.location_hint())
    }
}

/// Bracketed bisection on a cdf, stopping at width `1e-12 * max(1, |x|)`.
pub fn bisect_quantile(
    cdf: impl Fn(f64) -> f64,
    p: f64,
    (lo_s, hi_s): (f64, f64),
    (center, width): (f64, f64),
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {p}")));
    }
    let width = if width > 0.0 && width.is_finite() { width } else { 1.0 };
    let center = center.clamp(lo_s, hi_s);
    let mut lo = (center - width).max(lo_s);
    let mut hi = (center + width).min(hi_s);
    let mut guard = 0;
    while cdf(lo) > p && lo > lo_s {
        lo = if lo_s.is_finite() {
            lo_s + 0.5 * (lo - lo_s)
        } else {
            center - 2.0 * (center - lo).max(width)
        };
        guard += 1;
        if guard > 4000 {
            break;
        }
    }
    guard = 0;
    while cdf(hi) < p && hi < hi_s {
        hi = if hi_s.is_finite() {
            hi_s - 0.5 * (hi_s - hi)
        } else {
            center + 2.0 * (hi - center).max(width)
        };
        guard += 1;
        if guard > 4000 {
            break;
        }
    }
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
