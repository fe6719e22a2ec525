//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Infinite endpoints are handled by the usual rational substitutions, so the
//! integrand is never evaluated at an endpoint. Breakpoints let callers split
//! at kinks (interval edges of piecewise densities) or near a sharp mode.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`Quadrature::integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 20_000,
        }
    }
}

#[derive(Clone, Copy)]
enum Map {
    Finite,
    // x = a + t / (1 - t), t in [0, 1)
    Upper(f64),
    // x = b - t / (1 - t), t in [0, 1)
    Lower(f64),
    // x = t / (1 - t^2), t in (-1, 1)
    Whole,
}

impl Map {
    fn eval(self, f: &dyn Fn(f64) -> f64, t: f64) -> f64 {
        match self {
            Map::Finite => f(t),
            Map::Upper(a) => {
                let s = 1.0 - t;
                f(a + t / s) / (s * s)
            }
            Map::Lower(b) => {
                let s = 1.0 - t;
                f(b - t / s) / (s * s)
            }
            Map::Whole => {
                let s = 1.0 - t * t;
                f(t / s) * (1.0 + t * t) / (s * s)
            }
        }
    }
}

struct Piece {
    map: Map,
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod(f: &dyn Fn(f64) -> f64, map: Map, lo: f64, hi: f64) -> Result<Piece> {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = map.eval(f, c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let s = map.eval(f, c - h * x) + map.eval(f, c + h * x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    let (k, g) = (k * h, g * h);
    if !k.is_finite() {
        return Err(Error::Quadrature(format!(
            "integrand not finite on [{lo}, {hi}]"
        )));
    }
    Ok(Piece {
        map,
        lo,
        hi,
        value: k,
        error: (k - g).abs(),
    })
}

impl Quadrature {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Integral of `f` over `[a, b]`; either endpoint may be infinite.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        self.integrate_points(f, &[a, b])
    }

    /// Integral over `[points[0], points[last]]`, split at every interior point.
    ///
    /// Points must be non-decreasing; only the first and last may be infinite.
    pub fn integrate_points(&self, f: impl Fn(f64) -> f64, points: &[f64]) -> Result<f64> {
        if points.len() < 2 {
            return Err(Error::Quadrature("need at least two points".into()));
        }
        if points.iter().any(|p| p.is_nan()) || points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Quadrature(format!("bad breakpoints {points:?}")));
        }
        let f: &dyn Fn(f64) -> f64 = &f;
        let mut heap = BinaryHeap::new();
        let last = points.len() - 2;
        for (i, w) in points.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let (map, lo, hi) = match (a.is_finite(), b.is_finite()) {
                (true, true) => (Map::Finite, a, b),
                (true, false) if i == last => (Map::Upper(a), 0.0, 1.0),
                (false, true) if i == 0 => (Map::Lower(b), 0.0, 1.0),
                (false, false) if last == 0 => (Map::Whole, -1.0, 1.0),
                _ => return Err(Error::Quadrature(format!("bad breakpoints {points:?}"))),
            };
            heap.push(kronrod(f, map, lo, hi)?);
        }
        loop {
            let total: f64 = heap.iter().map(|p| p.value).sum();
            let err: f64 = heap.iter().map(|p| p.error).sum();
            if err <= self.abs_tol.max(self.rel_tol * total.abs()) {
                return Ok(total);
            }
            if heap.len() >= self.max_intervals {
                return Err(Error::Quadrature(format!(
                    "no convergence: estimate {total:e}, error {err:e}"
                )));
            }
            let worst = heap.pop().expect("non-empty");
            let mid = 0.5 * (worst.lo + worst.hi);
            if mid <= worst.lo || mid >= worst.hi {
                // Interval cannot be split further; accept what we have.
                let rest: f64 = heap.iter().map(|p| p.value).sum();
                return Ok(rest + worst.value);
            }
            for (lo, hi) in [(worst.lo, mid), (mid, worst.hi)] {
                heap.push(kronrod(f, worst.map, lo, hi)?);
            }
        }
    }
}

/// Convenience wrapper using default tolerances.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    Quadrature::default().integrate(f, a, b)
}

/// Convenience wrapper using default tolerances and breakpoints.
pub fn integrate_points(f: impl Fn(f64) -> f64, points: &[f64]) -> Result<f64> {
    Quadrature::default().integrate_points(f, points)
}

/// Root of a continuous function on a bracket where it changes sign.
///
/// Plain bisection; stops when the bracket width drops below `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return Err(Error::Domain(format!(
            "no sign change on [{lo}, {hi}]: f = ({flo}, {fhi})"
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
