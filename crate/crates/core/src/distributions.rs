//! Univariate distribution primitives.
//!
//! Parametrisations are the ones used throughout the engine:
//!
//! * `Normal { mean, variance }`: variance, not standard deviation.
//! * `InvGamma { shape, scale }`: density proportional to
//!   `x^(-shape-1) * exp(-scale / x)` on `x > 0`, so the mean is
//!   `scale / (shape - 1)`. `scale` is *not* a rate. If `Y ~ Gamma(shape, rate = 1)`
//!   then `scale / Y` has this law.
//! * `NonStdT { df, location, scale }`: the density of `location + scale * T`
//!   with `T` a standard Student t on `df` degrees of freedom.
//! * `ScaledBeta { a, b, lo, hi }`: a Beta(a, b) variable mapped linearly onto `[lo, hi]`.
//! * `TruncNormal { lo, hi }`: a standard normal conditioned on `(lo, hi)`.
//! * `Binomial { trials, p }`: the only discrete family; `quantile` refuses it.
//!
//! Quantiles are computed by bracketed bisection on the cdf for every family.
//! All randomness comes from the caller's generator; the engine uses
//! [`rand_chacha::ChaCha8Rng`] seeded with `seed_from_u64`.

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::density::{bisect_quantile, Density};
use crate::error::{finite, invalid, positive, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal cdf, accurate in both tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * x * x
}

/// Closed-form standard normal quantile (used for sampling, not for `quantile`).
pub fn std_normal_inv(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

// c * ln(y) with the convention 0 * ln(0) = 0.
fn xlny(c: f64, y: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * y.ln()
    }
}

/// Parameters of a distribution. Build a [`Distribution`] to use one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Normal { mean: f64, variance: f64 },
    InvGamma { shape: f64, scale: f64 },
    NonStdT { df: f64, location: f64, scale: f64 },
    ScaledBeta { a: f64, b: f64, lo: f64, hi: f64 },
    TruncNormal { lo: f64, hi: f64 },
    Binomial { trials: u64, p: f64 },
}

/// A validated, immutable distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct Distribution {
    family: Family,
    // Cached log normaliser (or truncation mass for TruncNormal).
    ln_norm: f64,
}

impl TryFrom<Family> for Distribution {
    type Error = Error;
    fn try_from(f: Family) -> Result<Self> {
        Distribution::new(f)
    }
}

impl From<Distribution> for Family {
    fn from(d: Distribution) -> Self {
        d.family
    }
}

impl Distribution {
    pub fn new(family: Family) -> Result<Self> {
        let ln_norm = match family {
            Family::Normal { mean, variance } => {
                finite("mean", mean)?;
                positive("variance", variance)?;
                -LN_SQRT_2PI - 0.5 * variance.ln()
            }
            Family::InvGamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)?;
                shape * scale.ln() - ln_gamma(shape)
            }
            Family::NonStdT { df, location, scale } => {
                positive("df", df)?;
                finite("location", location)?;
                positive("scale", scale)?;
                ln_gamma(0.5 * (df + 1.0))
                    - ln_gamma(0.5 * df)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - scale.ln()
            }
            Family::ScaledBeta { a, b, lo, hi } => {
                positive("a", a)?;
                positive("b", b)?;
                finite("lo", lo)?;
                finite("hi", hi)?;
                if hi <= lo {
                    return Err(invalid(format!("scaled beta needs lo < hi, got [{lo}, {hi}]")));
                }
                -ln_beta(a, b) - (hi - lo).ln()
            }
            Family::TruncNormal { lo, hi } => {
                if lo.is_nan() || hi.is_nan() || hi <= lo {
                    return Err(invalid(format!("truncation needs lo < hi, got ({lo}, {hi})")));
                }
                let mass = normal_mass(lo, hi);
                if mass <= 0.0 {
                    return Err(invalid(format!("truncation ({lo}, {hi}) has no normal mass")));
                }
                mass.ln()
            }
            Family::Binomial { p, .. } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("binomial p must lie in [0, 1], got {p}")));
                }
                0.0
            }
        };
        Ok(Self { family, ln_norm })
    }

    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        Self::new(Family::Normal { mean, variance })
    }

    pub fn inv_gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(Family::InvGamma { shape, scale })
    }

    pub fn non_std_t(df: f64, location: f64, scale: f64) -> Result<Self> {
        Self::new(Family::NonStdT { df, location, scale })
    }

    pub fn scaled_beta(a: f64, b: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::ScaledBeta { a, b, lo, hi })
    }

    pub fn trunc_normal(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::TruncNormal { lo, hi })
    }

    pub fn binomial(trials: u64, p: f64) -> Result<Self> {
        Self::new(Family::Binomial { trials, p })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.family, Family::Binomial { .. })
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        let c = self.ln_norm;
        match self.family {
            Family::Normal { mean, variance } => c - 0.5 * (x - mean).powi(2) / variance,
            Family::InvGamma { shape, scale } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    c - (shape + 1.0) * x.ln() - scale / x
                }
            }
            Family::NonStdT { df, location, scale } => {
                let z = (x - location) / scale;
                c - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
            }
            Family::ScaledBeta { a, b, lo, hi } => {
                if x < lo || x > hi {
                    return f64::NEG_INFINITY;
                }
                let u = (x - lo) / (hi - lo);
                c + xlny(a - 1.0, u) + xlny(b - 1.0, 1.0 - u)
            }
            Family::TruncNormal { lo, hi } => {
                if x <= lo || x >= hi {
                    f64::NEG_INFINITY
                } else {
                    std_normal_ln_pdf(x) - c
                }
            }
            Family::Binomial { trials, p } => {
                if x < 0.0 || x > trials as f64 || x.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                let n = trials as f64;
                ln_gamma(n + 1.0) - ln_gamma(x + 1.0) - ln_gamma(n - x + 1.0)
                    + xlny(x, p)
                    + xlny(n - x, 1.0 - p)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal { mean, variance } => std_normal_cdf((x - mean) / variance.sqrt()),
            Family::InvGamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_ur(shape, scale / x)
                }
            }
            Family::NonStdT { df, location, scale } => {
                let z = (x - location) / scale;
                if z.is_infinite() {
                    return if z > 0.0 { 1.0 } else { 0.0 };
                }
                let z2 = z * z;
                if z2 < df {
                    // Centre: the complementary form keeps precision as z -> 0.
                    let half = 0.5 * beta_reg(0.5, 0.5 * df, z2 / (df + z2));
                    0.5 + half.copysign(z)
                } else {
                    let tail = 0.5 * beta_reg(0.5 * df, 0.5, df / (df + z2));
                    if z > 0.0 {
                        1.0 - tail
                    } else {
                        tail
                    }
                }
            }
            Family::ScaledBeta { a, b, lo, hi } => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    beta_reg(a, b, (x - lo) / (hi - lo))
                }
            }
            Family::TruncNormal { lo, hi } => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    (normal_mass(lo, x) / self.ln_norm.exp()).clamp(0.0, 1.0)
                }
            }
            Family::Binomial { trials, .. } => {
                if x < 0.0 {
                    return 0.0;
                }
                if x >= trials as f64 {
                    return 1.0;
                }
                let k = x.floor() as u64;
                (0..=k).map(|j| self.logpdf(j as f64).exp()).sum::<f64>().min(1.0)
            }
        }
    }

    /// Inverse cdf by bracketed bisection; refuses the discrete family.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if self.is_discrete() {
            return Err(Error::Unsupported("quantile of a discrete distribution".into()));
        }
        bisect_quantile(|x| self.cdf(x), p, self.support(), self.location_hint())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Normal { mean, variance } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mean + variance.sqrt() * z
            }
            Family::InvGamma { shape, scale } => {
                let g = rand_distr::Gamma::new(shape, 1.0).expect("validated shape");
                scale / g.sample(rng)
            }
            Family::NonStdT { df, location, scale } => {
                let t = rand_distr::StudentT::new(df).expect("validated df");
                location + scale * t.sample(rng)
            }
            Family::ScaledBeta { a, b, lo, hi } => {
                let beta = rand_distr::Beta::new(a, b).expect("validated shapes");
                lo + (hi - lo) * beta.sample(rng)
            }
            Family::TruncNormal { lo, hi } => sample_trunc_normal(lo, hi, self.ln_norm.exp(), rng),
            Family::Binomial { trials, p } => {
                let b = rand_distr::Binomial::new(trials, p).expect("validated p");
                b.sample(rng) as f64
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self.family {
            Family::Normal { .. } | Family::NonStdT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::InvGamma { .. } => (0.0, f64::INFINITY),
            Family::ScaledBeta { lo, hi, .. } | Family::TruncNormal { lo, hi } => (lo, hi),
            Family::Binomial { trials, .. } => (0.0, trials as f64),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self.family {
            Family::Normal { mean, .. } => Some(mean),
            Family::InvGamma { shape, scale } => (shape > 1.0).then(|| scale / (shape - 1.0)),
            Family::NonStdT { df, location, .. } => (df > 1.0).then_some(location),
            Family::ScaledBeta { a, b, lo, hi } => Some(lo + (hi - lo) * a / (a + b)),
            Family::TruncNormal { lo, hi } => {
                let ln_phi = |x: f64| if x.is_infinite() { 0.0 } else { std_normal_ln_pdf(x).exp() };
                Some((ln_phi(lo) - ln_phi(hi)) / self.ln_norm.exp())
            }
            Family::Binomial { trials, p } => Some(trials as f64 * p),
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match self.family {
            Family::Normal { variance, .. } => Some(variance),
            Family::InvGamma { shape, scale } => {
                (shape > 2.0).then(|| scale * scale / ((shape - 1.0).powi(2) * (shape - 2.0)))
            }
            Family::NonStdT { df, scale, .. } => (df > 2.0).then(|| scale * scale * df / (df - 2.0)),
            Family::ScaledBeta { a, b, lo, hi } => {
                Some((hi - lo).powi(2) * a * b / ((a + b).powi(2) * (a + b + 1.0)))
            }
            Family::TruncNormal { lo, hi } => {
                let phi = |x: f64| if x.is_infinite() { 0.0 } else { std_normal_ln_pdf(x).exp() };
                let xphi = |x: f64| if x.is_infinite() { 0.0 } else { x * std_normal_ln_pdf(x).exp() };
                let z = self.ln_norm.exp();
                let m = (phi(lo) - phi(hi)) / z;
                Some(1.0 + (xphi(lo) - xphi(hi)) / z - m * m)
            }
            Family::Binomial { trials, p } => Some(trials as f64 * p * (1.0 - p)),
        }
    }

    /// Centre and width of the bulk of the mass, used to seed searches.
    pub fn location_hint(&self) -> (f64, f64) {
        match self.family {
            Family::Normal { mean, variance } => (mean, variance.sqrt()),
            Family::InvGamma { shape, scale } => {
                let mode = scale / (shape + 1.0);
                (mode, mode.max(f64::MIN_POSITIVE))
            }
            Family::NonStdT { location, scale, .. } => (location, scale),
            Family::ScaledBeta { lo, hi, .. } => (0.5 * (lo + hi), 0.25 * (hi - lo)),
            Family::TruncNormal { lo, hi } => (0.0f64.clamp(lo, hi), 1.0),
            Family::Binomial { trials, p } => (trials as f64 * p, 1.0),
        }
    }
}

impl Density for Distribution {
    fn ln_pdf(&self, x: f64) -> f64 {
        self.logpdf(x)
    }
    fn cdf(&self, x: f64) -> f64 {
        Distribution::cdf(self, x)
    }
    fn support(&self) -> (f64, f64) {
        Distribution::support(self)
    }
    fn location_hint(&self) -> (f64, f64) {
        Distribution::location_hint(self)
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        Distribution::quantile(self, p)
    }
}

/// `Phi(hi) - Phi(lo)` evaluated on whichever side avoids cancellation.
pub(crate) fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else if hi <= 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    }
}

fn sample_trunc_normal<R: Rng + ?Sized>(lo: f64, hi: f64, mass: f64, rng: &mut R) -> f64 {
    if mass > 0.25 {
        loop {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if z > lo && z < hi {
                return z;
            }
        }
    }
    // Narrow or tail window: invert the cdf on the side with more precision.
    let u: f64 = rng.random();
    let x = if lo >= 0.0 {
        let s = std_normal_sf(lo) - u * mass;
        -std_normal_inv(s)
    } else {
        std_normal_inv(std_normal_cdf(lo) + u * mass)
    };
    x.clamp(lo, hi)
}
