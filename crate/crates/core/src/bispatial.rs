//! Bispatial inference: from a one-sided P value to a post-data density.
//!
//! The user fixes an interval `[lo, hi]` of special pre-data interest, a
//! post-data opinion (PDO) curve and an interval density `h`. The P value of
//! the sampling-space hypothesis is mapped through the PDO curve to a
//! probability `kappa` for the parameter-space hypothesis `H_P`, which always
//! contains the interval. The b-density then combines
//!
//! * `c * f_S(theta)` outside the interval and
//! * `c * (1 + nu * h(theta)) * f_S(theta)` inside it,
//!
//! where `f_S` is the neutral fiducial density. One normaliser `c` on both
//! pieces keeps the density continuous (h vanishes at the interval ends), so
//! total mass one gives `c = 1 / (1 + nu * M_h)` with `M_h = int h f_S` over
//! the interval. Requiring `P_b(H_P) = kappa` with `A = P_fS(H_P)` gives
//! `kappa = (A + nu M_h) / (1 + nu M_h)`, hence
//! `nu = (kappa - A) / ((1 - kappa) M_h)`.

use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::distributions::{std_normal_cdf, std_normal_sf, Distribution, Family};
use crate::error::{invalid, Error, Result};
use crate::quadrature::Quadrature;

/// Which parameter-space hypothesis applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `H_P: theta >= lo`, P value `F(t | theta = lo)`.
    Lower,
    /// `H_P: theta <= hi`, P value `1 - F(t | theta = hi)`.
    Upper,
}

/// Picks the hypothesis pair from the two one-sided P values; ties go to [`Orientation::Lower`].
pub fn choose_orientation(f_at_lo: f64, fprime_at_hi: f64) -> (Orientation, f64) {
    if f_at_lo <= fprime_at_hi {
        (Orientation::Lower, f_at_lo)
    } else {
        (Orientation::Upper, fprime_at_hi)
    }
}

/// One-sided P value of a normally distributed statistic. `null_value` is the
/// interval end matching `side`.
pub fn one_sided_pvalue(statistic: f64, null_value: f64, sd: f64, side: Orientation) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(invalid(format!("sd must be > 0, got {sd}")));
    }
    let z = (statistic - null_value) / sd;
    Ok(match side {
        Orientation::Lower => std_normal_cdf(z),
        Orientation::Upper => std_normal_sf(z),
    })
}

/// Orientation and P value for a normal statistic and interval `[lo, hi]`.
pub fn normal_statistic_orientation(statistic: f64, sd: f64, lo: f64, hi: f64) -> Result<(Orientation, f64)> {
    let f_lo = one_sided_pvalue(statistic, lo, sd, Orientation::Lower)?;
    let f_hi = one_sided_pvalue(statistic, hi, sd, Orientation::Upper)?;
    Ok(choose_orientation(f_lo, f_hi))
}

/// Post-data opinion curve: P value to probability of `H_P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PdoCurve {
    PowerLaw { exponent: f64 },
    /// Monotone `(p, kappa)` knots, linearly interpolated.
    Table { points: Vec<(f64, f64)> },
}

impl PdoCurve {
    pub fn validate(&self) -> Result<()> {
        match self {
            PdoCurve::PowerLaw { exponent } => {
                if !(*exponent > 0.0 && exponent.is_finite()) {
                    return Err(invalid(format!("PDO exponent must be > 0, got {exponent}")));
                }
            }
            PdoCurve::Table { points } => {
                if points.len() < 2 {
                    return Err(invalid("PDO table needs at least two knots"));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0) || w[1].1 < w[0].1) {
                    return Err(invalid("PDO table must increase in p and not decrease in kappa"));
                }
                let (p0, p1) = (points[0].0, points[points.len() - 1].0);
                if p0 > 0.0 || p1 != 1.0 || points[points.len() - 1].1 != 1.0 {
                    return Err(invalid("PDO table must span p in [0, 1] and end at (1, 1)"));
                }
                if points.iter().any(|&(_, k)| !(0.0..=1.0).contains(&k)) {
                    return Err(invalid("PDO table kappa values must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// `kappa` for a P value in `(0, 1]`.
pub fn pdo_kappa(curve: &PdoCurve, p: f64) -> Result<f64> {
    curve.validate()?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("P value must lie in (0, 1], got {p}")));
    }
    Ok(match curve {
        PdoCurve::PowerLaw { exponent } => p.powf(*exponent),
        PdoCurve::Table { points } => {
            let i = points.partition_point(|&(q, _)| q < p).clamp(1, points.len() - 1);
            let ((p0, k0), (p1, k1)) = (points[i - 1], points[i]);
            k0 + (k1 - k0) * (p - p0) / (p1 - p0)
        }
    })
}

/// Inputs to the b-density.
#[derive(Debug, Clone)]
pub struct BispatialSpec<D> {
    lo: f64,
    hi: f64,
    h: Distribution,
    pdo: PdoCurve,
    f_s: D,
    orientation: Orientation,
    // P_fS(H_P), P_fS(interval) and int h f_S over the interval.
    neutral: f64,
    interval_mass: f64,
    m_h: f64,
}

impl<D: Density + Clone> BispatialSpec<D> {
    /// `h` must be a scaled beta on exactly `[lo, hi]` with both shapes above
    /// one, so that it vanishes at the interval ends.
    pub fn new(h: Distribution, pdo: PdoCurve, f_s: D, orientation: Orientation) -> Result<Self> {
        let Family::ScaledBeta { a, b, lo, hi } = *h.family() else {
            return Err(invalid("interval density must be a scaled beta"));
        };
        if !(a > 1.0 && b > 1.0) {
            return Err(invalid(format!(
                "interval density must vanish at both ends (shapes > 1), got ({a}, {b})"
            )));
        }
        if !(hi > lo) {
            return Err(invalid("interval must have positive width"));
        }
        pdo.validate()?;
        let f_lo = f_s.cdf(lo);
        let f_hi = f_s.cdf(hi);
        let neutral = match orientation {
            Orientation::Lower => 1.0 - f_lo,
            Orientation::Upper => f_hi,
        };
        let interval_mass = f_hi - f_lo;
        let m_h = Quadrature::new(1e-300, 1e-13)
            .integrate(|t| h.pdf(t) * f_s.pdf(t), lo, hi)?;
        if !(m_h >= 0.0 && m_h.is_finite()) {
            return Err(Error::Unnormalizable(format!("bad interval weight M_h = {m_h}")));
        }
        Ok(Self { lo, hi, h, pdo, f_s, orientation, neutral, interval_mass, m_h })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn pdo(&self) -> &PdoCurve {
        &self.pdo
    }

    pub fn f_s(&self) -> &D {
        &self.f_s
    }

    /// `A = P_fS(H_P)`.
    pub fn neutral_probability(&self) -> f64 {
        self.neutral
    }

    /// `M_h = int h f_S` over the interval.
    pub fn m_h(&self) -> f64 {
        self.m_h
    }

    /// `P_fS(lo <= theta <= hi)`.
    pub fn interval_mass(&self) -> f64 {
        self.interval_mass
    }

    /// Whether `theta` lies in `H_P`.
    pub fn in_h_p(&self, theta: f64) -> bool {
        match self.orientation {
            Orientation::Lower => theta >= self.lo,
            Orientation::Upper => theta <= self.hi,
        }
    }
}

/// `nu = (kappa - A) / ((1 - kappa) M_h)`.
pub fn solve_nu<D: Density + Clone>(spec: &BispatialSpec<D>, kappa: f64) -> Result<f64> {
    if kappa.is_nan() || kappa >= 1.0 {
        return Err(Error::KappaNotBelowOne(kappa));
    }
    let a = spec.neutral;
    if kappa < a {
        return Err(Error::KappaBelowNeutral { kappa, neutral: a });
    }
    if kappa > a && spec.m_h == 0.0 {
        return Err(Error::Unnormalizable(format!(
            "neutral density puts no weight on the interval, cannot raise P(H_P) to {kappa}"
        )));
    }
    Ok((kappa - a) / ((1.0 - kappa) * spec.m_h))
}

/// Largest `kappa` used by [`b_density_for_pvalue`].
pub const KAPPA_CEILING: f64 = 1.0 - 1e-12;

/// The b-density a Gibbs conditional uses for an observed p-value.
///
/// `kappa` comes from the PDO curve, capped at [`KAPPA_CEILING`]. When it does
/// not exceed the neutral probability, or the interval carries no `f_S` weight
/// (so nothing can be moved onto it), the density falls back to `f_S`.
pub fn b_density_for_pvalue<D: Density + Clone>(spec: &BispatialSpec<D>, p: f64) -> Result<BDensity<D>> {
    if p.is_nan() {
        return Err(Error::NonFinite("p-value is NaN".into()));
    }
    if p <= 0.0 || spec.m_h == 0.0 {
        return Ok(BDensity::neutral(spec));
    }
    let kappa = pdo_kappa(&spec.pdo, p.min(1.0))?.min(KAPPA_CEILING);
    if kappa <= spec.neutral {
        return Ok(BDensity::neutral(spec));
    }
    build_b_density(spec, kappa)
}

/// The overall post-data density built from a spec and `kappa`.
#[derive(Debug, Clone)]
pub struct BDensity<D> {
    spec: BispatialSpec<D>,
    nu: f64,
    c: f64,
    kappa: f64,
}

/// b-density with `nu` from [`solve_nu`].
pub fn build_b_density<D: Density + Clone>(spec: &BispatialSpec<D>, kappa: f64) -> Result<BDensity<D>> {
    let nu = solve_nu(spec, kappa)?;
    Ok(BDensity::with_nu(spec.clone(), nu, kappa))
}

impl<D: Density + Clone> BDensity<D> {
    fn with_nu(spec: BispatialSpec<D>, nu: f64, kappa: f64) -> Self {
        let c = 1.0 / (1.0 + nu * spec.m_h);
        Self { spec, nu, c, kappa }
    }

    /// The `nu = 0` density, equal to `f_S`; used when `kappa` does not exceed
    /// the neutral probability.
    pub fn neutral(spec: &BispatialSpec<D>) -> Self {
        let a = spec.neutral;
        Self::with_nu(spec.clone(), 0.0, a)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Single normaliser shared by both pieces.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Probability assigned to `H_P`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn spec(&self) -> &BispatialSpec<D> {
        &self.spec
    }

    /// `P_b(lo <= theta <= hi) = c (P_fS(interval) + nu M_h)`.
    pub fn interval_probability(&self) -> f64 {
        self.c * (self.spec.interval_mass + self.nu * self.spec.m_h)
    }

    fn weight(&self, theta: f64) -> f64 {
        if theta > self.spec.lo && theta < self.spec.hi && self.nu > 0.0 {
            1.0 + self.nu * self.spec.h.pdf(theta)
        } else {
            1.0
        }
    }
}

impl<D: Density + Clone> Density for BDensity<D> {
    fn ln_pdf(&self, theta: f64) -> f64 {
        self.c.ln() + self.weight(theta).ln() + self.spec.f_s.ln_pdf(theta)
    }
    fn pdf(&self, theta: f64) -> f64 {
        self.c * self.weight(theta) * self.spec.f_s.pdf(theta)
    }
    fn cdf(&self, theta: f64) -> f64 {
        let base = self.spec.f_s.cdf(theta);
        if theta <= self.spec.lo || self.nu == 0.0 {
            return self.c * base;
        }
        let top = theta.min(self.spec.hi);
        let h = self.spec.h;
        let extra = Quadrature::new(1e-300, 1e-12)
            .integrate(|t| h.pdf(t) * self.spec.f_s.pdf(t), self.spec.lo, top)
            .unwrap_or(f64::NAN);
        (self.c * (base + self.nu * extra)).clamp(0.0, 1.0)
    }
    fn support(&self) -> (f64, f64) {
        self.spec.f_s.support()
    }
    fn location_hint(&self) -> (f64, f64) {
        self.spec.f_s.location_hint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{bisect, integrate_points};
    use proptest::prelude::*;

    fn example_spec(orientation: Orientation) -> BispatialSpec<Distribution> {
        BispatialSpec::new(
            Distribution::scaled_beta(4.0, 4.0, -0.2, 0.2).unwrap(),
            PdoCurve::PowerLaw { exponent: 0.6 },
            Distribution::normal(0.0, 1.0).unwrap(),
            orientation,
        )
        .unwrap()
    }

    #[test]
    fn orientation_rule() {
        assert_eq!(choose_orientation(0.01, 0.99), (Orientation::Lower, 0.01));
        assert_eq!(choose_orientation(0.99, 0.01), (Orientation::Upper, 0.01));
        assert_eq!(choose_orientation(0.5, 0.5), (Orientation::Lower, 0.5));
    }

    #[test]
    fn kappa_values() {
        let pl = PdoCurve::PowerLaw { exponent: 0.6 };
        assert_eq!(pdo_kappa(&pl, 1.0).unwrap(), 1.0);
        assert!((pdo_kappa(&pl, 0.01).unwrap() - 0.063_096).abs() < 1e-6);
        let t = PdoCurve::Table { points: vec![(0.0, 0.0), (1.0, 1.0)] };
        assert!((pdo_kappa(&t, 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!(pdo_kappa(&pl, 0.0).is_err());
        assert!(PdoCurve::Table { points: vec![(0.0, 0.5), (0.5, 0.2), (1.0, 1.0)] }.validate().is_err());
    }

    #[test]
    fn pvalues() {
        assert_eq!(one_sided_pvalue(1.3, 1.3, 0.4, Orientation::Lower).unwrap(), 0.5);
        let p = one_sided_pvalue(2.7, 0.2, 1.0, Orientation::Upper).unwrap();
        assert!((p - 0.006_209_665).abs() < 1e-9);
        let info = 100.0 * (1.0 + 0.0004) / (1.0 - 0.0004f64).powi(2);
        let p = one_sided_pvalue(0.0, -0.02, 1.0 / info.sqrt(), Orientation::Lower).unwrap();
        assert!(p > 0.5 && p < 0.65);
    }

    #[test]
    fn nu_example_and_bracketing_oracle() {
        let spec = example_spec(Orientation::Upper);
        let a = spec.neutral_probability();
        assert!((a - std_normal_cdf(0.2)).abs() < 1e-15);
        let nu = solve_nu(&spec, 0.9).unwrap();
        // kappa(nu) = (A + nu M) / (1 + nu M), recomputed by quadrature.
        let h = Distribution::scaled_beta(4.0, 4.0, -0.2, 0.2).unwrap();
        let n01 = Distribution::normal(0.0, 1.0).unwrap();
        let m = crate::quadrature::integrate(|t| h.pdf(t) * n01.pdf(t), -0.2, 0.2).unwrap();
        let kap = |nu: f64| (a + nu * m) / (1.0 + nu * m);
        let root = bisect(|v| kap(v) - 0.9, 0.0, 1e6, 1e-12).unwrap();
        assert!((root - nu).abs() < 1e-8, "{root} vs {nu}");
        assert!(nu > 0.0 && nu.is_finite());
        let big = solve_nu(&spec, 0.99999).unwrap();
        assert!(big.is_finite() && big > nu);
        assert_eq!(solve_nu(&spec, a).unwrap(), 0.0);
        assert!(matches!(solve_nu(&spec, a - 0.01), Err(Error::KappaBelowNeutral { .. })));
        assert!(matches!(solve_nu(&spec, 1.0), Err(Error::KappaNotBelowOne(_))));
    }

    #[test]
    fn nu_increasing_in_kappa() {
        let spec = example_spec(Orientation::Lower);
        let a = spec.neutral_probability();
        let mut last = -1.0;
        for i in 0..20 {
            let k = a + (1.0 - a) * (i as f64 + 0.5) / 20.0;
            let nu = solve_nu(&spec, k).unwrap();
            assert!(nu > last);
            last = nu;
        }
    }

    #[test]
    fn neutral_kappa_reproduces_fs() {
        let spec = example_spec(Orientation::Lower);
        let b = build_b_density(&spec, spec.neutral_probability()).unwrap();
        for t in [-1.0, -0.1, 0.0, 0.15, 2.0] {
            assert!((b.pdf(t) - spec.f_s().pdf(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_probability_identity() {
        let spec = example_spec(Orientation::Upper);
        let b = build_b_density(&spec, 0.8).unwrap();
        let direct = crate::quadrature::integrate(|t| b.pdf(t), -0.2, 0.2).unwrap();
        assert!((direct - b.interval_probability()).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_specs() {
        let n01 = Distribution::normal(0.0, 1.0).unwrap();
        let pl = PdoCurve::PowerLaw { exponent: 0.6 };
        let flat = Distribution::scaled_beta(1.0, 1.0, -0.2, 0.2).unwrap();
        assert!(BispatialSpec::new(flat, pl.clone(), n01, Orientation::Lower).is_err());
        assert!(BispatialSpec::new(n01, pl, n01, Orientation::Lower).is_err());
    }

    #[test]
    fn pvalue_helper_fallbacks() {
        let h = Distribution::scaled_beta(4.0, 4.0, -0.2, 0.2).unwrap();
        let pl = PdoCurve::PowerLaw { exponent: 0.6 };
        let f_s = Distribution::normal(2.7, 1.0).unwrap();
        let (o, p) = normal_statistic_orientation(2.7, 1.0, -0.2, 0.2).unwrap();
        let spec = BispatialSpec::new(h, pl.clone(), f_s, o).unwrap();
        let b = b_density_for_pvalue(&spec, p).unwrap();
        assert!((b.kappa() - p.powf(0.6)).abs() < 1e-15);
        assert!(b.nu() > 0.0);
        assert_eq!(b_density_for_pvalue(&spec, 0.0).unwrap().nu(), 0.0);
        let ident = BispatialSpec::new(h, PdoCurve::PowerLaw { exponent: 1.0 }, f_s, o).unwrap();
        assert_eq!(b_density_for_pvalue(&ident, p).unwrap().nu(), 0.0);
        assert!(b_density_for_pvalue(&spec, f64::NAN).is_err());
        // interval far in the tail: M_h underflows and the density stays f_S
        let far = Distribution::normal(80.0, 1.0).unwrap();
        let spec = BispatialSpec::new(h, pl, far, Orientation::Upper).unwrap();
        assert_eq!(spec.m_h(), 0.0);
        let b = b_density_for_pvalue(&spec, 1e-300).unwrap();
        assert_eq!(b.nu(), 0.0);
        assert!(matches!(solve_nu(&spec, 0.5), Err(Error::Unnormalizable(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn b_density_contract(
            mean in -2.0f64..2.0,
            sd in 0.2f64..3.0,
            offset in -2.5f64..2.0,
            width_sd in 0.05f64..1.5,
            a in 1.5f64..6.0,
            bb in 1.5f64..6.0,
            upper in any::<bool>(),
            frac in 0.01f64..0.99,
        ) {
            let lo = mean + offset * sd;
            let width = width_sd * sd;
            let hi = lo + width;
            let h = Distribution::scaled_beta(a, bb, lo, hi).unwrap();
            let f_s = Distribution::normal(mean, sd * sd).unwrap();
            let o = if upper { Orientation::Upper } else { Orientation::Lower };
            let spec = BispatialSpec::new(h, PdoCurve::PowerLaw { exponent: 0.6 }, f_s, o).unwrap();
            let a0 = spec.neutral_probability();
            let kappa = a0 + (1.0 - a0) * frac;
            let b = build_b_density(&spec, kappa).unwrap();
            let pts = [f64::NEG_INFINITY, lo, hi, f64::INFINITY];
            let total = integrate_points(|t| b.pdf(t), &pts).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-6);
            let hp = match o {
                Orientation::Lower => integrate_points(|t| b.pdf(t), &[lo, hi, f64::INFINITY]).unwrap(),
                Orientation::Upper => integrate_points(|t| b.pdf(t), &[f64::NEG_INFINITY, lo, hi]).unwrap(),
            };
            prop_assert!((hp - kappa).abs() < 1e-6);
            for (e, out) in [(lo, lo - 1e-12 * width), (hi, hi + 1e-12 * width)] {
                let inside = b.c() * (1.0 + b.nu() * h.pdf(e)) * f_s.pdf(e);
                let gap = (inside - b.pdf(out)).abs() / b.pdf(out);
                prop_assert!(gap < 1e-6);
            }
            let m = spec.m_h();
            let top = 1e3 / ((1.0 - kappa) * m);
            let root = bisect(|v| (a0 + v * m) / (1.0 + v * m) - kappa, 0.0, top, 1e-13).unwrap();
            let nu = b.nu();
            prop_assert!((root - nu).abs() < 1e-8 * nu.max(1.0), "root {root} nu {nu} a0 {a0} m {m} kappa {kappa}");
        }
    }
}
