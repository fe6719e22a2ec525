//! Bayesian full conditionals.
//!
//! Conjugate cases return a closed-form [`Distribution`]. Where only a kernel is
//! available the result is a [`GriddedLogDensity`], whose normaliser is found by
//! adaptive quadrature on first use and then cached.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::density::{bisect_quantile, Density};
use crate::distributions::Distribution;
use crate::error::{invalid, positive, Error, Result};
use crate::quadrature::Quadrature;

/// How a Gibbs step should draw from a gridded density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerTag {
    InverseCdf,
    Metropolis,
}

type Kernel = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone)]
struct Normaliser {
    ln_z: f64,
    shift: f64,
    // Effective integration range and interior breakpoints.
    points: Vec<f64>,
}

/// An unnormalised log density on `[lo, hi]` with a lazily computed normaliser.
#[derive(Clone)]
pub struct GriddedLogDensity {
    kernel: Kernel,
    lo: f64,
    hi: f64,
    hint: (f64, f64),
    sampler: SamplerTag,
    norm: Arc<OnceLock<std::result::Result<Normaliser, Error>>>,
}

impl fmt::Debug for GriddedLogDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GriddedLogDensity")
            .field("support", &(self.lo, self.hi))
            .field("hint", &self.hint)
            .field("sampler", &self.sampler)
            .finish()
    }
}

impl GriddedLogDensity {
    /// `kernel` is the log density up to an additive constant. `hint` gives a
    /// point near the mode and a rough spread; it seeds the mode search and is
    /// required to be sensible when the support is unbounded.
    pub fn new(
        lo: f64,
        hi: f64,
        hint: (f64, f64),
        sampler: SamplerTag,
        kernel: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || hi <= lo {
            return Err(invalid(format!("support must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if !hint.0.is_finite() || !(hint.1 > 0.0 && hint.1.is_finite()) {
            return Err(invalid(format!("bad location hint {hint:?}")));
        }
        Ok(Self {
            kernel: Arc::new(kernel),
            lo,
            hi,
            hint,
            sampler,
            norm: Arc::new(OnceLock::new()),
        })
    }

    pub fn sampler(&self) -> SamplerTag {
        self.sampler
    }

    /// Unnormalised log density; `-inf` outside the support.
    pub fn ln_kernel(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            f64::NEG_INFINITY
        } else {
            (self.kernel)(x)
        }
    }

    /// Log of the normalising integral of `exp(ln_kernel)`.
    pub fn ln_normaliser(&self) -> Result<f64> {
        self.normaliser().map(|n| n.ln_z)
    }

    fn normaliser(&self) -> Result<&Normaliser> {
        self.norm
            .get_or_init(|| self.compute_normaliser())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn scan_grid(&self) -> Vec<f64> {
        let (c, s) = self.hint;
        let mut xs = Vec::with_capacity(1400);
        if self.lo.is_finite() && self.hi.is_finite() {
            let w = self.hi - self.lo;
            for i in 1..1024 {
                xs.push(self.lo + w * i as f64 / 1024.0);
            }
        }
        for i in -400..=400 {
            let x = c + s * 0.1 * i as f64;
            if x > self.lo && x < self.hi {
                xs.push(x);
            }
        }
        xs
    }

    fn compute_normaliser(&self) -> Result<Normaliser> {
        let grid = self.scan_grid();
        let mut best = (f64::NEG_INFINITY, self.hint.0);
        for &x in &grid {
            let k = (self.kernel)(x);
            if k.is_nan() || k == f64::INFINITY {
                return Err(Error::Unnormalizable(format!("kernel is {k} at {x}")));
            }
            if k > best.0 {
                best = (k, x);
            }
        }
        let (kmax, mode) = best;
        if kmax == f64::NEG_INFINITY {
            return Err(Error::Unnormalizable(
                "kernel is -inf across the search grid".into(),
            ));
        }
        let s = self.hint.1;
        // Walk outward until the kernel is negligible relative to its peak.
        let walk = |dir: f64, bound: f64| -> f64 {
            let mut step = s;
            let mut x = mode;
            for _ in 0..200 {
                let next = mode + dir * step;
                if (dir < 0.0 && next <= bound) || (dir > 0.0 && next >= bound) {
                    return bound;
                }
                x = next;
                if (self.kernel)(x) < kmax - 60.0 {
                    return x;
                }
                step *= 1.5;
            }
            x
        };
        let a = walk(-1.0, self.lo);
        let b = walk(1.0, self.hi);
        let mut points = vec![a];
        for p in [mode - s, mode, mode + s] {
            if p > a && p < b {
                points.push(p);
            }
        }
        points.push(b);
        points.dedup();
        let quad = Quadrature::new(1e-300, 1e-13);
        let v = quad.integrate_points(|x| ((self.kernel)(x) - kmax).exp(), &points)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Unnormalizable(format!("integral is {v}")));
        }
        Ok(Normaliser {
            ln_z: kmax + v.ln(),
            shift: kmax,
            points,
        })
    }

    /// Normalised log density, or an error if the kernel cannot be normalised.
    pub fn try_ln_pdf(&self, x: f64) -> Result<f64> {
        let n = self.normaliser()?;
        Ok(self.ln_kernel(x) - n.ln_z)
    }

    pub fn try_cdf(&self, x: f64) -> Result<f64> {
        let n = self.normaliser()?;
        let (a, b) = (n.points[0], *n.points.last().expect("two points"));
        if x <= a {
            return Ok(0.0);
        }
        if x >= b {
            return Ok(1.0);
        }
        let mut pts: Vec<f64> = n.points.iter().copied().filter(|&p| p < x).collect();
        pts.push(x);
        let quad = Quadrature::new(1e-300, 1e-12);
        let shift = n.shift;
        let v = quad.integrate_points(|t| ((self.kernel)(t) - shift).exp(), &pts)?;
        Ok((v * (shift - n.ln_z).exp()).clamp(0.0, 1.0))
    }

    /// Draw by numerically inverting the cdf.
    pub fn sample_inverse_cdf<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.normaliser()?;
        let u: f64 = rng.random();
        let u = u.clamp(1e-300, 1.0 - f64::EPSILON);
        Density::quantile(self, u)
    }
}

impl Density for GriddedLogDensity {
    fn ln_pdf(&self, x: f64) -> f64 {
        self.try_ln_pdf(x).unwrap_or(f64::NAN)
    }
    fn cdf(&self, x: f64) -> f64 {
        self.try_cdf(x).unwrap_or(f64::NAN)
    }
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn location_hint(&self) -> (f64, f64) {
        self.hint
    }
    fn quantile(&self, p: f64) -> Result<f64> {
        let n = self.normaliser()?;
        let range = (n.points[0], *n.points.last().expect("two points"));
        bisect_quantile(|x| self.cdf(x), p, range, self.hint)
    }
}

/// Conjugate update of an inverse-gamma prior for a normal variance with known mean.
///
/// `sigma_hat_sq` is the mean-centred average squared deviation.
pub fn variance_posterior(alpha0: f64, beta0: f64, n: u64, sigma_hat_sq: f64) -> Result<Distribution> {
    positive("alpha0", alpha0)?;
    positive("beta0", beta0)?;
    if n > 0 {
        positive("sigma_hat_sq", sigma_hat_sq)?;
    }
    let half_n = 0.5 * n as f64;
    Distribution::inv_gamma(alpha0 + half_n, beta0 + half_n * if n > 0 { sigma_hat_sq } else { 0.0 })
}

/// Posterior of a normal mean under a non-standardised t prior, known variance.
pub fn mu_posterior_tprior(
    nu0: f64,
    mu0: f64,
    sigma0: f64,
    xbar: f64,
    n: u64,
    sigma_sq: f64,
) -> Result<GriddedLogDensity> {
    positive("nu0", nu0)?;
    positive("sigma0", sigma0)?;
    positive("sigma_sq", sigma_sq)?;
    let nf = n as f64;
    let prior_scale_sq = sigma0 * sigma0 * nu0;
    let prior_var = if nu0 > 2.0 { sigma0 * sigma0 * nu0 / (nu0 - 2.0) } else { sigma0 * sigma0 };
    let (centre, spread) = if n == 0 {
        (mu0, prior_var.sqrt())
    } else {
        let prec = nf / sigma_sq + 1.0 / prior_var;
        ((xbar * nf / sigma_sq + mu0 / prior_var) / prec, prec.recip().sqrt())
    };
    let half = 0.5 * (nu0 + 1.0);
    GriddedLogDensity::new(
        f64::NEG_INFINITY,
        f64::INFINITY,
        (centre, spread),
        SamplerTag::Metropolis,
        move |mu| {
            let d = mu - mu0;
            -half * (d * d / prior_scale_sq).ln_1p() - nf * (xbar - mu).powi(2) / (2.0 * sigma_sq)
        },
    )
}

/// Posterior of the first trinomial proportion given the second, with a
/// Beta(alpha, beta) prior on the first.
pub fn trinomial_pi1_posterior(
    alpha: f64,
    beta: f64,
    counts: [u64; 3],
    pi2: f64,
) -> Result<GriddedLogDensity> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    if !(0.0..1.0).contains(&pi2) {
        return Err(invalid(format!("pi2 must lie in [0, 1), got {pi2}")));
    }
    let [x1, _, x3] = counts;
    let e1 = alpha + x1 as f64 - 1.0;
    let e3 = x3 as f64;
    let eb = beta - 1.0;
    let top = 1.0 - pi2;
    let xlny = |c: f64, y: f64| if c == 0.0 { 0.0 } else { c * y.ln() };
    GriddedLogDensity::new(
        0.0,
        top,
        (0.5 * top, 0.25 * top),
        SamplerTag::Metropolis,
        move |p1| xlny(e1, p1) + xlny(e3, top - p1) + xlny(eb, 1.0 - p1),
    )
}

/// Conditional posterior of the first slope in the regression example: a
/// normal prior N(mu0, sigma0_sq) combined with the least-squares estimate.
pub fn regression_beta1_posterior(
    mu0: f64,
    sigma0_sq: f64,
    sigma_sq: f64,
    sum_x1_sq: f64,
    beta1_hat: f64,
) -> Result<Distribution> {
    positive("sigma0_sq", sigma0_sq)?;
    positive("sigma_sq", sigma_sq)?;
    if !(sum_x1_sq > 0.0) {
        return Err(invalid("sum of squared x1 must be positive"));
    }
    let var1 = 1.0 / (sum_x1_sq / sigma_sq + 1.0 / sigma0_sq);
    Distribution::normal(var1 * (beta1_hat * sum_x1_sq / sigma_sq + mu0 / sigma0_sq), var1)
}

/// Raw sums of a bivariate sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BivariateSums {
    pub n: u64,
    pub sum_x: f64,
    pub sum_y: f64,
    pub sum_xx: f64,
    pub sum_yy: f64,
    pub sum_xy: f64,
}

impl BivariateSums {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let mut s = Self {
            n: pairs.len() as u64,
            sum_x: 0.0,
            sum_y: 0.0,
            sum_xx: 0.0,
            sum_yy: 0.0,
            sum_xy: 0.0,
        };
        for &(x, y) in pairs {
            s.sum_x += x;
            s.sum_y += y;
            s.sum_xx += x * x;
            s.sum_yy += y * y;
            s.sum_xy += x * y;
        }
        s
    }

    pub fn mean_x(&self) -> f64 {
        self.sum_x / self.n as f64
    }

    pub fn mean_y(&self) -> f64 {
        self.sum_y / self.n as f64
    }

    /// `(sum (x - mx)^2, sum (y - my)^2, sum (x - mx)(y - my))`.
    pub fn centred(&self, mx: f64, my: f64) -> (f64, f64, f64) {
        let n = self.n as f64;
        (
            self.sum_xx - 2.0 * mx * self.sum_x + n * mx * mx,
            self.sum_yy - 2.0 * my * self.sum_y + n * my * my,
            self.sum_xy - my * self.sum_x - mx * self.sum_y + n * mx * my,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Current values of the bivariate parameters other than the variance being updated.
#[derive(Debug, Clone, Copy)]
pub struct BivariateOthers {
    pub mu_x: f64,
    pub mu_y: f64,
    /// Variance of the *other* axis.
    pub other_var: f64,
    pub tau: f64,
}

/// Posterior of one marginal variance of a bivariate normal under an
/// inverse-gamma prior, all other parameters fixed.
pub fn bivariate_variance_posterior(
    which: Axis,
    alpha: f64,
    beta: f64,
    sums: &BivariateSums,
    others: BivariateOthers,
) -> Result<GriddedLogDensity> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    positive("other variance", others.other_var)?;
    let tau = others.tau;
    if !(tau * tau < 1.0) {
        return Err(Error::Domain(format!("correlation must satisfy tau^2 < 1, got {tau}")));
    }
    let (sxx, syy, sxy) = sums.centred(others.mu_x, others.mu_y);
    let own_ss = match which {
        Axis::X => sxx,
        Axis::Y => syy,
    };
    let n = sums.n as f64;
    let one_m = 1.0 - tau * tau;
    let other_sd = others.other_var.sqrt();
    let a_post = alpha + 0.5 * n;
    let centre = (beta + 0.5 * own_ss / one_m).max(f64::MIN_POSITIVE) / (a_post + 1.0);
    let spread = centre / a_post.sqrt();
    GriddedLogDensity::new(
        0.0,
        f64::INFINITY,
        (centre, spread),
        SamplerTag::Metropolis,
        move |v| {
            if v <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let sd = v.sqrt();
            -(alpha + 1.0) * v.ln() - beta / v - n * sd.ln() - own_ss / (2.0 * one_m * v)
                + tau / one_m * sxy / (sd * other_sd)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f(a + h * (i as f64 + 0.5))).sum::<f64>() * h
    }

    #[test]
    fn variance_posterior_updates() {
        let d = variance_posterior(4.0, 64.0, 9, 8.0).unwrap();
        assert_eq!(d, Distribution::inv_gamma(8.5, 64.0 + 4.5 * 8.0).unwrap());
        let prior = variance_posterior(4.0, 64.0, 0, 123.0).unwrap();
        assert_eq!(prior, Distribution::inv_gamma(4.0, 64.0).unwrap());
    }

    #[test]
    fn variance_posterior_mean_increases_with_sigma_hat() {
        let mut last = 0.0;
        for i in 1..50 {
            let m = variance_posterior(4.0, 64.0, 9, i as f64 * 0.5).unwrap().mean().unwrap();
            assert!(m > last);
            last = m;
        }
    }

    #[test]
    fn flat_prior_limit_is_normal() {
        let d = mu_posterior_tprior(17.0, -0.3, 1e7, 2.7, 9, 9.0).unwrap();
        let n = Distribution::normal(2.7, 1.0).unwrap();
        for i in 0..=100 {
            let x = -2.0 + 0.09 * i as f64;
            assert!((d.ln_pdf(x).exp() - n.logpdf(x).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn t_prior_mode_between_prior_and_data() {
        let d = mu_posterior_tprior(17.0, -0.3, 4.0 / 3.0, 2.7, 9, 9.0).unwrap();
        // Golden-section search for the mode.
        let (mut a, mut b) = (-5.0, 8.0);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let e = a + g * (b - a);
            if d.ln_kernel(c) > d.ln_kernel(e) {
                b = e;
            } else {
                a = c;
            }
        }
        let mode = 0.5 * (a + b);
        assert!(mode > -0.3 && mode < 2.7, "{mode}");
    }

    #[test]
    fn no_data_gives_prior_shape() {
        let d = mu_posterior_tprior(17.0, -0.3, 4.0 / 3.0, 0.0, 0, 1.0).unwrap();
        let prior = Distribution::non_std_t(17.0, -0.3, 4.0 / 3.0).unwrap();
        for x in [-3.0, -0.3, 0.5, 4.0] {
            assert!((d.ln_pdf(x) - prior.logpdf(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn trinomial_exponents_and_riemann_normaliser() {
        let d = trinomial_pi1_posterior(1.5, 11.5, [4, 2, 6], 0.2).unwrap();
        let k = |p: f64| 4.5 * p.ln() + 6.0 * (0.8 - p).ln() + 10.5 * (1.0 - p).ln();
        let base = d.ln_kernel(0.3) - k(0.3);
        for p in [0.05, 0.2, 0.5, 0.7] {
            assert!((d.ln_kernel(p) - k(p) - base).abs() < 1e-12);
        }
        let z = riemann(|p| d.ln_kernel(p).exp(), 0.0, 0.8, 1_000_000);
        let ln_z = d.ln_normaliser().unwrap();
        assert!((z.ln() - ln_z).abs() < 1e-8);
    }

    #[test]
    fn trinomial_no_counts_is_restricted_prior() {
        let d = trinomial_pi1_posterior(1.5, 11.5, [0, 0, 0], 0.3).unwrap();
        let prior = Distribution::scaled_beta(1.5, 11.5, 0.0, 1.0).unwrap();
        let mass = prior.cdf(0.7);
        for p in [0.01, 0.1, 0.4, 0.69] {
            assert!((d.ln_pdf(p) - (prior.logpdf(p) - mass.ln())).abs() < 1e-9);
        }
    }

    #[test]
    fn beta1_posterior_limits() {
        let d = regression_beta1_posterior(4.4, 1e12, 2.25, 12.0, 5.1).unwrap();
        assert!((d.mean().unwrap() - 5.1).abs() < 1e-9);
        assert!((d.variance().unwrap() - 2.25 / 12.0).abs() < 1e-9);
        assert!(regression_beta1_posterior(4.4, 0.36, 2.25, 0.0, 5.1).is_err());
        let m = regression_beta1_posterior(4.4, 0.36, 2.25, 12.0, 5.1).unwrap().mean().unwrap();
        assert!(m > 4.4 && m < 5.1);
    }

    fn sums() -> BivariateSums {
        BivariateSums {
            n: 100,
            sum_x: 3.0,
            sum_y: -2.0,
            sum_xx: 97.0,
            sum_yy: 110.0,
            sum_xy: 28.0,
        }
    }

    #[test]
    fn bivariate_variance_conjugate_at_zero_correlation() {
        let s = sums();
        let others = BivariateOthers { mu_x: 0.1, mu_y: -0.05, other_var: 1.2, tau: 0.0 };
        let d = bivariate_variance_posterior(Axis::X, 49.5, 48.0, &s, others).unwrap();
        let (sxx, _, _) = s.centred(0.1, -0.05);
        let closed = Distribution::inv_gamma(49.5 + 50.0, 48.0 + 0.5 * sxx).unwrap();
        for i in 1..200 {
            let v = 0.5 + 0.005 * i as f64;
            assert!((d.ln_pdf(v) - closed.logpdf(v)).abs() < 1e-8);
        }
    }

    #[test]
    fn bivariate_variance_riemann_normaliser() {
        let s = sums();
        let others = BivariateOthers { mu_x: 0.0, mu_y: 0.0, other_var: 0.9, tau: 0.3 };
        let d = bivariate_variance_posterior(Axis::Y, 49.5, 34.0, &s, others).unwrap();
        let ln_z = d.ln_normaliser().unwrap();
        let z = riemann(|v| (d.ln_kernel(v) - ln_z).exp(), 1e-9, 5.0, 1_000_000);
        assert!((z - 1.0).abs() < 1e-8, "{z}");
        assert!(bivariate_variance_posterior(
            Axis::Y,
            49.5,
            34.0,
            &s,
            BivariateOthers { tau: 1.0, ..others }
        )
        .is_err());
    }

    #[test]
    fn prior_mean_of_preset_settings() {
        let prior = Distribution::inv_gamma(49.5, 48.0).unwrap();
        assert!((prior.mean().unwrap() - 48.0 / 48.5).abs() < 1e-15);
    }

    #[test]
    fn bayes_ratio_is_constant() {
        // posterior / (prior * likelihood) must not depend on the argument.
        let s = sums();
        let others = BivariateOthers { mu_x: 0.0, mu_y: 0.0, other_var: 0.9, tau: 0.3 };
        let d = bivariate_variance_posterior(Axis::X, 49.5, 48.0, &s, others).unwrap();
        let prior = Distribution::inv_gamma(49.5, 48.0).unwrap();
        let (sxx, _, sxy) = s.centred(0.0, 0.0);
        let ratios: Vec<f64> = (1..500)
            .map(|i| {
                let v = 0.4 + 0.004 * i as f64;
                let sd = v.sqrt();
                let ll = -100.0 * sd.ln() - sxx / (2.0 * 0.91 * v) + 0.3 / 0.91 * sxy / (sd * 0.9f64.sqrt());
                d.ln_pdf(v) - prior.logpdf(v) - ll
            })
            .collect();
        let m = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let var = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / ratios.len() as f64;
        assert!(var < 1e-12, "{var}");
    }

    #[test]
    fn inverse_cdf_sampling_matches_cdf() {
        let d = trinomial_pi1_posterior(1.5, 11.5, [4, 2, 6], 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs: Vec<f64> = (0..4000).map(|_| d.sample_inverse_cdf(&mut rng).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let dmax = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(dmax < 0.03, "{dmax}");
        let q = d.quantile(0.4).unwrap();
        assert!((d.cdf(q) - 0.4).abs() < 1e-9);
    }

    #[test]
    fn unnormalisable_kernel_is_reported() {
        let d = GriddedLogDensity::new(0.0, 1.0, (0.5, 0.1), SamplerTag::Metropolis, |_| f64::NEG_INFINITY)
            .unwrap();
        assert!(matches!(d.ln_normaliser(), Err(Error::Unnormalizable(_))));
    }
}
