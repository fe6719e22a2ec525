//! Bivariate normal with a bispatial conditional for the correlation.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::{bivariate_variance_posterior, Axis, BivariateOthers, BivariateSums};
use crate::bispatial::{b_density_for_pvalue, normal_statistic_orientation, BispatialSpec, PdoCurve};
use crate::density::Density;
use crate::distributions::{std_normal_cdf, std_normal_ln_pdf, Distribution};
use crate::error::{finite, invalid, positive, Error, Result};
use crate::fiducial::{safe_truncation_v, tau_model_unchecked};
use crate::gibbs::{ConditionalSpec, EngineRng, UpdateRule};
use crate::quadrature::bisect;

use super::{ReferenceCurve, ScenarioConfig, ScenarioSpec, StartRange, PRESET_DATA_SEED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateData {
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BivariateSource {
    Synthetic { seed: u64, n: u64, mu_x: f64, mu_y: f64, sigma_x: f64, sigma_y: f64, tau: f64 },
    Inline { pairs: Vec<[f64; 2]> },
}

impl BivariateSource {
    pub fn preset() -> Self {
        Self::Synthetic { seed: PRESET_DATA_SEED, n: 100, mu_x: 0.0, mu_y: 0.0, sigma_x: 1.0, sigma_y: 1.0, tau: 0.3 }
    }

    pub fn load(&self) -> Result<BivariateData> {
        match *self {
            Self::Synthetic { seed, n, mu_x, mu_y, sigma_x, sigma_y, tau } => {
                synthetic_bivariate(seed, n, (mu_x, mu_y), (sigma_x, sigma_y), tau)
            }
            Self::Inline { ref pairs } => Ok(BivariateData { pairs: pairs.iter().map(|p| (p[0], p[1])).collect() }),
        }
    }
}

/// `n` draws from a bivariate normal.
pub fn synthetic_bivariate(seed: u64, n: u64, mean: (f64, f64), sd: (f64, f64), tau: f64) -> Result<BivariateData> {
    finite("mu_x", mean.0)?;
    finite("mu_y", mean.1)?;
    positive("sigma_x", sd.0)?;
    positive("sigma_y", sd.1)?;
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::Domain(format!("correlation must lie in (-1, 1), got {tau}")));
    }
    let mut rng = EngineRng::seed_from_u64(seed);
    let c = (1.0 - tau * tau).sqrt();
    let pairs = (0..n)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            (mean.0 + sd.0 * z1, mean.1 + sd.1 * (tau * z1 + c * z2))
        })
        .collect();
    Ok(BivariateData { pairs })
}

/// Root of `-n t^3 + s t^2 + (n - a - b) t + s` in `(-1, 1)` that maximises
/// `-(n/2) ln(1 - t^2) - (a - 2 t s + b) / (2 (1 - t^2))`; ties go to the
/// smallest `|t|`. Here `a`, `b` are the standardised sums of squares and `s`
/// the standardised cross product.
pub fn tau_mle_cubic(n: f64, a: f64, b: f64, s: f64) -> Result<f64> {
    for (name, v) in [("n", n), ("a", a), ("b", b), ("s", s)] {
        finite(name, v)?;
    }
    let f = |t: f64| ((-n * t + s) * t + (n - a - b)) * t + s;
    // Split (-1, 1) at the turning points so each piece is monotone.
    let mut cuts = vec![-1.0, 1.0];
    let disc = 4.0 * s * s + 12.0 * n * (n - a - b);
    if disc >= 0.0 {
        for sign in [-1.0, 1.0] {
            let t = (-2.0 * s + sign * disc.sqrt()) / (-6.0 * n);
            if t > -1.0 && t < 1.0 {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut roots = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (flo, fhi) = (f(lo), f(hi));
        let r = if flo == 0.0 {
            lo
        } else if fhi == 0.0 {
            hi
        } else if flo.signum() != fhi.signum() {
            bisect(f, lo, hi, 0.0)?
        } else {
            continue;
        };
        if r > -1.0 && r < 1.0 {
            roots.push(r);
        }
    }
    let loglik = |t: f64| {
        let om = 1.0 - t * t;
        -0.5 * n * om.ln() - (a - 2.0 * t * s + b) / (2.0 * om)
    };
    roots
        .into_iter()
        .map(|t| (loglik(t), t))
        .reduce(|best, cand| {
            let tol = 1e-12 * best.0.abs().max(1.0);
            if cand.0 > best.0 + tol || ((cand.0 - best.0).abs() <= tol && cand.1.abs() < best.1.abs()) {
                cand
            } else {
                best
            }
        })
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Domain("likelihood equation has no root in (-1, 1)".into()))
}

/// Maximum likelihood correlation with the means and standard deviations known.
pub fn tau_mle(sums: &BivariateSums, mu_x: f64, mu_y: f64, sigma_x: f64, sigma_y: f64) -> Result<f64> {
    finite("mu_x", mu_x)?;
    finite("mu_y", mu_y)?;
    positive("sigma_x", sigma_x)?;
    positive("sigma_y", sigma_y)?;
    let (sxx, syy, sxy) = sums.centred(mu_x, mu_y);
    tau_mle_cubic(sums.n as f64, sxx / (sigma_x * sigma_x), syy / (sigma_y * sigma_y), sxy / (sigma_x * sigma_y))
}

/// `I(tau) = n (1 + tau^2) / (1 - tau^2)^2`.
pub fn fisher_information_tau(tau: f64, n: u64) -> Result<f64> {
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::Domain(format!("correlation must lie in (-1, 1), got {tau}")));
    }
    let om = 1.0 - tau * tau;
    Ok(n as f64 * (1.0 + tau * tau) / (om * om))
}

/// Confidence density of a correlation from `atanh r ~ N(atanh tau, 1/(n - 3))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceDensityTau {
    z: f64,
    sd: f64,
}

pub fn confidence_density_tau(r: f64, n: u64) -> Result<ConfidenceDensityTau> {
    if !(r > -1.0 && r < 1.0) {
        return Err(Error::Domain(format!("sample correlation must lie in (-1, 1), got {r}")));
    }
    if n <= 3 {
        return Err(invalid(format!("confidence density needs n > 3, got {n}")));
    }
    Ok(ConfidenceDensityTau { z: r.atanh(), sd: 1.0 / (n as f64 - 3.0).sqrt() })
}

impl Density for ConfidenceDensityTau {
    fn ln_pdf(&self, t: f64) -> f64 {
        if !(t > -1.0 && t < 1.0) {
            return f64::NEG_INFINITY;
        }
        std_normal_ln_pdf((t.atanh() - self.z) / self.sd) - self.sd.ln() - (1.0 - t * t).ln()
    }
    fn cdf(&self, t: f64) -> f64 {
        if t <= -1.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            std_normal_cdf((t.atanh() - self.z) / self.sd)
        }
    }
    fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn location_hint(&self) -> (f64, f64) {
        let r = self.z.tanh();
        (r, self.sd * (1.0 - r * r))
    }
}

fn sample_sd(sum: f64, sum_sq: f64, n: f64) -> f64 {
    ((sum_sq - sum * sum / n) / (n - 1.0)).sqrt()
}

/// The five-parameter example: fiducial means, inverse-gamma posteriors for
/// the variances and a bispatial correlation conditional around `|tau| <= epsilon`.
///
/// `v` truncates the primary variable of the correlation's fiducial density;
/// `None` uses [`safe_truncation_v`].
#[allow(clippy::too_many_arguments)]
pub fn bivariate(
    data: &BivariateData,
    alpha_x: f64,
    beta_x: f64,
    alpha_y: f64,
    beta_y: f64,
    epsilon: f64,
    pdo: PdoCurve,
    h_shape: f64,
    v: Option<f64>,
) -> Result<ScenarioSpec> {
    for (name, x) in [("alpha_x", alpha_x), ("beta_x", beta_x), ("alpha_y", alpha_y), ("beta_y", beta_y)] {
        positive(name, x)?;
    }
    positive("epsilon", epsilon)?;
    if epsilon >= 1.0 {
        return Err(invalid(format!("epsilon must be below 1, got {epsilon}")));
    }
    pdo.validate()?;
    let sums = BivariateSums::from_pairs(&data.pairs);
    let n = sums.n;
    if n < 5 {
        return Err(invalid(format!("bivariate example needs n >= 5, got {n}")));
    }
    if ![sums.sum_x, sums.sum_y, sums.sum_xx, sums.sum_yy, sums.sum_xy].iter().all(|v| v.is_finite()) {
        return Err(invalid("data must be finite"));
    }
    let nf = n as f64;
    let v_trunc = match v {
        Some(v) => positive("v", v)?,
        None => safe_truncation_v(n),
    };
    let (xbar, ybar) = (sums.mean_x(), sums.mean_y());
    let (sx, sy) = (sample_sd(sums.sum_x, sums.sum_xx, nf), sample_sd(sums.sum_y, sums.sum_yy, nf));
    let (cxx, cyy, cxy) = sums.centred(xbar, ybar);
    let r = cxy / (cxx * cyy).sqrt();
    if !(sx > 0.0 && sy > 0.0 && r.abs() < 1.0) {
        return Err(invalid("sample is degenerate"));
    }

    let mu_x = ConditionalSpec::new("mu_x", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        let (sdx, sdy, t) = (v[2].sqrt(), v[3].sqrt(), v[4]);
        Distribution::normal(xbar + t * sdx / sdy * (v[1] - ybar), v[2] * (1.0 - t * t) / nf)
    });
    let mu_y = ConditionalSpec::new("mu_y", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        let (sdx, sdy, t) = (v[2].sqrt(), v[3].sqrt(), v[4]);
        Distribution::normal(ybar + t * sdy / sdx * (v[0] - xbar), v[3] * (1.0 - t * t) / nf)
    });
    let var_step = |s: f64| s * s * (2.0 / nf).sqrt();
    let var_x = ConditionalSpec::new("sigma_x_sq", UpdateRule::Metropolis { scale: var_step(sx) }, move |v: &[f64], _: &()| {
        let others = BivariateOthers { mu_x: v[0], mu_y: v[1], other_var: v[3], tau: v[4] };
        bivariate_variance_posterior(Axis::X, alpha_x, beta_x, &sums, others)
    });
    let var_y = ConditionalSpec::new("sigma_y_sq", UpdateRule::Metropolis { scale: var_step(sy) }, move |v: &[f64], _: &()| {
        let others = BivariateOthers { mu_x: v[0], mu_y: v[1], other_var: v[2], tau: v[4] };
        bivariate_variance_posterior(Axis::Y, alpha_y, beta_y, &sums, others)
    });
    let h = Distribution::scaled_beta(h_shape, h_shape, -epsilon, epsilon)?;
    let sd_stat = 1.0 / fisher_information_tau(epsilon, n)?.sqrt();
    let pdo_c = pdo.clone();
    let tau = ConditionalSpec::new("tau", UpdateRule::Metropolis { scale: (1.0 - r * r) / nf.sqrt() }, move |v: &[f64], _: &()| {
        let tau_hat = tau_mle(&sums, v[0], v[1], v[2].sqrt(), v[3].sqrt())?;
        let f_s = tau_model_unchecked(tau_hat, n, v_trunc)?.fiducial_density()?;
        let (o, p) = normal_statistic_orientation(tau_hat, sd_stat, -epsilon, epsilon)?;
        b_density_for_pvalue(&BispatialSpec::new(h, pdo_c.clone(), f_s, o)?, p)
    });

    let fid_var = |s: f64| Distribution::inv_gamma(0.5 * (nf - 1.0), 0.5 * (nf - 1.0) * s * s);
    let refs = vec![
        ReferenceCurve::new("fiducial_mu_x", "mu_x", Distribution::non_std_t(nf - 1.0, xbar, sx / nf.sqrt())?),
        ReferenceCurve::new("fiducial_mu_y", "mu_y", Distribution::non_std_t(nf - 1.0, ybar, sy / nf.sqrt())?),
        ReferenceCurve::new("fiducial_sigma_x_sq", "sigma_x_sq", fid_var(sx)?),
        ReferenceCurve::new("fiducial_sigma_y_sq", "sigma_y_sq", fid_var(sy)?),
        ReferenceCurve::sqrt_of("fiducial_sigma_x", "sigma_x_sq", fid_var(sx)?),
        ReferenceCurve::sqrt_of("fiducial_sigma_y", "sigma_y_sq", fid_var(sy)?),
        ReferenceCurve::sqrt_of("prior_sigma_x", "sigma_x_sq", Distribution::inv_gamma(alpha_x, beta_x)?),
        ReferenceCurve::sqrt_of("prior_sigma_y", "sigma_y_sq", Distribution::inv_gamma(alpha_y, beta_y)?),
        ReferenceCurve::new("confidence_tau", "tau", confidence_density_tau(r, n)?),
    ];
    let source = BivariateSource::Inline { pairs: data.pairs.iter().map(|&(x, y)| [x, y]).collect() };
    ScenarioSpec::new(
        ScenarioConfig::Bivariate { alpha_x, beta_x, alpha_y, beta_y, epsilon, h_shape, v, pdo, data: source },
        vec![mu_x, mu_y, var_x, var_y, tau],
        refs,
        vec![xbar, ybar, sx * sx, sy * sy, r],
        vec![
            StartRange::Real { centre: xbar, spread: sx / nf.sqrt() },
            StartRange::Real { centre: ybar, spread: sy / nf.sqrt() },
            StartRange::Positive { centre: sx * sx },
            StartRange::Positive { centre: sy * sy },
            StartRange::Interval { lo: (r - 0.3).max(-0.95), hi: (r + 0.3).min(0.95) },
        ],
    )
}
