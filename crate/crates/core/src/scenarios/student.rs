//! Normal sample with unknown mean and variance.

use crate::bayes::{mu_posterior_tprior, variance_posterior, GriddedLogDensity, SamplerTag};
use crate::bispatial::{b_density_for_pvalue, normal_statistic_orientation, pdo_kappa, BispatialSpec, Orientation, PdoCurve};
use crate::distributions::Distribution;
use crate::error::{finite, invalid, positive, Result};
use crate::fiducial::{normal_mean_conditional, variance_conditional};
use crate::gibbs::{ConditionalSpec, UpdateRule};
use crate::quadrature::Quadrature;

use super::{ReferenceCurve, ScenarioConfig, ScenarioSpec, StartRange};

fn check_sample(n: u64, xbar: f64, s2: f64) -> Result<()> {
    if n < 2 {
        return Err(invalid(format!("sample size must be >= 2, got {n}")));
    }
    finite("xbar", xbar)?;
    positive("s2", s2)?;
    Ok(())
}

/// `(1/n) sum (x_i - mu)^2` from the summary statistics.
fn sigma_hat_sq(n: u64, xbar: f64, s2: f64, mu: f64) -> f64 {
    let nf = n as f64;
    ((nf - 1.0) * s2 + nf * (xbar - mu).powi(2)) / nf
}

fn mean_fiducial(xbar: f64, n: u64) -> ConditionalSpec<()> {
    ConditionalSpec::new("mu", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        normal_mean_conditional(xbar, v[1], n)
    })
}

fn variance_fiducial(n: u64, xbar: f64, s2: f64) -> ConditionalSpec<()> {
    ConditionalSpec::new("sigma_sq", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        variance_conditional(sigma_hat_sq(n, xbar, s2, v[0]), n)
    })
}

fn variance_bayes(n: u64, xbar: f64, s2: f64, alpha0: f64, beta0: f64) -> ConditionalSpec<()> {
    ConditionalSpec::new("sigma_sq", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        variance_posterior(alpha0, beta0, n, sigma_hat_sq(n, xbar, s2, v[0]))
    })
}

fn fiducial_references(n: u64, xbar: f64, s2: f64) -> Result<Vec<ReferenceCurve>> {
    let nf = n as f64;
    let sigma_sq = Distribution::inv_gamma(0.5 * (nf - 1.0), 0.5 * (nf - 1.0) * s2)?;
    Ok(vec![
        ReferenceCurve::new("fiducial_mu", "mu", Distribution::non_std_t(nf - 1.0, xbar, (s2 / nf).sqrt())?),
        ReferenceCurve::new("fiducial_sigma_sq", "sigma_sq", sigma_sq),
        ReferenceCurve::sqrt_of("fiducial_sigma", "sigma_sq", sigma_sq),
    ])
}

fn bayes_sigma_references(n: u64, xbar: f64, s2: f64, alpha0: f64, beta0: f64) -> Result<Vec<ReferenceCurve>> {
    let nf = n as f64;
    let df = 2.0 * alpha0 + nf - 1.0;
    let scale = ((2.0 * beta0 + (nf - 1.0) * s2) / (df * nf)).sqrt();
    let sigma_sq = Distribution::inv_gamma(alpha0 + 0.5 * (nf - 1.0), beta0 + 0.5 * (nf - 1.0) * s2)?;
    let prior = Distribution::inv_gamma(alpha0, beta0)?;
    Ok(vec![
        ReferenceCurve::new("marginal_mu", "mu", Distribution::non_std_t(df, xbar, scale)?),
        ReferenceCurve::new("marginal_sigma_sq", "sigma_sq", sigma_sq),
        ReferenceCurve::sqrt_of("marginal_sigma", "sigma_sq", sigma_sq),
        ReferenceCurve::sqrt_of("prior_sigma", "sigma_sq", prior),
    ])
}

fn starts(n: u64, xbar: f64, s2: f64) -> Vec<StartRange> {
    vec![
        StartRange::Real { centre: xbar, spread: (s2 / n as f64).sqrt() },
        StartRange::Positive { centre: s2 },
    ]
}

/// Both conditionals fiducial; the system is compatible with Student t and
/// inverse-gamma marginals.
pub fn student_fiducial(n: u64, xbar: f64, s2: f64) -> Result<ScenarioSpec> {
    check_sample(n, xbar, s2)?;
    ScenarioSpec::new(
        ScenarioConfig::StudentFiducial { n, xbar, s2 },
        vec![mean_fiducial(xbar, n), variance_fiducial(n, xbar, s2)],
        fiducial_references(n, xbar, s2)?,
        vec![xbar, s2],
        starts(n, xbar, s2),
    )
}

/// Fiducial mean conditional with an inverse-gamma posterior for the variance.
pub fn student_bayes_sigma(n: u64, xbar: f64, s2: f64, alpha0: f64, beta0: f64) -> Result<ScenarioSpec> {
    check_sample(n, xbar, s2)?;
    positive("alpha0", alpha0)?;
    positive("beta0", beta0)?;
    let mut refs = bayes_sigma_references(n, xbar, s2, alpha0, beta0)?;
    refs.extend(fiducial_references(n, xbar, s2)?);
    ScenarioSpec::new(
        ScenarioConfig::StudentBayesSigma { n, xbar, s2, alpha0, beta0 },
        vec![mean_fiducial(xbar, n), variance_bayes(n, xbar, s2, alpha0, beta0)],
        refs,
        vec![xbar, s2],
        starts(n, xbar, s2),
    )
}

/// Log of the joint density (up to a constant) implied by a Student t prior
/// on the mean combined with the fiducial variance conditional.
pub fn tprior_joint_ln_density(
    mu: f64,
    sigma_sq: f64,
    (n, xbar, s2): (u64, f64, f64),
    (nu0, mu0, sigma0): (f64, f64, f64),
) -> f64 {
    if !(sigma_sq > 0.0) {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let d = (mu - mu0) / sigma0;
    -(0.5 * nf + 1.0) * sigma_sq.ln() - 0.5 * (nu0 + 1.0) * (d * d / nu0).ln_1p()
        - nf * sigma_hat_sq(n, xbar, s2, mu) / (2.0 * sigma_sq)
}

/// Bayesian mean conditional under a Student t prior, fiducial variance.
pub fn student_bayes_mu(n: u64, xbar: f64, s2: f64, nu0: f64, mu0: f64, sigma0: f64) -> Result<ScenarioSpec> {
    check_sample(n, xbar, s2)?;
    positive("nu0", nu0)?;
    finite("mu0", mu0)?;
    positive("sigma0", sigma0)?;
    let nf = n as f64;
    let mu = ConditionalSpec::new("mu", UpdateRule::Metropolis { scale: (s2 / nf).sqrt() }, move |v: &[f64], _: &()| {
        mu_posterior_tprior(nu0, mu0, sigma0, xbar, n, v[1])
    });

    // Marginals of the joint: mu in closed form up to a constant, sigma^2
    // through an inner integral over mu.
    let ln_tprior = move |m: f64| {
        let d = (m - mu0) / sigma0;
        -0.5 * (nu0 + 1.0) * (d * d / nu0).ln_1p()
    };
    let se = (s2 / nf).sqrt();
    let mu_marginal = GriddedLogDensity::new(
        f64::NEG_INFINITY,
        f64::INFINITY,
        (xbar, se),
        SamplerTag::InverseCdf,
        move |m| ln_tprior(m) - 0.5 * nf * ((nf - 1.0) * s2 + nf * (xbar - m).powi(2)).ln(),
    )?;
    let sigma_marginal = GriddedLogDensity::new(0.0, f64::INFINITY, (s2, s2 / nf.sqrt()), SamplerTag::InverseCdf, move |v| {
        let w = (v / nf).sqrt();
        let mut pts = vec![f64::NEG_INFINITY, xbar - 12.0 * w, xbar, xbar + 12.0 * w, mu0, f64::INFINITY];
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let inner = Quadrature::new(1e-300, 1e-11)
            .integrate_points(|m| (ln_tprior(m) - nf * (xbar - m).powi(2) / (2.0 * v)).exp(), &pts)
            .unwrap_or(f64::NAN);
        -(0.5 * nf + 1.0) * v.ln() - (nf - 1.0) * s2 / (2.0 * v) + inner.ln()
    })?;
    let mut refs = vec![
        ReferenceCurve::new("marginal_mu", "mu", mu_marginal),
        ReferenceCurve::new("marginal_sigma_sq", "sigma_sq", sigma_marginal.clone()),
        ReferenceCurve::sqrt_of("marginal_sigma", "sigma_sq", sigma_marginal),
        ReferenceCurve::new("prior_mu", "mu", Distribution::non_std_t(nu0, mu0, sigma0)?),
    ];
    refs.extend(fiducial_references(n, xbar, s2)?);
    ScenarioSpec::new(
        ScenarioConfig::StudentBayesMu { n, xbar, s2, nu0, mu0, sigma0 },
        vec![mu, variance_fiducial(n, xbar, s2)],
        refs,
        vec![xbar, s2],
        starts(n, xbar, s2),
    )
}

/// Orientation, one-sided p-value and `kappa` for the mean conditional of the
/// bispatial example at a given variance.
pub fn student_bispatial_kappa(
    n: u64,
    xbar: f64,
    sigma_sq: f64,
    (lo, hi): (f64, f64),
    pdo: &PdoCurve,
) -> Result<(Orientation, f64, f64)> {
    positive("sigma_sq", sigma_sq)?;
    let sd = (sigma_sq / n as f64).sqrt();
    let (o, p) = normal_statistic_orientation(xbar, sd, lo, hi)?;
    Ok((o, p, pdo_kappa(pdo, p)?))
}

/// Bispatial mean conditional centred on the hypothesis `|mu - mu1| <= epsilon`,
/// inverse-gamma posterior for the variance.
#[allow(clippy::too_many_arguments)]
pub fn student_bispatial(
    n: u64,
    xbar: f64,
    s2: f64,
    mu1: f64,
    epsilon: f64,
    pdo: PdoCurve,
    alpha0: f64,
    beta0: f64,
    h_shape: f64,
) -> Result<ScenarioSpec> {
    check_sample(n, xbar, s2)?;
    finite("mu1", mu1)?;
    positive("epsilon", epsilon)?;
    positive("alpha0", alpha0)?;
    positive("beta0", beta0)?;
    pdo.validate()?;
    let (lo, hi) = (mu1 - epsilon, mu1 + epsilon);
    let h = Distribution::scaled_beta(h_shape, h_shape, lo, hi)?;
    let nf = n as f64;
    let pdo_c = pdo.clone();
    let mu = ConditionalSpec::new("mu", UpdateRule::Metropolis { scale: (s2 / nf).sqrt() }, move |v: &[f64], _: &()| {
        let sd = (v[1] / nf).sqrt();
        let f_s = Distribution::normal(xbar, v[1] / nf)?;
        let (o, p) = normal_statistic_orientation(xbar, sd, lo, hi)?;
        let spec = BispatialSpec::new(h, pdo_c.clone(), f_s, o)?;
        b_density_for_pvalue(&spec, p)
    });
    let mut refs = bayes_sigma_references(n, xbar, s2, alpha0, beta0)?;
    refs.extend(fiducial_references(n, xbar, s2)?);
    ScenarioSpec::new(
        ScenarioConfig::StudentBispatial { n, xbar, s2, mu1, epsilon, alpha0, beta0, h_shape, pdo },
        vec![mu, variance_bayes(n, xbar, s2, alpha0, beta0)],
        refs,
        vec![xbar, s2],
        starts(n, xbar, s2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Density;
    use crate::diagnostics::ks_one_sample;
    use crate::distributions::std_normal_sf;
    use crate::gibbs::{GibbsConfig, ScanOrder};
    use crate::quadrature::integrate;

    fn run(spec: &ScenarioSpec, n: u64, seed: u64) -> crate::gibbs::Chain {
        spec.run(&spec.gibbs_config(n, 2000, seed, ScanOrder::UniformRandom)).unwrap()
    }

    fn assert_curve(spec: &ScenarioSpec, name: &str, expected: Distribution) {
        let r = spec.reference(name).unwrap();
        for i in 1..400 {
            let x = -10.0 + 0.2 * i as f64;
            let (a, b) = (r.density.pdf(x), expected.pdf(x));
            assert!((a - b).abs() <= 1e-13 * b.max(1.0), "{name} at {x}: {a} vs {b}");
        }
    }

    #[test]
    fn fiducial_reference_parameters() {
        let spec = student_fiducial(9, 2.7, 9.0).unwrap();
        assert_curve(&spec, "fiducial_mu", Distribution::non_std_t(8.0, 2.7, 1.0).unwrap());
        assert_curve(&spec, "fiducial_sigma_sq", Distribution::inv_gamma(4.0, 36.0).unwrap());
        assert!(student_fiducial(1, 2.7, 9.0).is_err());
        let tiny = student_fiducial(2, 0.0, 1.0).unwrap();
        run(&tiny, 3000, 1);
    }

    #[test]
    fn bayes_sigma_reference_parameters() {
        let spec = student_bayes_sigma(9, 2.7, 9.0, 4.0, 64.0).unwrap();
        assert_curve(&spec, "marginal_mu", Distribution::non_std_t(16.0, 2.7, (200.0f64 / 144.0).sqrt()).unwrap());
        assert_curve(&spec, "marginal_sigma_sq", Distribution::inv_gamma(8.0, 100.0).unwrap());
        // vanishing prior recovers the fiducial curves
        let flat = student_bayes_sigma(9, 2.7, 9.0, 1e-12, 1e-12).unwrap();
        let (a, b) = (flat.reference("marginal_mu").unwrap(), flat.reference("fiducial_mu").unwrap());
        for x in [0.0, 2.0, 2.7, 5.0] {
            assert!((a.density.pdf(x) - b.density.pdf(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn compatible_chains_match_closed_forms() {
        let spec = student_fiducial(9, 2.7, 9.0).unwrap();
        let chain = run(&spec, 200_000, 3);
        for (col, refname) in [("mu", "fiducial_mu"), ("sigma_sq", "fiducial_sigma_sq")] {
            let (d, _) = ks_one_sample(&chain.retained(col).unwrap(), spec.reference(refname).unwrap().density.as_ref()).unwrap();
            assert!(d < 0.01, "{col}: D = {d}");
        }
        let spec = student_bayes_sigma(9, 2.7, 9.0, 4.0, 64.0).unwrap();
        let chain = run(&spec, 200_000, 4);
        for (col, refname) in [("mu", "marginal_mu"), ("sigma_sq", "marginal_sigma_sq")] {
            let (d, _) = ks_one_sample(&chain.retained(col).unwrap(), spec.reference(refname).unwrap().density.as_ref()).unwrap();
            assert!(d < 0.01, "{col}: D = {d}");
        }
    }

    #[test]
    fn tprior_joint_reproduces_both_conditionals() {
        let data = (9, 2.7, 9.0);
        let prior = (17.0, -0.3, 4.0 / 3.0);
        let sig_fixed = 7.3;
        let mu_fixed = 1.1;
        let mu_cond = mu_posterior_tprior(17.0, -0.3, 4.0 / 3.0, 2.7, 9, sig_fixed).unwrap();
        let sig_cond = variance_conditional(sigma_hat_sq(9, 2.7, 9.0, mu_fixed), 9).unwrap();
        // normalise the joint slices by quadrature and compare to the inputs
        let z_mu = integrate(|m| tprior_joint_ln_density(m, sig_fixed, data, prior).exp(), f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let z_sig = integrate(|s| tprior_joint_ln_density(mu_fixed, s, data, prior).exp(), 0.0, f64::INFINITY).unwrap();
        for i in 0..200 {
            let m = -3.0 + 0.04 * i as f64;
            let a = tprior_joint_ln_density(m, sig_fixed, data, prior).exp() / z_mu;
            assert!((a - mu_cond.pdf(m)).abs() < 1e-8, "mu {m}");
            let s = 0.5 + 0.2 * i as f64;
            let b = tprior_joint_ln_density(mu_fixed, s, data, prior).exp() / z_sig;
            assert!((b - sig_cond.pdf(s)).abs() < 1e-8, "sigma_sq {s}");
        }
    }

    #[test]
    fn bayes_mu_chain_close_to_quadrature_marginals() {
        let spec = student_bayes_mu(9, 2.7, 9.0, 17.0, -0.3, 4.0 / 3.0).unwrap();
        let chain = run(&spec, 200_000, 5);
        for (col, refname, lo, hi) in [("mu", "marginal_mu", -4.0, 8.0), ("sigma_sq", "marginal_sigma_sq", 0.0, 150.0)] {
            let r = spec.reference(refname).unwrap();
            let total = integrate(|x| r.density.pdf(x), lo, hi).unwrap();
            assert!(total > 0.995 && total < 1.0 + 1e-6, "{refname} mass {total}");
            // binned total variation
            let xs = chain.retained(col).unwrap();
            let bins = 60;
            let w = (hi - lo) / bins as f64;
            let mut counts = vec![0f64; bins];
            for x in &xs {
                if *x >= lo && *x < hi {
                    counts[((x - lo) / w) as usize] += 1.0;
                }
            }
            let tv: f64 = (0..bins)
                .map(|b| {
                    let a = lo + b as f64 * w;
                    (counts[b] / xs.len() as f64 - (r.density.cdf(a + w) - r.density.cdf(a))).abs()
                })
                .sum::<f64>()
                * 0.5;
            assert!(tv < 0.02, "{col}: TV = {tv}");
        }
        // flat prior limit approaches the fiducial mean marginal
        let flat = student_bayes_mu(9, 2.7, 9.0, 1e6, 0.0, 1e6).unwrap();
        let (a, b) = (flat.reference("marginal_mu").unwrap(), flat.reference("fiducial_mu").unwrap());
        for x in [0.0, 2.7, 5.0] {
            assert!((a.density.pdf(x) - b.density.pdf(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn bispatial_pvalue_at_sigma_three() {
        let pdo = PdoCurve::PowerLaw { exponent: 0.6 };
        let (o, p, kappa) = student_bispatial_kappa(9, 2.7, 9.0, (-0.2, 0.2), &pdo).unwrap();
        assert_eq!(o, Orientation::Upper);
        assert!((p - std_normal_sf(2.5)).abs() < 1e-15);
        assert!((p - 0.0062097).abs() < 1e-7);
        assert!((kappa - 0.0474068).abs() < 1e-6);
    }

    #[test]
    fn bispatial_runs_and_identity_pdo_is_neutral() {
        let spec = ScenarioConfig::preset("student_bispatial").unwrap().build().unwrap();
        let chain = run(&spec, 20_000, 6);
        let mu = chain.retained("mu").unwrap();
        let near_zero = mu.iter().filter(|m| m.abs() <= 0.2).count() as f64 / mu.len() as f64;
        assert!(near_zero > 0.02, "{near_zero}");
        assert!(student_bispatial(9, 2.7, 9.0, 0.0, 0.0, PdoCurve::PowerLaw { exponent: 0.6 }, 4.0, 64.0, 4.0).is_err());

        // identity curve: the mean conditional is f_S exactly
        let ident = student_bispatial(9, 2.7, 9.0, 0.0, 0.2, PdoCurve::PowerLaw { exponent: 1.0 }, 4.0, 64.0, 4.0).unwrap();
        let v = [0.0, 9.0];
        let b = (ident.conditionals[0].builder)(&v, &()).unwrap();
        let f_s = Distribution::normal(2.7, 1.0).unwrap();
        let shift = b.ln_density(2.7) - f_s.ln_pdf(2.7);
        for x in [-1.0, -0.1, 0.0, 0.15, 3.0] {
            assert!((b.ln_density(x) - f_s.ln_pdf(x) - shift).abs() < 1e-12);
        }
        let chain = ident.run(&GibbsConfig { ..ident.gibbs_config(100_000, 2000, 7, ScanOrder::UniformRandom) }).unwrap();
        let reference = ident.reference("marginal_mu").unwrap();
        let (d, _) = ks_one_sample(&chain.retained("mu").unwrap(), reference.density.as_ref()).unwrap();
        assert!(d < 0.02, "D = {d}");
    }
}
