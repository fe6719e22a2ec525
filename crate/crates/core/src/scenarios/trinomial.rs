//! Trinomial proportions: a Bayesian conditional for the first, a step-inversion
//! fiducial conditional for the second.

use rand::RngCore;
use rand_distr::{Beta, Distribution as _};

use crate::bayes::{trinomial_pi1_posterior, GriddedLogDensity, SamplerTag};
use crate::distributions::Distribution;
use crate::error::{invalid, positive, Error, Result};
use crate::fiducial::{discrete_fiducial_stepinv, GpdFunction};
use crate::gibbs::{ConditionalSpec, FullConditional, UpdateRule};
use crate::quadrature::Quadrature;

use super::{ReferenceCurve, ScenarioConfig, ScenarioSpec, StartRange};

/// Step-inversion conditional of `pi2` given `pi1`.
///
/// The density is the grid-normalised kernel `g1(x2 | pi2)`, a scaled beta on
/// `[0, 1 - pi1]`; draws use that closed form instead of inverting the cdf.
pub struct StepInvConditional {
    density: GriddedLogDensity,
    beta: Beta<f64>,
    top: f64,
}

impl StepInvConditional {
    pub fn new(x2: u64, trials: u64, pi1: f64) -> Result<Self> {
        let density = discrete_fiducial_stepinv(x2, trials, pi1, &GpdFunction::Constant { level: 1.0 })?;
        let beta = Beta::new((x2 + 1) as f64, (trials - x2 + 1) as f64)
            .map_err(|e| invalid(format!("beta shapes: {e}")))?;
        Ok(Self { density, beta, top: 1.0 - pi1 })
    }

    pub fn density(&self) -> &GriddedLogDensity {
        &self.density
    }
}

impl FullConditional for StepInvConditional {
    fn ln_density(&self, x: f64) -> f64 {
        self.density.ln_kernel(x)
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.top * self.beta.sample(rng))
    }
}

/// Marginal of one proportion under the Jeffreys-prior joint
/// `pi1^(x1-1/2) pi2^(x2-1/2) (1-pi1-pi2)^(x3-1/2)`, integrating the other out
/// numerically. `which` is 0 for `pi1`, 1 for `pi2`.
pub fn jeffreys_marginal(counts: [u64; 3], which: usize) -> Result<GriddedLogDensity> {
    if which > 1 {
        return Err(invalid(format!("proportion index must be 0 or 1, got {which}")));
    }
    let [x1, x2, x3] = counts.map(|c| c as f64 - 0.5);
    let (own, other) = if which == 0 { (x1, x2) } else { (x2, x1) };
    let total = (counts[0] + counts[1] + counts[2]) as f64 + 1.5;
    let mean = (own + 1.0) / total;
    GriddedLogDensity::new(0.0, 1.0, (mean, (mean * (1.0 - mean) / total).sqrt()), SamplerTag::InverseCdf, move |p| {
        let top = 1.0 - p;
        if !(p > 0.0 && top > 0.0) {
            return f64::NEG_INFINITY;
        }
        let inner = Quadrature::new(1e-300, 1e-12)
            .integrate(|q| (other * q.ln() + x3 * (top - q).ln()).exp(), 0.0, top)
            .unwrap_or(f64::NAN);
        own * p.ln() + inner.ln()
    })
}

/// The two-proportion trinomial example with a Beta(alpha, beta) prior on `pi1`.
pub fn trinomial(counts: [u64; 3], alpha: f64, beta: f64) -> Result<ScenarioSpec> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    let [x1, x2, x3] = counts;
    if x1 + x2 + x3 == 0 {
        return Err(invalid("counts are all zero"));
    }
    if x2 + x3 == 0 {
        return Err(Error::InvalidParameter("step inversion for pi2 needs x2 + x3 >= 1 trials".into()));
    }
    let pi1 = ConditionalSpec::new("pi1", UpdateRule::Metropolis { scale: 0.1 }, move |v: &[f64], _: &()| {
        trinomial_pi1_posterior(alpha, beta, counts, v[1])
    });
    let pi2 = ConditionalSpec::new("pi2", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        StepInvConditional::new(x2, x2 + x3, v[0])
    });
    let n = (x1 + x2 + x3) as f64;
    let init = [(x1 as f64 + 0.5) / (n + 1.5), (x2 as f64 + 0.5) / (n + 1.5)];
    ScenarioSpec::new(
        ScenarioConfig::Trinomial { counts, alpha, beta },
        vec![pi1, pi2],
        vec![
            ReferenceCurve::new("prior_pi1", "pi1", Distribution::scaled_beta(alpha, beta, 0.0, 1.0)?),
            ReferenceCurve::new("jeffreys_pi1", "pi1", jeffreys_marginal(counts, 0)?),
            ReferenceCurve::new("jeffreys_pi2", "pi2", jeffreys_marginal(counts, 1)?),
        ],
        init.to_vec(),
        vec![StartRange::Interval { lo: 0.02, hi: 0.5 }, StartRange::Interval { lo: 0.02, hi: 0.45 }],
    )
}
