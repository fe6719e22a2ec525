//! Gibbs sampling over a set of full conditionals.
//!
//! Each parameter has a [`ConditionalSpec`] whose builder turns the current
//! parameter vector and the data into a [`FullConditional`]. A transition is
//! either one full sweep in a fixed order (only the post-sweep state is
//! recorded) or a single coordinate chosen uniformly at random. Coordinates
//! without a direct sampler are moved by a random-walk Metropolis step whose
//! scale is tuned during burn-in only.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::GriddedLogDensity;
use crate::bispatial::BDensity;
use crate::density::Density;
use crate::distributions::Distribution;
use crate::error::{invalid, Error, Result};

/// Generator used for every chain.
pub type EngineRng = ChaCha8Rng;

/// Proposals between step-scale adjustments during burn-in.
pub const ADAPT_WINDOW: u64 = 200;
/// Batches used for Monte Carlo standard errors.
pub const N_BATCHES: usize = 32;

/// A full conditional density for one coordinate.
pub trait FullConditional: Send + Sync {
    /// Log density up to an additive constant.
    fn ln_density(&self, x: f64) -> f64;

    /// An exact draw. Metropolis-only targets return [`Error::Unsupported`].
    fn draw(&self, _rng: &mut dyn RngCore) -> Result<f64> {
        Err(Error::Unsupported("conditional has no direct sampler".into()))
    }
}

impl FullConditional for Distribution {
    fn ln_density(&self, x: f64) -> f64 {
        self.logpdf(x)
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.sample(rng))
    }
}

impl FullConditional for GriddedLogDensity {
    fn ln_density(&self, x: f64) -> f64 {
        self.ln_kernel(x)
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64> {
        self.sample_inverse_cdf(rng)
    }
}

impl<D: Density + Clone> FullConditional for BDensity<D> {
    fn ln_density(&self, x: f64) -> f64 {
        self.ln_pdf(x)
    }
    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64> {
        let u: f64 = rng.random();
        self.quantile(u.clamp(1e-300, 1.0 - f64::EPSILON))
    }
}

/// A Metropolis-only target given by a closure.
pub struct LogDensityFn<F>(pub F);

impl<F: Fn(f64) -> f64 + Send + Sync> FullConditional for LogDensityFn<F> {
    fn ln_density(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

/// How a coordinate is moved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    DirectSample,
    /// Random-walk Metropolis with this initial proposal sd.
    Metropolis { scale: f64 },
}

type Builder<T> = Arc<dyn Fn(&[f64], &T) -> Result<Box<dyn FullConditional>> + Send + Sync>;

/// One parameter's full conditional. The builder sees the whole current vector
/// (its own entry included, which it must ignore) and the data.
pub struct ConditionalSpec<T: ?Sized> {
    pub name: String,
    pub builder: Builder<T>,
    pub update: UpdateRule,
}

impl<T: ?Sized> Clone for ConditionalSpec<T> {
    fn clone(&self) -> Self {
        Self { name: self.name.clone(), builder: Arc::clone(&self.builder), update: self.update }
    }
}

impl<T: ?Sized> fmt::Debug for ConditionalSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConditionalSpec").field("name", &self.name).field("update", &self.update).finish()
    }
}

impl<T: ?Sized> ConditionalSpec<T> {
    pub fn new<F, C>(name: impl Into<String>, update: UpdateRule, builder: F) -> Self
    where
        F: Fn(&[f64], &T) -> Result<C> + Send + Sync + 'static,
        C: FullConditional + 'static,
    {
        Self {
            name: name.into(),
            builder: Arc::new(move |v, d| builder(v, d).map(|c| Box::new(c) as Box<dyn FullConditional>)),
            update,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "snake_case")]
pub enum ScanOrder {
    /// Sweep the coordinates in this order every transition.
    Fixed(Vec<usize>),
    /// Update one coordinate, chosen with probability `1/k`.
    UniformRandom,
}

impl ScanOrder {
    pub fn validate(&self, k: usize) -> Result<()> {
        if let ScanOrder::Fixed(order) = self {
            let mut seen = vec![false; k];
            for &i in order {
                if i >= k || seen[i] {
                    return Err(invalid(format!("fixed scan {order:?} is not a permutation of 0..{k}")));
                }
                seen[i] = true;
            }
            if order.len() != k {
                return Err(invalid(format!("fixed scan {order:?} is not a permutation of 0..{k}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub n_transitions: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub scan: ScanOrder,
    pub initial: Vec<f64>,
}

impl GibbsConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.n_transitions == 0 {
            return Err(invalid("n_transitions must be > 0"));
        }
        if self.burn_in >= self.n_transitions {
            return Err(invalid(format!(
                "burn_in ({}) must be below n_transitions ({})",
                self.burn_in, self.n_transitions
            )));
        }
        if self.initial.len() != k {
            return Err(invalid(format!("expected {k} initial values, got {}", self.initial.len())));
        }
        if let Some(x) = self.initial.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("initial value {x}")));
        }
        self.scan.validate(k)
    }
}

/// Proposal and acceptance counts for one Metropolis coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetropolisStats {
    pub burn_in_proposals: u64,
    pub burn_in_accepted: u64,
    pub proposals: u64,
    pub accepted: u64,
    pub final_scale: f64,
}

impl MetropolisStats {
    /// Acceptance rate after burn-in, or over burn-in if nothing followed it.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals > 0 {
            self.accepted as f64 / self.proposals as f64
        } else if self.burn_in_proposals > 0 {
            self.burn_in_accepted as f64 / self.burn_in_proposals as f64
        } else {
            f64::NAN
        }
    }
}

/// Recorded states, one row per transition (burn-in rows included).
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    names: Vec<String>,
    values: Vec<f64>,
    config: GibbsConfig,
    metropolis: Vec<Option<MetropolisStats>>,
    update_counts: Vec<u64>,
}

impl Chain {
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn n_params(&self) -> usize {
        self.names.len()
    }
    pub fn n_rows(&self) -> usize {
        self.values.len() / self.names.len()
    }
    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.n_params();
        &self.values[i * k..(i + 1) * k]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_params())
    }
    pub fn config(&self) -> &GibbsConfig {
        &self.config
    }
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
    /// Column `j` from row `skip` on.
    pub fn column(&self, j: usize, skip: usize) -> Vec<f64> {
        self.rows().skip(skip).map(|r| r[j]).collect()
    }
    /// Column for a named parameter with the configured burn-in removed.
    pub fn retained(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name).ok_or_else(|| invalid(format!("no parameter `{name}`")))?;
        Ok(self.column(j, self.config.burn_in as usize))
    }
    /// `None` for directly sampled coordinates.
    pub fn metropolis_stats(&self, j: usize) -> Option<MetropolisStats> {
        self.metropolis[j]
    }
    /// Number of times each coordinate was updated over the whole run.
    pub fn update_counts(&self) -> &[u64] {
        &self.update_counts
    }
}

/// Random-walk Metropolis step with a normal proposal.
pub fn metropolis_update(
    ln_density: impl Fn(f64) -> f64,
    current: f64,
    scale: f64,
    rng: &mut dyn RngCore,
) -> (f64, bool) {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let proposal = current + scale * z;
    let delta = ln_density(proposal) - ln_density(current);
    if delta.is_nan() {
        return (current, false);
    }
    if delta >= 0.0 {
        return (proposal, true);
    }
    let u: f64 = rng.random();
    if u.ln() < delta {
        (proposal, true)
    } else {
        (current, false)
    }
}

struct Updater<'a, T: ?Sized> {
    specs: &'a [ConditionalSpec<T>],
    data: &'a T,
    burn_in: u64,
    stats: Vec<Option<MetropolisStats>>,
    scales: Vec<f64>,
    window: Vec<(u64, u64)>,
    counts: Vec<u64>,
}

impl<T: ?Sized> Updater<'_, T> {
    fn update(&mut self, j: usize, state: &mut [f64], transition: u64, rng: &mut EngineRng) -> Result<()> {
        let spec = &self.specs[j];
        let cond = (spec.builder)(state, self.data)?;
        self.counts[j] += 1;
        match spec.update {
            UpdateRule::DirectSample => {
                let x = cond.draw(rng)?;
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("draw for `{}`: {x}", spec.name)));
                }
                state[j] = x;
            }
            UpdateRule::Metropolis { .. } => {
                let current = state[j];
                if !cond.ln_density(current).is_finite() {
                    return Err(Error::NonFinite(format!(
                        "log density of `{}` at current value {current}",
                        spec.name
                    )));
                }
                let (x, ok) = metropolis_update(|v| cond.ln_density(v), current, self.scales[j], rng);
                state[j] = x;
                let st = self.stats[j].as_mut().expect("metropolis stats");
                if transition < self.burn_in {
                    st.burn_in_proposals += 1;
                    st.burn_in_accepted += ok as u64;
                    let w = &mut self.window[j];
                    w.0 += 1;
                    w.1 += ok as u64;
                    if w.0 == ADAPT_WINDOW {
                        let rate = w.1 as f64 / w.0 as f64;
                        if rate > 0.5 {
                            self.scales[j] *= 1.1;
                        } else if rate < 0.25 {
                            self.scales[j] *= 0.9;
                        }
                        *w = (0, 0);
                    }
                } else {
                    st.proposals += 1;
                    st.accepted += ok as u64;
                }
            }
        }
        Ok(())
    }

    fn check_stuck(&self) -> Result<()> {
        for (spec, st) in self.specs.iter().zip(&self.stats) {
            if let Some(st) = st {
                let (p, a) = if st.burn_in_proposals > 0 {
                    (st.burn_in_proposals, st.burn_in_accepted)
                } else {
                    (st.proposals, st.accepted)
                };
                if p > 0 && a == 0 {
                    return Err(Error::StuckChain(format!(
                        "no Metropolis proposal for `{}` was accepted in {p} attempts",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Runs one chain. Deterministic in the seed.
pub fn run_chain<T: ?Sized>(conditionals: &[ConditionalSpec<T>], config: &GibbsConfig, data: &T) -> Result<Chain> {
    let k = conditionals.len();
    if k == 0 {
        return Err(invalid("at least one conditional is required"));
    }
    config.validate(k)?;
    let mut scales = vec![0.0; k];
    let mut stats = vec![None; k];
    for (j, c) in conditionals.iter().enumerate() {
        if let UpdateRule::Metropolis { scale } = c.update {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(invalid(format!("Metropolis scale for `{}` must be > 0", c.name)));
            }
            scales[j] = scale;
            stats[j] = Some(MetropolisStats::default());
        }
    }
    let mut up = Updater {
        specs: conditionals,
        data,
        burn_in: config.burn_in,
        stats,
        scales,
        window: vec![(0, 0); k],
        counts: vec![0; k],
    };
    let mut rng = EngineRng::seed_from_u64(config.seed);
    let mut state = config.initial.clone();
    let n = config.n_transitions as usize;
    let mut values = Vec::with_capacity(n * k);
    for t in 0..config.n_transitions {
        match &config.scan {
            ScanOrder::Fixed(order) => {
                for &j in order {
                    up.update(j, &mut state, t, &mut rng)?;
                }
            }
            ScanOrder::UniformRandom => {
                let j = rng.random_range(0..k);
                up.update(j, &mut state, t, &mut rng)?;
            }
        }
        if t + 1 == config.burn_in {
            up.check_stuck()?;
        }
        values.extend_from_slice(&state);
    }
    up.check_stuck()?;
    let metropolis = up
        .stats
        .iter()
        .zip(&up.scales)
        .map(|(s, &sc)| s.map(|s| MetropolisStats { final_scale: sc, ..s }))
        .collect();
    Ok(Chain {
        names: conditionals.iter().map(|c| c.name.clone()).collect(),
        values,
        config: config.clone(),
        metropolis,
        update_counts: up.counts,
    })
}

/// Runs one chain per config on scoped threads; results keep the input order.
pub fn run_chains<T: ?Sized + Sync>(
    conditionals: &[ConditionalSpec<T>],
    configs: &[GibbsConfig],
    data: &T,
) -> Vec<Result<Chain>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| s.spawn(move || run_chain(conditionals, cfg, data)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("chain thread panicked".into()))))
            .collect()
    })
}

/// Mean of `h` over the retained rows with a batch-means standard error.
pub fn monte_carlo_expectation(chain: &Chain, h: impl Fn(&[f64]) -> f64, burn_in: usize) -> Result<(f64, f64)> {
    if burn_in >= chain.n_rows() {
        return Err(invalid(format!("burn_in {burn_in} leaves no rows out of {}", chain.n_rows())));
    }
    let vals: Vec<f64> = chain.rows().skip(burn_in).map(h).collect();
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("expectation integrand gave {v}")));
    }
    batch_means(&vals)
}

/// Mean and batch-means standard error of a series, using [`N_BATCHES`] batches.
pub fn batch_means(vals: &[f64]) -> Result<(f64, f64)> {
    if vals.len() < N_BATCHES {
        return Err(invalid(format!("need at least {N_BATCHES} values, got {}", vals.len())));
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let size = vals.len() / N_BATCHES;
    let bm: Vec<f64> = vals.chunks_exact(size).take(N_BATCHES).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let bbar = bm.iter().sum::<f64>() / N_BATCHES as f64;
    let var = bm.iter().map(|b| (b - bbar).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
    Ok((mean, (var / N_BATCHES as f64).sqrt()))
}
