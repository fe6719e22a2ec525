//! Linear regression on three covariates with a normal prior on one slope and
//! a bispatial conditional for another.

use std::sync::OnceLock;

use nalgebra::{Matrix4, Vector4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::regression_beta1_posterior;
use crate::bispatial::{b_density_for_pvalue, normal_statistic_orientation, BispatialSpec, PdoCurve};
use crate::distributions::Distribution;
use crate::error::{finite, invalid, positive, Result};
use crate::fiducial::variance_conditional;
use crate::gibbs::{ConditionalSpec, EngineRng, UpdateRule};

use super::{ReferenceCurve, ScenarioConfig, ScenarioSpec, StartRange, PRESET_DATA_SEED};

/// Covariate sums every synthetic design satisfies:
/// `sum x1, sum x2, sum x3, sum x1 x2, sum x1 x3, sum x2 x3`.
pub const DESIGN_SUMS: [i32; 6] = [-1, 2, 1, 3, 4, -3];
const DESIGN_ROWS: usize = 18;

const PARAMS: [&str; 5] = ["beta0", "beta1", "beta2", "beta3", "sigma_sq"];

/// Responses and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    pub x: Vec<[f64; 3]>,
    pub y: Vec<f64>,
}

/// Where the regression data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RegressionSource {
    Synthetic { seed: u64, beta: [f64; 4], sigma: f64 },
    /// Rows of `[x1, x2, x3, y]`.
    Inline { rows: Vec<[f64; 4]> },
}

impl RegressionSource {
    pub fn preset() -> Self {
        Self::Synthetic { seed: PRESET_DATA_SEED, beta: [0.0, 5.0, -2.0, 1.0], sigma: 1.5 }
    }

    pub fn load(&self) -> Result<RegressionData> {
        match self {
            Self::Synthetic { seed, beta, sigma } => synthetic_regression(*seed, *beta, *sigma),
            Self::Inline { rows } => Ok(RegressionData {
                x: rows.iter().map(|r| [r[0], r[1], r[2]]).collect(),
                y: rows.iter().map(|r| r[3]).collect(),
            }),
        }
    }
}

/// Every choice of 18 distinct points of `{-1, 0, 1}^3` meeting [`DESIGN_SUMS`],
/// as sorted index lists into the grid (index `9 a + 3 b + c` for `(a-1, b-1, c-1)`).
pub fn regression_designs() -> &'static [Vec<usize>] {
    static DESIGNS: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    DESIGNS.get_or_init(|| {
        // The full grid sums to zero in every statistic, so enumerate the nine
        // excluded points, whose sums must be the negated targets.
        let feats: Vec<[i32; 6]> = (0..27i32)
            .map(|i| {
                let (a, b, c) = (i / 9 - 1, i / 3 % 3 - 1, i % 3 - 1);
                [a, b, c, a * b, a * c, b * c]
            })
            .collect();
        let target = DESIGN_SUMS.map(|s| -s);
        let mut found = Vec::new();
        let mut picked = Vec::with_capacity(9);
        fn walk(
            start: usize,
            acc: [i32; 6],
            feats: &[[i32; 6]],
            target: &[i32; 6],
            picked: &mut Vec<usize>,
            found: &mut Vec<Vec<usize>>,
        ) {
            let left = 27 - DESIGN_ROWS - picked.len();
            if left == 0 {
                if acc == *target {
                    found.push((0..27).filter(|i| !picked.contains(i)).collect());
                }
                return;
            }
            // each point moves each sum by at most one
            if acc.iter().zip(target).any(|(a, t)| (a - t).unsigned_abs() as usize > left) {
                return;
            }
            for i in start..=27 - left {
                picked.push(i);
                let mut next = acc;
                for (n, f) in next.iter_mut().zip(&feats[i]) {
                    *n += f;
                }
                walk(i + 1, next, feats, target, picked, found);
                picked.pop();
            }
        }
        walk(0, [0; 6], &feats, &target, &mut picked, &mut found);
        found
    })
}

/// 18 covariate triples drawn without replacement from `{-1, 0, 1}^3` subject
/// to [`DESIGN_SUMS`], responses `y = b0 + b1 x1 + b2 x2 + b3 x3 + sigma e`.
///
/// A uniformly chosen admissible design has the same law as rejection
/// sampling of unconstrained draws, which would almost never succeed.
pub fn synthetic_regression(seed: u64, beta: [f64; 4], sigma: f64) -> Result<RegressionData> {
    for b in beta {
        finite("beta", b)?;
    }
    positive("sigma", sigma)?;
    let designs = regression_designs();
    if designs.is_empty() {
        return Err(invalid("no covariate design meets the required sums"));
    }
    let mut rng = EngineRng::seed_from_u64(seed);
    let mut rows = designs[rng.random_range(0..designs.len())].clone();
    rows.shuffle(&mut rng);
    let x: Vec<[f64; 3]> = rows
        .iter()
        .map(|&i| [(i / 9) as f64 - 1.0, (i / 3 % 3) as f64 - 1.0, (i % 3) as f64 - 1.0])
        .collect();
    let y = x
        .iter()
        .map(|r| {
            let e: f64 = rng.sample(StandardNormal);
            beta[0] + beta[1] * r[0] + beta[2] * r[1] + beta[3] * r[2] + sigma * e
        })
        .collect();
    Ok(RegressionData { x, y })
}

/// Sufficient statistics with an intercept column: `G = Z'Z`, `c = Z'y`.
#[derive(Debug, Clone, Copy)]
struct Sums {
    n: u64,
    g: [[f64; 4]; 4],
    c: [f64; 4],
    yy: f64,
}

impl Sums {
    fn new(d: &RegressionData) -> Result<Self> {
        if d.x.len() != d.y.len() {
            return Err(invalid("covariate and response lengths differ"));
        }
        let mut s = Sums { n: d.y.len() as u64, g: [[0.0; 4]; 4], c: [0.0; 4], yy: 0.0 };
        for (x, &y) in d.x.iter().zip(&d.y) {
            let z = [1.0, x[0], x[1], x[2]];
            for (j, zj) in z.iter().enumerate() {
                s.c[j] += zj * y;
                for (k, zk) in z.iter().enumerate() {
                    s.g[j][k] += zj * zk;
                }
            }
            s.yy += y * y;
        }
        if !s.c.iter().chain([&s.yy]).all(|v| v.is_finite()) {
            return Err(invalid("data must be finite"));
        }
        if s.n < 5 {
            return Err(invalid(format!("regression needs at least 5 observations, got {}", s.n)));
        }
        if let Some(j) = (1..4).find(|&j| !(s.g[j][j] > 0.0)) {
            return Err(invalid(format!("degenerate design: sum of x{j}^2 is zero")));
        }
        Ok(s)
    }

    /// Least-squares estimate of coefficient `j` with the others held at `beta`.
    fn partial_hat(&self, j: usize, beta: &[f64]) -> f64 {
        let others: f64 = (0..4).filter(|&k| k != j).map(|k| self.g[j][k] * beta[k]).sum();
        (self.c[j] - others) / self.g[j][j]
    }

    fn rss(&self, beta: &[f64]) -> f64 {
        let mut q = self.yy;
        for j in 0..4 {
            q -= 2.0 * beta[j] * self.c[j];
            for k in 0..4 {
                q += beta[j] * self.g[j][k] * beta[k];
            }
        }
        q.max(0.0)
    }
}

/// Ordinary least squares quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub n: u64,
    pub beta_hat: [f64; 4],
    pub rss_min: f64,
    /// `(Z'Z)^-1`.
    pub unscaled_cov: [[f64; 4]; 4],
}

impl RegressionFit {
    pub fn new(data: &RegressionData) -> Result<Self> {
        let s = Sums::new(data)?;
        let g = Matrix4::from_fn(|i, j| s.g[i][j]);
        let inv = g.try_inverse().ok_or_else(|| invalid("design matrix is singular"))?;
        let b = inv * Vector4::from(s.c);
        let beta_hat = [b[0], b[1], b[2], b[3]];
        Ok(Self {
            n: s.n,
            beta_hat,
            rss_min: s.rss(&beta_hat),
            unscaled_cov: std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)])),
        })
    }

    /// Marginal of coefficient `j` under the all-fiducial joint.
    pub fn coefficient_marginal(&self, j: usize) -> Result<Distribution> {
        let df = self.n as f64 - 4.0;
        Distribution::non_std_t(df, self.beta_hat[j], (self.rss_min / df * self.unscaled_cov[j][j]).sqrt())
    }

    /// Marginal of the variance under the all-fiducial joint.
    pub fn variance_marginal(&self) -> Result<Distribution> {
        Distribution::inv_gamma(0.5 * (self.n as f64 - 4.0), 0.5 * self.rss_min)
    }
}

fn coefficient_fiducial(s: Sums, j: usize) -> ConditionalSpec<()> {
    ConditionalSpec::new(PARAMS[j], UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        Distribution::normal(s.partial_hat(j, v), v[4] / s.g[j][j])
    })
}

fn variance_fiducial(s: Sums) -> ConditionalSpec<()> {
    ConditionalSpec::new("sigma_sq", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        variance_conditional(s.rss(&v[..4]) / s.n as f64, s.n)
    })
}

fn references(fit: &RegressionFit) -> Result<Vec<ReferenceCurve>> {
    let mut refs = (0..4)
        .map(|j| Ok(ReferenceCurve::new(&format!("fiducial_{}", PARAMS[j]), PARAMS[j], fit.coefficient_marginal(j)?)))
        .collect::<Result<Vec<_>>>()?;
    refs.push(ReferenceCurve::new("fiducial_sigma_sq", "sigma_sq", fit.variance_marginal()?));
    refs.push(ReferenceCurve::sqrt_of("fiducial_sigma", "sigma_sq", fit.variance_marginal()?));
    Ok(refs)
}

fn starts(fit: &RegressionFit) -> (Vec<f64>, Vec<StartRange>) {
    let s2 = fit.rss_min / (fit.n as f64 - 4.0);
    let mut init = fit.beta_hat.to_vec();
    init.push(s2);
    let mut ranges: Vec<StartRange> = (0..4)
        .map(|j| StartRange::Real { centre: fit.beta_hat[j], spread: (s2 * fit.unscaled_cov[j][j]).sqrt() })
        .collect();
    ranges.push(StartRange::Positive { centre: s2 });
    (init, ranges)
}

/// The five-parameter example: fiducial conditionals for `beta0`, `beta2` and
/// the variance, a normal-prior posterior for `beta1` and a bispatial
/// conditional for `beta3` around the hypothesis `|beta3| <= delta`.
pub fn regression(
    data: &RegressionData,
    mu0: f64,
    sigma0: f64,
    delta: f64,
    pdo: PdoCurve,
    h_shape: f64,
) -> Result<ScenarioSpec> {
    finite("mu0", mu0)?;
    positive("sigma0", sigma0)?;
    positive("delta", delta)?;
    pdo.validate()?;
    let s = Sums::new(data)?;
    let fit = RegressionFit::new(data)?;
    let h = Distribution::scaled_beta(h_shape, h_shape, -delta, delta)?;
    let sigma0_sq = sigma0 * sigma0;
    let beta1 = ConditionalSpec::new("beta1", UpdateRule::DirectSample, move |v: &[f64], _: &()| {
        regression_beta1_posterior(mu0, sigma0_sq, v[4], s.g[1][1], s.partial_hat(1, v))
    });
    let (init, ranges) = starts(&fit);
    let step = (init[4] / s.g[3][3]).sqrt();
    let pdo_c = pdo.clone();
    let beta3 = ConditionalSpec::new("beta3", UpdateRule::Metropolis { scale: step }, move |v: &[f64], _: &()| {
        let stat = s.partial_hat(3, v);
        let var = v[4] / s.g[3][3];
        let f_s = Distribution::normal(stat, var)?;
        let (o, p) = normal_statistic_orientation(stat, var.sqrt(), -delta, delta)?;
        b_density_for_pvalue(&BispatialSpec::new(h, pdo_c.clone(), f_s, o)?, p)
    });
    let mut refs = references(&fit)?;
    refs.push(ReferenceCurve::new("prior_beta1", "beta1", Distribution::normal(mu0, sigma0_sq)?));
    let source = RegressionSource::Inline { rows: inline_rows(data) };
    ScenarioSpec::new(
        ScenarioConfig::Regression { mu0, sigma0, delta, h_shape, pdo, data: source },
        vec![coefficient_fiducial(s, 0), beta1, coefficient_fiducial(s, 2), beta3, variance_fiducial(s)],
        refs,
        init,
        ranges,
    )
}

/// Every conditional fiducial; compatible, with Student t coefficient
/// marginals and an inverse-gamma variance marginal.
pub fn regression_all_fiducial(data: &RegressionData) -> Result<ScenarioSpec> {
    let s = Sums::new(data)?;
    let fit = RegressionFit::new(data)?;
    let (init, ranges) = starts(&fit);
    ScenarioSpec::new(
        ScenarioConfig::RegressionFiducial { data: RegressionSource::Inline { rows: inline_rows(data) } },
        vec![
            coefficient_fiducial(s, 0),
            coefficient_fiducial(s, 1),
            coefficient_fiducial(s, 2),
            coefficient_fiducial(s, 3),
            variance_fiducial(s),
        ],
        references(&fit)?,
        init,
        ranges,
    )
}

fn inline_rows(d: &RegressionData) -> Vec<[f64; 4]> {
    d.x.iter().zip(&d.y).map(|(x, &y)| [x[0], x[1], x[2], y]).collect()
}
