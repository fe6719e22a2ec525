//! Convergence and compatibility diagnostics for Gibbs output.
//!
//! The verdict thresholds below are engine policy:
//!
//! | verdict        | rule                                              |
//! |----------------|---------------------------------------------------|
//! | `undetectable` | every KS p > 0.01 and every Fisher \|z\| < 2.58    |
//! | `negligible`   | every KS D < 0.01                                 |
//! | `small`        | every KS D < 0.05                                 |
//! | `substantial`  | otherwise                                         |
//!
//! Chain output is autocorrelated, so the KS and Fisher-z tests inside
//! [`scan_order_sensitivity`] use batch-means effective sample sizes in place
//! of the raw row counts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{invalid, Error, Result};
use crate::gibbs::{run_chains, Chain, ConditionalSpec, GibbsConfig, ScanOrder, N_BATCHES};

pub const P_THRESHOLD: f64 = 0.01;
pub const Z_THRESHOLD: f64 = 2.58;
pub const NEGLIGIBLE_D: f64 = 0.01;
pub const SMALL_D: f64 = 0.05;

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p value for statistic `d` with effective size `ne`.
pub fn ks_pvalue(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn ks_two_sample_d(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Classical two-sample KS statistic and asymptotic p value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS test needs non-empty samples"));
    }
    let d = ks_two_sample_d(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok((d, ks_pvalue(d, na * nb / (na + nb))))
}

/// One-sample KS statistic against a reference cdf.
pub fn ks_one_sample(a: &[f64], reference: &dyn Density) -> Result<(f64, f64)> {
    if a.is_empty() {
        return Err(invalid("KS test needs a non-empty sample"));
    }
    let xs = sorted(a);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = reference.cdf(xs[i]);
        d = d.max(f - i as f64 / n).max(j as f64 / n - f);
        i = j;
    }
    Ok((d, ks_pvalue(d, n)))
}

/// Batch-means effective sample size, capped at the series length.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 * N_BATCHES {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let size = n / N_BATCHES;
    let bm: Vec<f64> = x.chunks_exact(size).take(N_BATCHES).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let bbar = bm.iter().sum::<f64>() / N_BATCHES as f64;
    let bvar = bm.iter().map(|b| (b - bbar).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
    if !(bvar > 0.0) || !(var > 0.0) {
        return n as f64;
    }
    (n as f64 * var / (size as f64 * bvar)).clamp(1.0, n as f64)
}

/// Potential scale reduction over equally long series.
pub fn gelman_rubin_series(series: &[Vec<f64>]) -> Result<f64> {
    let m = series.len();
    if m < 2 {
        return Err(invalid("R-hat needs at least two chains"));
    }
    let n = series[0].len();
    if n < 100 || series.iter().any(|s| s.len() != n) {
        return Err(invalid("R-hat needs equal retained lengths of at least 100"));
    }
    let nf = n as f64;
    let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf / (m - 1) as f64 * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = series
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if !(w > 0.0) {
        return Err(Error::Domain("R-hat undefined: zero within-chain variance".into()));
    }
    Ok(((w * (nf - 1.0) / nf + b / nf) / w).sqrt())
}

/// R-hat for one parameter over chains, each with its own burn-in removed.
pub fn gelman_rubin(chains: &[Chain], parameter: &str) -> Result<f64> {
    let series = chains.iter().map(|c| c.retained(parameter)).collect::<Result<Vec<_>>>()?;
    gelman_rubin_series(&series)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Two-sample Fisher-z statistic for a difference of correlations.
pub fn fisher_z(r1: f64, n1: f64, r2: f64, n2: f64) -> Result<f64> {
    if !(n1 > 3.0 && n2 > 3.0) {
        return Err(invalid("Fisher z needs more than three observations per sample"));
    }
    let clamp = |r: f64| r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    Ok((clamp(r1).atanh() - clamp(r2).atanh()) / (1.0 / (n1 - 3.0) + 1.0 / (n2 - 3.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Undetectable,
    Negligible,
    Small,
    Substantial,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Undetectable => "undetectable",
            Verdict::Negligible => "negligible",
            Verdict::Small => "small",
            Verdict::Substantial => "substantial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsComparison {
    pub parameter: String,
    pub runs: (usize, usize),
    pub d: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationComparison {
    pub pair: (String, String),
    pub runs: (usize, usize),
    pub r: (f64, f64),
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub orders: Vec<Vec<usize>>,
    pub rhat: Vec<(String, f64)>,
    pub ks: Vec<KsComparison>,
    pub correlations: Vec<CorrelationComparison>,
    /// Smallest post-burn-in Metropolis acceptance rate, if any coordinate uses Metropolis.
    pub min_acceptance: Option<f64>,
    /// Largest run of identical retained rows seen in any chain.
    pub longest_constant_run: usize,
    pub verdict: Verdict,
}

/// Verdict from KS and Fisher-z results.
pub fn classify(ks: &[KsComparison], corr: &[CorrelationComparison]) -> Verdict {
    if ks.iter().all(|k| k.p > P_THRESHOLD) && corr.iter().all(|c| c.z.abs() < Z_THRESHOLD) {
        Verdict::Undetectable
    } else if ks.iter().all(|k| k.d < NEGLIGIBLE_D) {
        Verdict::Negligible
    } else if ks.iter().all(|k| k.d < SMALL_D) {
        Verdict::Small
    } else {
        Verdict::Substantial
    }
}

fn longest_constant_run(chain: &Chain) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev: Option<&[f64]> = None;
    for r in chain.rows().skip(chain.config().burn_in as usize) {
        run = if prev == Some(r) { run + 1 } else { 1 };
        best = best.max(run);
        prev = Some(r);
    }
    best
}

/// Builds a report from chains already run under fixed scan orders.
pub fn compare_chains(chains: &[Chain]) -> Result<DiagnosticsReport> {
    if chains.len() < 2 {
        return Err(invalid("at least two runs are needed to compare scan orders"));
    }
    let names = chains[0].names().to_vec();
    if chains.iter().any(|c| c.names() != names.as_slice()) {
        return Err(invalid("runs must share the same parameters"));
    }
    let cols: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| (0..names.len()).map(|j| c.column(j, c.config().burn_in as usize)).collect())
        .collect();
    let ess: Vec<Vec<f64>> = cols.iter().map(|cs| cs.iter().map(|c| effective_sample_size(c)).collect()).collect();
    let mut ks = Vec::new();
    let mut correlations = Vec::new();
    for a in 0..chains.len() {
        for b in a + 1..chains.len() {
            for (j, name) in names.iter().enumerate() {
                let d = ks_two_sample_d(&cols[a][j], &cols[b][j]);
                let (na, nb) = (ess[a][j], ess[b][j]);
                ks.push(KsComparison { parameter: name.clone(), runs: (a, b), d, p: ks_pvalue(d, na * nb / (na + nb)) });
            }
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    let ra = correlation(&cols[a][i], &cols[a][j]);
                    let rb = correlation(&cols[b][i], &cols[b][j]);
                    let na = ess[a][i].min(ess[a][j]);
                    let nb = ess[b][i].min(ess[b][j]);
                    let z = fisher_z(ra, na, rb, nb)?;
                    correlations.push(CorrelationComparison {
                        pair: (names[i].clone(), names[j].clone()),
                        runs: (a, b),
                        r: (ra, rb),
                        z,
                    });
                }
            }
        }
    }
    let lens: Vec<usize> = cols.iter().map(|c| c[0].len()).collect();
    let rhat = if lens.iter().all(|&l| l == lens[0] && l >= 100) {
        names
            .iter()
            .enumerate()
            .map(|(j, n)| {
                let series: Vec<Vec<f64>> = cols.iter().map(|c| c[j].clone()).collect();
                Ok((n.clone(), gelman_rubin_series(&series).unwrap_or(f64::NAN)))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let min_acceptance = chains
        .iter()
        .flat_map(|c| (0..c.n_params()).filter_map(move |j| c.metropolis_stats(j)))
        .map(|s| s.acceptance_rate())
        .reduce(f64::min);
    let orders = chains
        .iter()
        .map(|c| match &c.config().scan {
            ScanOrder::Fixed(o) => o.clone(),
            ScanOrder::UniformRandom => Vec::new(),
        })
        .collect();
    let verdict = classify(&ks, &correlations);
    Ok(DiagnosticsReport {
        orders,
        rhat,
        ks,
        correlations,
        min_acceptance,
        longest_constant_run: chains.iter().map(longest_constant_run).max().unwrap_or(0),
        verdict,
    })
}

/// Runs one chain per fixed-order config (concurrently) and compares them.
pub fn scan_order_sensitivity<T: ?Sized + Sync>(
    conditionals: &[ConditionalSpec<T>],
    data: &T,
    runs: &[GibbsConfig],
) -> Result<DiagnosticsReport> {
    if runs.len() < 2 {
        return Err(invalid("scan-order sensitivity needs at least two runs"));
    }
    if runs.iter().any(|r| !matches!(r.scan, ScanOrder::Fixed(_))) {
        return Err(invalid("scan-order sensitivity compares fixed scan orders only"));
    }
    let chains = run_chains(conditionals, runs, data).into_iter().collect::<Result<Vec<_>>>()?;
    compare_chains(&chains)
}

impl DiagnosticsReport {
    /// Structured plain-text rendering.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "verdict: {}", self.verdict);
        let _ = writeln!(
            s,
            "policy: undetectable = all KS p > {P_THRESHOLD} and all |z| < {Z_THRESHOLD}; negligible = all D < {NEGLIGIBLE_D}; small = all D < {SMALL_D}"
        );
        for (i, o) in self.orders.iter().enumerate() {
            if o.is_empty() {
                let _ = writeln!(s, "run {i}: random scan");
            } else {
                let _ = writeln!(s, "run {i}: order {o:?}");
            }
        }
        let _ = writeln!(s, "[rhat]");
        for (n, r) in &self.rhat {
            let _ = writeln!(s, "{n} {r:.6}");
        }
        let _ = writeln!(s, "[ks]");
        for k in &self.ks {
            let _ = writeln!(s, "{} runs {}-{} D {:.6} p {:.6}", k.parameter, k.runs.0, k.runs.1, k.d, k.p);
        }
        let _ = writeln!(s, "[correlation]");
        for c in &self.correlations {
            let _ = writeln!(
                s,
                "{}:{} runs {}-{} r {:.6} {:.6} z {:.4}",
                c.pair.0, c.pair.1, c.runs.0, c.runs.1, c.r.0, c.r.1, c.z
            );
        }
        let _ = writeln!(s, "[checklist]");
        match self.min_acceptance {
            Some(a) => {
                let _ = writeln!(s, "min metropolis acceptance {a:.4}");
            }
            None => {
                let _ = writeln!(s, "min metropolis acceptance n/a");
            }
        }
        let _ = writeln!(s, "longest constant run {}", self.longest_constant_run);
        s
    }
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
