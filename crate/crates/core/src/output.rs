//! Files a run leaves behind: chain CSV, summary, histograms and reference curves.

use std::fmt::Write as _;
use std::io::Write;

use crate::diagnostics::effective_sample_size;
use crate::error::{invalid, Result};
use crate::gibbs::{batch_means, Chain};
use crate::scenarios::ReferenceCurve;

/// One histogram bin, normalised so that `sum density * width = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRow {
    pub left: f64,
    pub right: f64,
    pub density: f64,
}

/// Density-normalised histogram over `range`, or over the sample range when
/// `None`. Samples outside the range are dropped before normalising.
pub fn emit_histogram(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Vec<HistogramRow>> {
    if bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {bins}")));
    }
    if samples.is_empty() {
        return Err(invalid("no samples to bin"));
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(invalid(format!("histogram range [{lo}, {hi}] is not finite")));
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if x >= lo && x <= hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(invalid("no samples fall inside the histogram range"));
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistogramRow {
            left: lo + i as f64 * width,
            right: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            density: c as f64 / (total as f64 * width),
        })
        .collect())
}

pub fn write_histogram_csv(rows: &[HistogramRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "bin_left,bin_right,density")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.left, r.right, r.density)?;
    }
    Ok(())
}

/// Writes `transition,<params>` then every `thin`-th row (transitions are
/// numbered from 1). Values use the shortest exact decimal form.
pub fn write_chain_csv(chain: &Chain, thin: usize, mut out: impl Write) -> Result<()> {
    if thin == 0 {
        return Err(invalid("thinning factor must be >= 1"));
    }
    let mut line = String::from("transition");
    for n in chain.names() {
        line.push(',');
        line.push_str(n);
    }
    writeln!(out, "{line}")?;
    for (i, row) in chain.rows().enumerate().filter(|(i, _)| (i + 1) % thin == 0) {
        line.clear();
        let _ = write!(line, "{}", i + 1);
        for v in row {
            let _ = write!(line, ",{v:?}");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Linear-interpolation empirical quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    /// Batch-means standard error of the mean.
    pub se: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub ess: f64,
    /// Post-burn-in Metropolis acceptance rate, if the coordinate uses one.
    pub acceptance: Option<f64>,
}

/// Per-parameter summaries of the rows after burn-in.
pub fn summarize(chain: &Chain) -> Result<Vec<ParameterSummary>> {
    let skip = chain.config().burn_in as usize;
    (0..chain.n_params())
        .map(|j| {
            let col = chain.column(j, skip);
            let (mean, se) = batch_means(&col)?;
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            Ok(ParameterSummary {
                name: chain.names()[j].clone(),
                mean,
                se,
                q025: sorted_quantile(&sorted, 0.025),
                q500: sorted_quantile(&sorted, 0.5),
                q975: sorted_quantile(&sorted, 0.975),
                ess: effective_sample_size(&col),
                acceptance: chain.metropolis_stats(j).map(|s| s.acceptance_rate()),
            })
        })
        .collect()
}

pub fn summary_text(scenario: &str, chain: &Chain, rows: &[ParameterSummary]) -> String {
    let cfg = chain.config();
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {scenario}");
    let _ = writeln!(s, "seed: {}", cfg.seed);
    let _ = writeln!(s, "transitions: {}", cfg.n_transitions);
    let _ = writeln!(s, "burn_in: {}", cfg.burn_in);
    let _ = writeln!(s, "scan: {:?}", cfg.scan);
    for r in rows {
        let _ = writeln!(s, "[{}]", r.name);
        let _ = writeln!(s, "mean = {}", r.mean);
        let _ = writeln!(s, "se = {}", r.se);
        let _ = writeln!(s, "q2.5 = {}", r.q025);
        let _ = writeln!(s, "q50 = {}", r.q500);
        let _ = writeln!(s, "q97.5 = {}", r.q975);
        let _ = writeln!(s, "ess = {:.1}", r.ess);
        if let Some(a) = r.acceptance {
            let _ = writeln!(s, "acceptance = {a}");
        }
    }
    s
}

/// Evaluates a reference curve on `points` evenly spaced points of `[lo, hi]`.
pub fn reference_grid(curve: &ReferenceCurve, (lo, hi): (f64, f64), points: usize) -> Vec<(f64, f64)> {
    let (slo, shi) = curve.density.support();
    let (lo, hi) = (lo.max(slo), hi.min(shi));
    let step = (hi - lo) / (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| lo + i as f64 * step).map(|x| (x, curve.density.pdf(x))).collect()
}

pub fn write_reference_csv(grid: &[(f64, f64)], mut out: impl Write) -> Result<()> {
    writeln!(out, "x,density")?;
    for (x, d) in grid {
        writeln!(out, "{x},{d}")?;
    }
    Ok(())
}

/// Plot range for a reference curve: the span of the retained column (or of
/// its square root), padded by 5% on each side.
pub fn reference_range(chain: &Chain, curve: &ReferenceCurve) -> Result<(f64, f64)> {
    let j = chain
        .index_of(&curve.parameter)
        .ok_or_else(|| invalid(format!("reference `{}` names unknown parameter `{}`", curve.name, curve.parameter)))?;
    let col = chain.column(j, chain.config().burn_in as usize);
    let (lo, hi) = col
        .iter()
        .map(|&x| if curve.sqrt { x.max(0.0).sqrt() } else { x })
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let pad = 0.05 * (hi - lo).max(1e-9);
    Ok((lo - pad, hi + pad))
}

/// Report for a single chain: effective sample sizes, acceptance and stalls.
pub fn single_chain_diagnostics(chain: &Chain) -> String {
    let skip = chain.config().burn_in as usize;
    let mut s = String::new();
    let _ = writeln!(s, "chains: 1 (run with --chains 2 or more for R-hat)");
    let _ = writeln!(s, "[ess]");
    for (j, n) in chain.names().iter().enumerate() {
        let _ = writeln!(s, "{n} {:.1}", effective_sample_size(&chain.column(j, skip)));
    }
    let _ = writeln!(s, "[acceptance]");
    for (j, n) in chain.names().iter().enumerate() {
        if let Some(m) = chain.metropolis_stats(j) {
            let _ = writeln!(
                s,
                "{n} burn_in {}/{} retained {}/{} final_scale {}",
                m.burn_in_accepted, m.burn_in_proposals, m.accepted, m.proposals, m.final_scale
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{run_chain, ConditionalSpec, GibbsConfig, ScanOrder, UpdateRule};
    use crate::Distribution;
    use rand::{Rng, SeedableRng};

    #[test]
    fn histogram_normalisation() {
        let mut rng = crate::gibbs::EngineRng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let rows = emit_histogram(&xs, 4, Some((0.0, 1.0))).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!((r.density - 1.0).abs() < 0.02);
        }
        let total: f64 = rows.iter().map(|r| r.density * (r.right - r.left)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let free = emit_histogram(&[3.0, 1.0, 2.0, 2.5], 3, None).unwrap();
        assert_eq!(free.first().unwrap().left, 1.0);
        assert_eq!(free.last().unwrap().right, 3.0);
        assert!(emit_histogram(&[], 4, None).is_err());
        assert!(emit_histogram(&xs, 1, None).is_err());
    }

    fn small_chain() -> Chain {
        let spec = vec![ConditionalSpec::new("z", UpdateRule::DirectSample, |_: &[f64], _: &()| Distribution::normal(0.0, 1.0))];
        let cfg = GibbsConfig { n_transitions: 1000, burn_in: 100, seed: 3, scan: ScanOrder::Fixed(vec![0]), initial: vec![0.0] };
        run_chain(&spec, &cfg, &()).unwrap()
    }

    #[test]
    fn chain_csv_round_trips_exactly() {
        let chain = small_chain();
        let mut buf = Vec::new();
        write_chain_csv(&chain, 7, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("transition,z"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), 1000 / 7);
        for r in rows {
            let (t, v) = r.split_once(',').unwrap();
            let t: usize = t.parse().unwrap();
            assert_eq!(t % 7, 0);
            assert_eq!(v.parse::<f64>().unwrap(), chain.row(t - 1)[0]);
        }
        assert!(write_chain_csv(&chain, 0, Vec::new()).is_err());
    }

    #[test]
    fn summary_quantiles() {
        let chain = small_chain();
        let s = summarize(&chain).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].q025 < s[0].q500 && s[0].q500 < s[0].q975);
        assert!(s[0].mean.abs() < 4.0 * s[0].se + 0.01);
        assert!(s[0].acceptance.is_none());
        let text = summary_text("toy", &chain, &s);
        assert!(text.contains("[z]") && text.contains("q97.5 = "));
        assert_eq!(sorted_quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert_eq!(sorted_quantile(&[0.0, 10.0], 0.25), 2.5);
    }
}
