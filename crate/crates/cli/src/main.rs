//! `ioi`: run a worked example and write its chain, summary, reference curves
//! and diagnostics.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ioi_engine::diagnostics::compare_chains;
use ioi_engine::gibbs::{run_chains, Chain, GibbsConfig};
use ioi_engine::output::{
    emit_histogram, reference_grid, reference_range, single_chain_diagnostics, summarize, summary_text,
    write_chain_csv, write_histogram_csv, write_reference_csv,
};
use ioi_engine::scenarios::{ScenarioConfig, ScenarioSpec, SCENARIO_NAMES};
use ioi_engine::{Error, Result};

use config::{one_line, ConfigFile, RunConfig, RunSection};

const REFERENCE_POINTS: usize = 512;

#[derive(Parser)]
#[command(name = "ioi", version, about = "Gibbs sampling over fiducial, bispatial and Bayesian full conditionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write chain.csv, summary.txt, reference_*.csv and diagnostics.txt.
    Run(RunArgs),
    /// List the built-in scenarios.
    List,
    /// Print a config file for a scenario with its built-in settings.
    Config { scenario: String },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Built-in scenario name; optional when the config file has a [scenario] table.
    scenario: Option<String>,
    /// TOML file with optional [run] and [scenario] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    transitions: Option<u64>,
    #[arg(long = "burn-in")]
    burn_in: Option<u64>,
    /// `random` or `fixed:<name>,<name>,...`.
    #[arg(long)]
    scan: Option<String>,
    #[arg(long, env = "IOI_OUT_DIR", default_value = "ioi-output")]
    out: PathBuf,
    /// Keep every n-th row in the chain files.
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// Independent chains (seeds seed, seed+1, ...), run concurrently.
    #[arg(long)]
    chains: Option<usize>,
}

/// Failures before any sampling are usage errors (exit 2); the rest exit 1.
enum Failure {
    Usage(Error),
    Runtime(Error),
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::Domain(_) => "domain",
        Error::Quadrature(_) => "quadrature",
        Error::Condition1Failed(_) => "condition1_failed",
        Error::KappaBelowNeutral { .. } => "kappa_below_neutral",
        Error::KappaNotBelowOne(_) => "kappa_not_below_one",
        Error::Unsupported(_) => "unsupported",
        Error::Unnormalizable(_) => "unnormalizable",
        Error::StuckChain(_) => "stuck_chain",
        Error::NonFinite(_) => "non_finite",
        Error::UnknownScenario(_) => "unknown_scenario",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

fn resolve(args: RunArgs) -> Result<(RunConfig, ScenarioSpec)> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile { run: RunSection::default(), scenario: None },
    };
    let scenario = match (args.scenario.as_deref(), file.scenario) {
        (Some(name), Some(cfg)) if cfg.name() != name => {
            return Err(Error::Config(format!("config file describes `{}`, command line names `{name}`", cfg.name())))
        }
        (_, Some(cfg)) => cfg,
        (Some(name), None) => ScenarioConfig::preset(name)?,
        (None, None) => return Err(Error::Config("no scenario given".into())),
    };
    let mut run = file.run;
    run.seed = args.seed.unwrap_or(run.seed);
    run.transitions = args.transitions.unwrap_or(run.transitions);
    run.burn_in = args.burn_in.unwrap_or(run.burn_in);
    run.scan = args.scan.unwrap_or(run.scan);
    run.thin = args.thin.unwrap_or(run.thin);
    run.bins = args.bins.unwrap_or(run.bins);
    run.chains = args.chains.unwrap_or(run.chains);
    let config = RunConfig { scenario, run, out: args.out };
    config.validate()?;
    let spec = config.scenario.build()?;
    spec.parse_scan(&config.run.scan)?;
    Ok((config, spec))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn execute(config: &RunConfig, spec: &ScenarioSpec) -> Result<()> {
    let r = &config.run;
    let scan = spec.parse_scan(&r.scan)?;
    let starts = if r.chains > 1 { spec.overdispersed_starts(r.chains, r.seed) } else { vec![spec.initial.clone()] };
    let gibbs: Vec<GibbsConfig> = starts
        .into_iter()
        .enumerate()
        .map(|(i, initial)| GibbsConfig {
            initial,
            ..spec.gibbs_config(r.transitions, r.burn_in, r.seed.wrapping_add(i as u64), scan.clone())
        })
        .collect();
    let chains = run_chains(&spec.conditionals, &gibbs, &()).into_iter().collect::<Result<Vec<Chain>>>()?;

    let dir = &config.out;
    std::fs::create_dir_all(dir)?;
    for (i, chain) in chains.iter().enumerate() {
        let name = if i == 0 { "chain.csv".to_string() } else { format!("chain_{i}.csv") };
        write_chain_csv(chain, r.thin, create(dir, &name)?)?;
    }
    let main = &chains[0];
    let summary = summarize(main)?;
    std::fs::write(dir.join("summary.txt"), summary_text(&spec.name, main, &summary))?;

    let skip = r.burn_in as usize;
    for (j, name) in main.names().iter().enumerate() {
        let col = main.column(j, skip);
        write_histogram_csv(&emit_histogram(&col, r.bins, None)?, create(dir, &format!("histogram_{name}.csv"))?)?;
        if spec.references.iter().any(|c| c.sqrt && &c.parameter == name) {
            let roots: Vec<f64> = col.iter().map(|x| x.max(0.0).sqrt()).collect();
            write_histogram_csv(&emit_histogram(&roots, r.bins, None)?, create(dir, &format!("histogram_sqrt_{name}.csv"))?)?;
        }
    }
    for curve in &spec.references {
        let grid = reference_grid(curve, reference_range(main, curve)?, REFERENCE_POINTS);
        write_reference_csv(&grid, create(dir, &format!("reference_{}.csv", curve.name))?)?;
    }
    let diagnostics = if chains.len() > 1 { compare_chains(&chains)?.to_text() } else { single_chain_diagnostics(main) };
    std::fs::write(dir.join("diagnostics.txt"), diagnostics)?;
    std::fs::write(dir.join("config.toml"), ConfigFile { run: r.clone(), scenario: Some(config.scenario.clone()) }.to_toml()?)?;
    Ok(())
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::List => {
            for name in SCENARIO_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Config { scenario } => {
            let cfg = ScenarioConfig::preset(&scenario).map_err(Failure::Usage)?;
            let file = ConfigFile { run: RunSection::default(), scenario: Some(cfg) };
            print!("{}", file.to_toml().map_err(Failure::Runtime)?);
            Ok(())
        }
        Command::Run(args) => {
            let (config, spec) = resolve(args).map_err(Failure::Usage)?;
            execute(&config, &spec).map_err(Failure::Runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error[{}]: {}", kind(&e), one_line(&e.to_string()));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error[{}]: {}", kind(&e), one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}
