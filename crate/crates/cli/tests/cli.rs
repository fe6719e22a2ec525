use std::path::Path;
use std::process::{Command, Output};

fn ioi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ioi"))
        .args(args)
        .env("IOI_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn student_run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = ioi(
        &["run", "student_bayes_sigma", "--seed", "1", "--transitions", "200000", "--burn-in", "2000", "--scan", "random"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["chain.csv", "summary.txt", "diagnostics.txt", "reference_marginal_mu.csv", "reference_marginal_sigma.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let chain = read(dir.path(), "chain.csv");
    assert_eq!(chain.lines().next(), Some("transition,mu,sigma_sq"));
    assert_eq!(chain.lines().count(), 200_001);
    let summary = read(dir.path(), "summary.txt");
    let mean: f64 = summary
        .lines()
        .skip_while(|l| *l != "[mu]")
        .find_map(|l| l.strip_prefix("mean = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((mean - 2.7).abs() < 0.05, "{mean}");
    assert!(summary.contains("q2.5 = ") && summary.contains("se = "));

    let sigma_curve = read(dir.path(), "reference_marginal_sigma.csv");
    let mut lines = sigma_curve.lines();
    assert_eq!(lines.next(), Some("x,density"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    // trapezoid over the plotted range holds almost all of the sigma density
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!(area > 0.99 && area < 1.001, "{area}");
}

#[test]
fn identical_runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "trinomial", "--seed", "5", "--transitions", "20000", "--burn-in", "1000", "--scan", "fixed:pi2,pi1", "--thin", "3"];
    assert!(ioi(&args, a.path()).status.success());
    assert!(ioi(&args, b.path()).status.success());
    for f in ["chain.csv", "summary.txt", "reference_jeffreys_pi1.csv", "histogram_pi1.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    assert_eq!(read(a.path(), "chain.csv").lines().count(), 1 + 20000 / 3);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ioi(&["run", "no_such_thing"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown scenario"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "trinomial", "--scan", "fixed:pi1"],
        vec!["run", "trinomial", "--thin", "0"],
        vec!["run", "trinomial", "--transitions", "10", "--burn-in", "10"],
        vec!["run", "trinomial", "--bins", "1"],
        vec!["frobnicate"],
    ] {
        assert_eq!(ioi(&args, dir.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn config_file_round_trip_and_multiple_chains() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ioi(&["config", "student_fiducial"], dir.path());
    assert!(printed.status.success());
    let text = String::from_utf8(printed.stdout).unwrap();
    assert!(text.contains("[run]") && text.contains("[scenario]"));
    let edited = text.replace("xbar = 2.7", "xbar = -1.0");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, edited).unwrap();
    let out = dir.path().join("out");
    let o = ioi(
        &["run", "--config", cfg.to_str().unwrap(), "--transitions", "20000", "--chains", "3", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("chain_2.csv").exists());
    let diag = read(&out, "diagnostics.txt");
    assert!(diag.starts_with("verdict: ") && diag.contains("[rhat]"), "{diag}");
    let summary = read(&out, "summary.txt");
    let mean: f64 = summary.lines().find_map(|l| l.strip_prefix("mean = ")).unwrap().parse().unwrap();
    assert!((mean + 1.0).abs() < 0.1, "{mean}");
    // the echoed config reproduces the run
    let again = dir.path().join("again");
    let echoed = out.join("config.toml");
    let o = ioi(&["run", "--config", echoed.to_str().unwrap(), "--out", again.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert_eq!(read(&out, "chain.csv"), read(&again, "chain.csv"));

    let o = ioi(&["run", "trinomial", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = ioi(&["run", "student_fiducial", "--transitions", "1000", "--burn-in", "10", "--out", blocker.join("sub").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[io]"));
}
