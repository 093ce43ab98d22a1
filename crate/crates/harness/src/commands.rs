//! Subcommands. Each one loads the config, runs, writes its CSV files, a
//! `report.json` where there is something to plot, and `manifest.json`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dyson_jacobi::analysis::phi;
use dyson_jacobi::dynamics::simulate_ensemble;
use dyson_jacobi::equilibrium::{moment_report, sample_gibbs, McmcControl};
use dyson_jacobi::model::{cutoff_window, validate_params};
use dyson_jacobi::stats;
use serde::{Deserialize, Serialize};

use crate::config::{Config, KEYS};
use crate::error::{HarnessError, Result};
use crate::experiment::{self, ExperimentReport, ScanReport, Verdict};
use crate::output::{fmt_f64, fmt_opt, write_atomic, write_json, Manifest, Table};
use crate::plot;
use crate::verify::{self, VerifyReport};

#[derive(Parser, Debug)]
#[command(name = "dyson-jacobi", version, about = "Dyson-Jacobi simulations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file; `--key=value` flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check parameters and print the derived constants.
    Validate(Common),
    /// Identity suites over the verification grid.
    Verify(Common),
    /// Equilibrium sample and its moment checks.
    Gibbs(Common),
    /// Trajectory ensemble on the configured time grid.
    Simulate(Common),
    /// Distance to equilibrium over time, with bounds and verdicts.
    MixingCurve(Common),
    /// Mixing curves along a preset and their cutoff profiles.
    CutoffScan(Common),
    /// Matrix-model comparison at beta = 1.
    #[cfg(feature = "matrix-oracle")]
    OracleBeta1(Common),
    /// SVG renderings of a saved report.
    Plot {
        #[command(flatten)]
        common: Common,
        report: PathBuf,
    },
}

/// What `plot` knows how to draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "report", rename_all = "snake_case")]
pub enum Report {
    Mixing(ExperimentReport),
    Scan(ScanReport),
    Verify(VerifyReport),
}

/// Move `--key=value` and `--key value` config flags out of `args`.
/// Returns `(clap arguments, overrides, seed given on the command line)`.
pub fn split_args(args: &[String]) -> (Vec<String>, Vec<String>, bool) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut seed = false;
    let mut it = args.iter().peekable();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a.clone());
            continue;
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (flag, None),
        };
        if !KEYS.contains(&key) {
            rest.push(a.clone());
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => match it.next_if(|n| !n.starts_with("--")) {
                Some(v) => v.clone(),
                None => {
                    rest.push(a.clone());
                    continue;
                }
            },
        };
        seed |= key == "seed";
        overrides.push(format!("--{key}={value}"));
    }
    (rest, overrides, seed)
}

/// Run the CLI on `args` (without the program name) and return the exit
/// code.
pub fn main_with_args(args: &[String]) -> i32 {
    let (rest, overrides, seed_flag) = split_args(args);
    let cli = match Cli::try_parse_from(std::iter::once("dyson-jacobi".to_string()).chain(rest)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command, &overrides, seed_flag) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(common: &Common, overrides: &[String]) -> Result<Config> {
    let (cfg, rest) = Config::load(common.config.as_deref(), overrides)?;
    debug_assert!(rest.is_empty());
    Ok(cfg)
}

fn seeded(common: &Common, overrides: &[String], seed_flag: bool) -> Result<(Config, u64)> {
    if !seed_flag {
        return Err(HarnessError::Config("--seed=<u64> is required on the command line for this command".into()));
    }
    let cfg = load(common, overrides)?;
    let seed = cfg.seed()?;
    Ok((cfg, seed))
}

fn dispatch(command: Command, overrides: &[String], seed_flag: bool) -> Result<i32> {
    match command {
        Command::Validate(c) => validate(&load(&c, overrides)?),
        Command::Verify(c) => {
            let (cfg, seed) = seeded(&c, overrides, seed_flag)?;
            cmd_verify(&cfg, seed)
        }
        Command::Gibbs(c) => {
            let (cfg, seed) = seeded(&c, overrides, seed_flag)?;
            cmd_gibbs(&cfg, seed)
        }
        Command::Simulate(c) => {
            let (cfg, seed) = seeded(&c, overrides, seed_flag)?;
            cmd_simulate(&cfg, seed)
        }
        Command::MixingCurve(c) => {
            let (cfg, seed) = seeded(&c, overrides, seed_flag)?;
            cmd_mixing_curve(&cfg, seed)
        }
        Command::CutoffScan(c) => {
            let (cfg, seed) = seeded(&c, overrides, seed_flag)?;
            cmd_cutoff_scan(&cfg, seed)
        }
        #[cfg(feature = "matrix-oracle")]
        Command::OracleBeta1(c) => {
            let (cfg, seed) = seeded(&c, overrides, seed_flag)?;
            cmd_oracle(&cfg, seed)
        }
        Command::Plot { common, report } => cmd_plot(&load(&common, overrides)?, &report),
    }
}

fn out_dir(cfg: &Config) -> PathBuf {
    PathBuf::from(&cfg.out)
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
}

fn verdict_table(verdicts: &[Verdict]) -> Table {
    let mut t = Table::new(&["name", "passed", "detail"]);
    for v in verdicts {
        t.row(&[v.name.clone(), v.passed.to_string(), v.detail.clone()]);
    }
    t
}

fn finish(command: &str, cfg: &Config, files: &[&str]) -> Result<()> {
    Manifest::new(command, cfg, files).write(&out_dir(cfg))?;
    Ok(())
}

pub fn validate(cfg: &Config) -> Result<i32> {
    let mut bad = Vec::new();
    if let Err(e) = cfg.regime() {
        bad.push(e.to_string());
    }
    for n in cfg.sizes() {
        let raw = match cfg.regime() {
            Ok(Some(r)) => match r.params(n) {
                Ok(p) => p.raw(),
                Err(e) => {
                    bad.push(format!("n={n}: {e}"));
                    continue;
                }
            },
            _ => dyson_jacobi::RawParams { n: cfg.n, beta: cfg.beta, a: cfg.a, b: cfg.b },
        };
        let v = validate_params(&raw);
        if !v.is_ok() {
            bad.extend(v.violations.iter().map(|x| format!("n={n}: {x}")));
            continue;
        }
        let p = dyson_jacobi::ModelParams::new(raw.n, raw.beta, raw.a, raw.b)?;
        let c = p.constants();
        let x0 = cfg.initial(n)?.x0;
        let xbar = x0.sum() / n as f64;
        let w = cutoff_window(&p, xbar)?;
        println!(
            "n={} beta={} a={} b={}: lambda={} rho={} C_a={} C_b={} mean={} window=[{:.6e}, {:.6e}]{}",
            p.n(),
            p.beta(),
            p.a(),
            p.b(),
            p.lambda(),
            p.rho(),
            c.flat_exp_a,
            c.flat_exp_b,
            c.mean_per_particle,
            w.c_minus,
            w.c_plus,
            if w.informative { "" } else { " (uninformative)" }
        );
    }
    if bad.is_empty() {
        Ok(0)
    } else {
        for b in &bad {
            eprintln!("invalid: {b}");
        }
        Err(HarnessError::Config(format!("{} parameter violation(s)", bad.len())))
    }
}

pub fn cmd_verify(cfg: &Config, seed: u64) -> Result<i32> {
    let rep = verify::run(cfg, seed)?;
    let dir = out_dir(cfg);
    let mut t = Table::new(&["suite", "params", "value", "tolerance", "passed", "detail"]);
    for c in &rep.checks {
        t.row(&[
            c.suite.clone(),
            c.params.clone(),
            fmt_f64(c.value),
            fmt_f64(c.tolerance),
            c.passed.to_string(),
            c.detail.clone(),
        ]);
    }
    t.write(&dir.join("verify_checks.csv"))?;
    let mut m = Table::new(&["params", "bound", "margin"]);
    for s in &rep.curvature {
        for v in &s.margins {
            m.row(&[s.params.clone(), fmt_f64(s.bound), fmt_f64(*v)]);
        }
    }
    m.write(&dir.join("curvature_margins.csv"))?;
    let mut files = vec!["verify_checks.csv", "curvature_margins.csv", "report.json"];
    write_json(&dir.join("report.json"), &Report::Verify(rep.clone()))?;
    if cfg.svg {
        write_atomic(&dir.join("margins.svg"), plot::margins_svg(&rep).as_bytes())?;
        files.push("margins.svg");
    }
    finish("verify", cfg, &files)?;
    for s in &rep.skipped {
        println!("SKIP {s}");
    }
    for c in &rep.checks {
        if !c.passed {
            println!("FAIL {} [{}]: value {} tolerance {} ({})", c.suite, c.params, c.value, c.tolerance, c.detail);
        }
    }
    println!("{} of {} checks passed", rep.checks.iter().filter(|c| c.passed).count(), rep.checks.len());
    Ok(if rep.passed() { 0 } else { 1 })
}

pub fn cmd_gibbs(cfg: &Config, seed: u64) -> Result<i32> {
    let p = cfg.params()?;
    let control = McmcControl { chains: cfg.chains, ..McmcControl::default() };
    let sample = sample_gibbs(&p, cfg.reference_m, seed, &control)?;
    let dir = out_dir(cfg);
    let header: Vec<String> = (1..=p.n()).map(|i| format!("x{i}")).collect();
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for x in sample.iter() {
        t.row(&x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>());
    }
    t.write(&dir.join("gibbs_sample.csv"))?;
    let checks = verify::gibbs_moments(&p, &sample)?;
    let mut c = Table::new(&["suite", "value", "tolerance", "passed", "detail"]);
    for k in &checks {
        c.row(&[k.suite.clone(), fmt_f64(k.value), fmt_f64(k.tolerance), k.passed.to_string(), k.detail.clone()]);
    }
    c.write(&dir.join("gibbs_checks.csv"))?;
    let moments = moment_report(&p, &sample);
    write_json(&dir.join("gibbs.json"), &(&sample.diagnostics, &moments))?;
    finish("gibbs", cfg, &["gibbs_sample.csv", "gibbs_checks.csv", "gibbs.json"])?;
    let d = &sample.diagnostics;
    println!(
        "M={} acceptance={:.3} thin={} ESS(S)={:.0} Rhat={:.4}",
        sample.len(),
        d.acceptance,
        d.thin,
        d.ess_sum,
        d.rhat_sum
    );
    for k in &checks {
        println!("{} {}: {}", if k.passed { "PASS" } else { "FAIL" }, k.suite, k.detail);
    }
    Ok(if checks.iter().all(|k| k.passed) { 0 } else { 1 })
}

pub fn cmd_simulate(cfg: &Config, seed: u64) -> Result<i32> {
    let p = cfg.params()?;
    let x0 = cfg.initial(p.n())?.x0;
    let w = cutoff_window(&p, x0.sum() / p.n() as f64)?;
    let times = experiment::time_grid(cfg, &p, w.c_plus);
    let ens = simulate_ensemble(&p, &x0, &times, cfg.m, seed, &cfg.step_control(&p))?;
    let dir = out_dir(cfg);
    let mut s = Table::new(&["t", "mean_sum", "mean_sum_se", "mean_phi", "var_phi", "var_phi_se"]);
    for (ti, &t) in times.iter().enumerate() {
        let sums = ens.statistic(ti, |x| x.iter().sum());
        let ph = ens.statistic(ti, |x| phi(&p, x));
        let (v, vs) = stats::variance_with_se(&ph);
        s.row(&[
            fmt_f64(t),
            fmt_f64(stats::mean(&sums)),
            fmt_f64(stats::std_error(&sums)),
            fmt_f64(stats::mean(&ph)),
            fmt_f64(v),
            fmt_f64(vs),
        ]);
    }
    s.write(&dir.join("summary.csv"))?;
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((1..=p.n()).map(|i| format!("x{i}")));
    let mut tr = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for k in 0..ens.m {
        for (ti, &t) in times.iter().enumerate() {
            let mut row = vec![k.to_string(), fmt_f64(t)];
            row.extend(ens.configuration(k, ti).iter().map(|v| fmt_f64(*v)));
            tr.row(&row);
        }
    }
    tr.write(&dir.join("trajectories.csv"))?;
    finish("simulate", cfg, &["summary.csv", "trajectories.csv"])?;
    println!("M={} steps={} projection rate {:.3e}", ens.m, ens.steps, ens.projection_rate());
    Ok(0)
}

fn curve_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new(&[
        "t",
        "w",
        "w_se",
        "debiased",
        "debiased_se",
        "tv_proxy",
        "tv_proxy_se",
        "mean_phi",
        "mean_phi_se",
        "var_phi",
        "var_phi_se",
        "w2_upper",
        "tv_lower",
        "kl_upper",
        "tv_upper",
    ]);
    let b = &r.bounds;
    for k in 0..r.times.len() {
        t.row(
            &[
                r.times[k],
                r.w[k],
                r.w_se[k],
                r.debiased[k],
                r.debiased_se[k],
                r.tv_proxy[k],
                r.tv_proxy_se[k],
                r.mean_phi[k],
                r.mean_phi_se[k],
                r.var_phi[k],
                r.var_phi_se[k],
                b.w2_upper[k],
                b.tv_lower[k],
                b.kl_upper[k],
                b.tv_upper[k],
            ]
            .map(fmt_f64),
        );
    }
    t
}

fn tmix_table(r: &ExperimentReport) -> Table {
    let mut t = Table::new(&["epsilon", "t_mix", "c_minus", "c_plus", "informative"]);
    for e in &r.tmix {
        t.row(&[
            fmt_f64(e.epsilon),
            fmt_opt(e.t_mix),
            fmt_f64(r.window.c_minus),
            fmt_f64(r.window.c_plus),
            r.window.informative.to_string(),
        ]);
    }
    t
}

pub fn cmd_mixing_curve(cfg: &Config, seed: u64) -> Result<i32> {
    let p = cfg.params()?;
    let x0 = cfg.initial(p.n())?.x0;
    let r = experiment::mixing_curve(cfg, &p, &x0, seed)?;
    let dir = out_dir(cfg);
    curve_table(&r).write(&dir.join("mixing_curve.csv"))?;
    tmix_table(&r).write(&dir.join("tmix.csv"))?;
    verdict_table(&r.verdicts).write(&dir.join("verdicts.csv"))?;
    write_json(&dir.join("report.json"), &Report::Mixing(r.clone()))?;
    let mut files = vec!["mixing_curve.csv", "tmix.csv", "verdicts.csv", "report.json"];
    if cfg.svg {
        write_atomic(&dir.join("mixing_curve.svg"), plot::mixing_svg(&r).as_bytes())?;
        files.push("mixing_curve.svg");
    }
    finish("mixing-curve", cfg, &files)?;
    println!("floor {:.4e} +- {:.1e}, projection rate {:.2e}", r.floor, r.floor_se, r.projection_rate);
    for e in &r.tmix {
        println!("t_mix({}) = {}", e.epsilon, fmt_opt(e.t_mix));
    }
    print_verdicts(&r.verdicts);
    Ok(if r.passed() { 0 } else { 1 })
}

pub fn cmd_cutoff_scan(cfg: &Config, seed: u64) -> Result<i32> {
    let r = experiment::cutoff_scan(cfg, seed)?;
    let dir = out_dir(cfg);
    let mut t = Table::new(&[
        "n",
        "lambda",
        "c_minus",
        "c_plus",
        "informative",
        "asymptotic_minus",
        "asymptotic_plus",
        "w0",
        "t_mix",
        "t75",
        "t25",
        "width",
    ]);
    for row in &r.rows {
        t.row(&[
            row.n.to_string(),
            fmt_f64(row.lambda),
            fmt_f64(row.c_minus),
            fmt_f64(row.c_plus),
            row.informative.to_string(),
            fmt_f64(row.asymptotic_minus),
            fmt_f64(row.asymptotic_plus),
            fmt_f64(row.w0),
            fmt_opt(row.t_mix),
            fmt_opt(row.t75),
            fmt_opt(row.t25),
            fmt_opt(row.width),
        ]);
    }
    t.write(&dir.join("cutoff_scan.csv"))?;
    let mut names = Vec::new();
    for c in &r.curves {
        let name = format!("mixing_curve_n{}.csv", c.params.n());
        curve_table(c).write(&dir.join(&name))?;
        names.push(name);
    }
    verdict_table(&r.verdicts).write(&dir.join("verdicts.csv"))?;
    write_json(&dir.join("report.json"), &Report::Scan(r.clone()))?;
    let mut files: Vec<&str> = vec!["cutoff_scan.csv", "verdicts.csv", "report.json"];
    files.extend(names.iter().map(String::as_str));
    if cfg.svg {
        write_atomic(&dir.join("profiles.svg"), plot::profiles_svg(&r).as_bytes())?;
        files.push("profiles.svg");
    }
    finish("cutoff-scan", cfg, &files)?;
    print_verdicts(&r.verdicts);
    Ok(if r.passed() { 0 } else { 1 })
}

#[cfg(feature = "matrix-oracle")]
pub fn cmd_oracle(cfg: &Config, seed: u64) -> Result<i32> {
    let r = crate::oracle::run(cfg, seed)?;
    let dir = out_dir(cfg);
    verdict_table(&r.verdicts).write(&dir.join("oracle_verdicts.csv"))?;
    write_json(&dir.join("oracle.json"), &r)?;
    finish("oracle-beta1", cfg, &["oracle_verdicts.csv", "oracle.json"])?;
    print_verdicts(&r.verdicts);
    Ok(if r.passed() { 0 } else { 1 })
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("malformed report {}: {e}", path.display())))
}

/// SVG files for a report, by file name.
pub fn render(report: &Report) -> Vec<(String, String)> {
    match report {
        Report::Mixing(r) => vec![("mixing_curve.svg".into(), plot::mixing_svg(r))],
        Report::Scan(r) => {
            let mut v = vec![("profiles.svg".to_string(), plot::profiles_svg(r))];
            v.extend(r.curves.iter().map(|c| (format!("mixing_curve_n{}.svg", c.params.n()), plot::mixing_svg(c))));
            v
        }
        Report::Verify(r) => vec![("margins.svg".into(), plot::margins_svg(r))],
    }
}

pub fn cmd_plot(cfg: &Config, report: &Path) -> Result<i32> {
    let rep = read_report(report)?;
    let dir = out_dir(cfg);
    for (name, svg) in render(&rep) {
        write_atomic(&dir.join(&name), svg.as_bytes())?;
        println!("{}", dir.join(&name).display());
    }
    Ok(0)
}
