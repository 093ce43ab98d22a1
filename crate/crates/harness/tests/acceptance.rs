//! Release acceptance: one PASS/FAIL line per criterion, then a summary.
//! Exits non-zero when a blocking criterion fails.

use std::time::Instant;

use dyson_jacobi::analysis::{decay_fit, phi, variance_check, VarianceReport};
use dyson_jacobi::dynamics::simulate_ensemble;
use dyson_jacobi::equilibrium::{sample_gibbs, GibbsSample, McmcControl};
use dyson_jacobi::geometry::sinkhorn::SinkhornControl;
use dyson_jacobi::geometry::{cost_matrix, wasserstein_entropic, wasserstein_exact, EmpiricalMeasure, Epsilon};
use dyson_jacobi::model::{initial_condition, X0Builder};
use dyson_jacobi::rng::{stream, Domain};
use dyson_jacobi::ModelParams;
use dyson_jacobi_harness::config::{Config, Fault, OtKind, PresetName};
use dyson_jacobi_harness::experiment::{cutoff_scan, mixing_curve, ExperimentReport, ScanReport};
use dyson_jacobi_harness::verify::{self, Check, ONE_PARTICLE_KS_M};
use rand::Rng;

type Outcome = Result<(bool, String), String>;

struct Line {
    id: u32,
    name: &'static str,
    blocking: bool,
    passed: bool,
    detail: String,
    secs: f64,
}

struct Run {
    lines: Vec<Line>,
}

impl Run {
    fn record(&mut self, id: u32, name: &'static str, blocking: bool, budget: f64, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        let (mut passed, mut detail) = match out {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        if secs > budget {
            passed = false;
            detail = format!("{detail}; over the {budget:.0} s budget");
        }
        let tag = match (passed, blocking) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-blocking)",
        };
        println!("{tag} criterion {id} {name} [{secs:.1} s]: {detail}");
        self.lines.push(Line { id, name, blocking, passed, detail, secs });
    }
}

const SEED: u64 = 20_261_016;
const NS: [usize; 5] = [1, 2, 4, 8, 16];
const BETAS: [f64; 2] = [1.0, 2.0];
const AB: [f64; 3] = [8.0, 16.0, 64.0];
const ASYMMETRIC: [(f64, f64); 2] = [(48.0, 64.0), (64.0, 40.0)];

fn grid() -> (Vec<ModelParams>, Vec<String>) {
    let extra: Vec<(usize, f64, f64, f64)> = NS
        .iter()
        .flat_map(|&n| BETAS.iter().flat_map(move |&beta| ASYMMETRIC.iter().map(move |&(a, b)| (n, beta, a, b))))
        .collect();
    verify::parameter_grid(&NS, &BETAS, &AB, &extra)
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let failed: Vec<String> =
        checks.iter().filter(|c| !c.passed).map(|c| format!("{} [{}] = {:.3e}", c.suite, c.params, c.value)).collect();
    if failed.is_empty() {
        (true, format!("{} checks", checks.len()))
    } else {
        (false, format!("{} of {} failed: {}", failed.len(), checks.len(), failed.join("; ")))
    }
}

fn worst(checks: &[Check], suite: &str) -> f64 {
    checks.iter().filter(|c| c.suite == suite).map(|c| c.value).fold(f64::NEG_INFINITY, f64::max)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn criterion_1(sets: &[ModelParams], skipped: usize) -> Outcome {
    let mut checks = vec![verify::hand_case(Fault::None).map_err(err)?];
    for (k, p) in sets.iter().enumerate() {
        checks.push(verify::eigen_identity(p, 1000, SEED + k as u64, Fault::None).map_err(err)?);
    }
    let (ok, s) = summarize(&checks);
    Ok((
        ok,
        format!(
            "{s} over {} parameter sets ({skipped} invalid combinations skipped); worst scaled residual {:.2e}; hand case G phi = {}",
            sets.len(),
            worst(&checks, "eigen_identity"),
            checks[0].value
        ),
    ))
}

fn criterion_2(sets: &[ModelParams]) -> Outcome {
    let mut checks = Vec::new();
    for (k, p) in sets.iter().enumerate() {
        checks.extend(verify::conjugacy(p, 100, SEED + k as u64).map_err(err)?);
    }
    let (ok, s) = summarize(&checks);
    Ok((
        ok,
        format!(
            "{s}; worst relative drift gap {:.2e}, worst round trip {:.2e}",
            worst(&checks, "drift_conjugacy"),
            worst(&checks, "chart_roundtrip")
        ),
    ))
}

fn gibbs_samples(sets: &[ModelParams]) -> Result<Vec<GibbsSample>, String> {
    sets.iter()
        .enumerate()
        .map(|(k, p)| {
            let m = if p.n() == 1 { ONE_PARTICLE_KS_M } else { 10_000 };
            sample_gibbs(p, m, SEED + 100 + k as u64, &McmcControl::default()).map_err(err)
        })
        .collect()
}

fn criterion_3(sets: &[ModelParams], samples: &[GibbsSample]) -> Outcome {
    let mut checks = vec![verify::closed_form_hessian().map_err(err)?];
    let mut margin = f64::INFINITY;
    for (p, s) in sets.iter().zip(samples) {
        let pts: Vec<Vec<f64>> = s.iter().take(10_000).map(dyson_jacobi::analysis::flat_point).collect();
        let (c, summary) = verify::curvature(p, &pts, 50).map_err(err)?;
        margin = summary.margins.iter().copied().fold(margin, f64::min);
        checks.extend(c);
    }
    let (ok, s) = summarize(&checks);
    Ok((
        ok,
        format!(
            "{s}; worst FD residual {:.2e}, smallest margin {margin:.3e}; n=1 Hess at pi/2 = {}",
            worst(&checks, "hessian_fd"),
            checks[0].value
        ),
    ))
}

fn criterion_4(sets: &[ModelParams], samples: &[GibbsSample]) -> Outcome {
    let mut checks = Vec::new();
    for (p, s) in sets.iter().zip(samples) {
        checks.extend(verify::gibbs_moments(p, s).map_err(err)?);
    }
    let (ok, s) = summarize(&checks);
    let beta = checks.iter().find(|c| c.suite == "gibbs_beta_ks").map(|c| c.value).unwrap_or(f64::NAN);
    let idn = checks
        .iter()
        .find(|c| c.suite == "gibbs_identity" && c.params == "n=1 beta=1 a=8 b=8")
        .map(|c| c.detail.clone())
        .unwrap_or_default();
    Ok((ok, format!("{s}; largest mean deviation {:.2} SE, largest identity gap {:.2} SE; worst n=1 KS {beta:.4}; n=1 a=b=8: {idn}", worst(&checks, "gibbs_mean_sum"), worst(&checks, "gibbs_identity"))))
}

fn criterion_5(variances: &mut Vec<(String, VarianceReport)>) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (n, ab)) in [(4usize, 8.0), (8, 16.0)].into_iter().enumerate() {
        let p = ModelParams::new(n, 1.0, ab, ab).map_err(err)?;
        let x0 = initial_condition(&X0Builder::NearOne(0.05), n).map_err(err)?.x0;
        let lambda = p.lambda();
        let times: Vec<f64> = (0..=16).map(|i| 0.25 * i as f64 / lambda).collect();
        let ens = simulate_ensemble(
            &p,
            &x0,
            &times,
            100_000,
            SEED + 500 + k as u64,
            &dyson_jacobi::StepControl::default_for(&p),
        )
        .map_err(err)?;
        let fit = decay_fit(&ens, |x| phi(&p, x)).map_err(err)?;
        let rel = fit.rate / lambda - 1.0;
        ok &= rel.abs() <= 0.05;
        parts.push(format!("n={n} a=b={ab}: rate {:.3} +- {:.3} vs {lambda} ({:+.2}%)", fit.rate, fit.se, 100.0 * rel));
        variances.push((verify::label(&p), variance_check(&ens)));
    }
    Ok((ok, parts.join("; ")))
}

fn base_config() -> Config {
    Config { seed: Some(SEED), svg: false, ..Config::default() }
}

fn criterion_7(store: &mut Vec<ExperimentReport>) -> Outcome {
    let mut cfg = base_config();
    cfg.set("x0", "centered:0.9").map_err(err)?;
    cfg.m = 4096;
    cfg.ot = OtKind::Exact;
    cfg.ot_atoms = 512;
    let p = cfg.params().map_err(err)?;
    let x0 = cfg.initial(p.n()).map_err(err)?.x0;
    let r = mixing_curve(&cfg, &p, &x0, SEED + 700).map_err(err)?;
    let pick: Vec<_> =
        r.verdicts.iter().filter(|v| v.name == "w_below_upper_bound" || v.name == "late_slope").collect();
    let ok = pick.len() == 2 && pick.iter().all(|v| v.passed);
    let detail = pick.iter().map(|v| format!("{}: {}", v.name, v.detail)).collect::<Vec<_>>().join("; ");
    store.push(r);
    Ok((ok, format!("n=4 beta=1 a=b=8 xbar=0.9 M=4096, exact OT on 512 atoms; {detail}")))
}

fn cloud(rng: &mut impl Rng, n: usize, m: usize, skew: f64) -> Result<EmpiricalMeasure, String> {
    let mut pts = Vec::with_capacity(n * m);
    for _ in 0..m {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powf(skew)).collect();
        x.sort_by(f64::total_cmp);
        pts.extend(x);
    }
    EmpiricalMeasure::uniform(n, pts).map_err(err)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let mut rng = stream(SEED, Domain::Test, 800);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..20 {
        let p = cloud(&mut rng, 3, 256, 1.0)?;
        let q = cloud(&mut rng, 3, 256, 1.5)?;
        let exact = wasserstein_exact(&p, &q, 2).map_err(err)?.distance;
        let ent = wasserstein_entropic(&p, &q, Epsilon::RelativeToMeanCost(0.01), 2, &SinkhornControl::default())
            .map_err(err)?;
        worst_rel = worst_rel.max(((ent.distance - exact) / exact).abs());
    }
    let perms = permutations(4);
    let mut worst_gap: f64 = 0.0;
    for trial in 0..1000 {
        let n = 1 + trial % 4;
        let p = cloud(&mut rng, n, 4, 1.0)?;
        let q = cloud(&mut rng, n, 4, 2.0)?;
        let c = cost_matrix(&p, &q, 2);
        let brute = perms
            .iter()
            .map(|s| s.iter().enumerate().map(|(i, &j)| c[i * 4 + j]).sum::<f64>() / 4.0)
            .fold(f64::INFINITY, f64::min);
        let got = wasserstein_exact(&p, &q, 2).map_err(err)?.cost;
        worst_gap = worst_gap.max((got - brute).abs() / brute.max(1.0));
    }
    let ok = worst_rel < 0.02 && worst_gap <= 1e-12;
    Ok((ok, format!("entropic vs exact at M=256 on 20 pairs: worst {:.3}%; exact vs brute force at M=4 on 1000 pairs: worst gap {worst_gap:.1e}", 100.0 * worst_rel)))
}

fn criterion_9(store: &mut Option<ScanReport>) -> Outcome {
    let mut cfg = base_config();
    cfg.preset = Some(PresetName::RZero);
    cfg.ns = vec![4, 8, 16, 32];
    cfg.set("x0", "centered:0.5").map_err(err)?;
    cfg.m = 4096;
    cfg.levels = vec![0.5];
    cfg.delta = 0.2;
    let r = cutoff_scan(&cfg, SEED + 900).map_err(err)?;
    let ok = r.verdicts.iter().all(|v| v.passed);
    let widths: Vec<String> =
        r.rows.iter().map(|row| format!("n={} width {} t_mix {}", row.n, fmt(row.width), fmt(row.t_mix))).collect();
    let failed: Vec<String> =
        r.verdicts.iter().filter(|v| !v.passed).map(|v| format!("{}: {}", v.name, v.detail)).collect();
    let detail = if failed.is_empty() {
        widths.join("; ")
    } else {
        format!("{}; failing: {}", widths.join("; "), failed.join("; "))
    };
    *store = Some(r);
    Ok((ok, detail))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "none".into())
}

fn criterion_10(store: &mut Vec<ExperimentReport>) -> Outcome {
    // a start far from equilibrium and a large gap, so the analytic bound
    // stays positive over a stretch of early times
    let mut cfg = base_config();
    cfg.preset = Some(PresetName::RInf);
    cfg.alpha = 1.0;
    cfg.n = 16;
    cfg.ns = vec![16];
    cfg.set("x0", "near_one:0.05").map_err(err)?;
    cfg.t_end = Some(2.0);
    cfg.m = 4096;
    let p = cfg.params().map_err(err)?;
    let x0 = cfg.initial(p.n()).map_err(err)?.x0;
    let r = mixing_curve(&cfg, &p, &x0, SEED + 1000).map_err(err)?;
    let positive = r.bounds.tv_lower.iter().filter(|&&b| b > 0.0).count();
    let v = r.verdicts.iter().find(|v| v.name == "tv_consistent").ok_or("no tv verdict")?;
    let margin = (0..r.times.len())
        .filter(|&k| r.bounds.tv_lower[k] > 0.0)
        .map(|k| r.tv_proxy[k] - r.bounds.tv_lower[k] + 3.0 * r.tv_proxy_se[k])
        .fold(f64::INFINITY, f64::min);
    let ok = v.passed && positive > 0;
    store.push(r);
    Ok((ok, format!("r_inf alpha=1 n=16 from near 1: bound positive at {positive} grid times, smallest proxy - bound + 3SE = {margin:.3e}")))
}

fn criterion_6(variances: &[(String, VarianceReport)], curves: &[&ExperimentReport]) -> Outcome {
    let mut sets = Vec::new();
    let mut ok = true;
    for (label, v) in variances {
        ok &= v.passed;
        let m = v.variance.iter().copied().fold(0.0, f64::max);
        sets.push(format!("{label}: max {m:.3e} vs {:.3e}", v.bound));
    }
    for r in curves {
        let v = r.verdicts.iter().find(|v| v.name == "variance_bound").ok_or("no variance verdict")?;
        ok &= v.passed;
        sets.push(format!("{}: {}", verify::label(&r.params), v.detail));
    }
    if sets.is_empty() {
        return Err("no ensembles were produced".into());
    }
    Ok((ok, format!("{} ensembles; {}", sets.len(), sets.join("; "))))
}

#[cfg(feature = "matrix-oracle")]
fn criterion_11() -> Outcome {
    let mut cfg = base_config();
    cfg.n = 3;
    cfg.beta = 1.0;
    cfg.a = 8.0;
    cfg.b = 8.0;
    cfg.set("x0", "equispaced").map_err(err)?;
    cfg.oracle_paths = 20_000;
    let r = dyson_jacobi_harness::oracle::run(&cfg, SEED + 1100).map_err(err)?;
    let detail = r.verdicts.iter().map(|v| format!("{}: {}", v.name, v.detail)).collect::<Vec<_>>().join("; ");
    let ok = r.verdicts.iter().filter(|v| v.name != "oracle_calibration").all(|v| v.passed);
    Ok((ok, detail))
}

fn main() {
    let _ =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).is_test(true).try_init();
    let mut run = Run { lines: Vec::new() };
    let (sets, skipped) = grid();
    let small: Vec<ModelParams> = sets.iter().copied().filter(|p| p.n() <= 16).collect();

    run.record(1, "eigen-identity", true, 600.0, || criterion_1(&sets, skipped.len()));
    run.record(2, "drift conjugacy", true, 600.0, || criterion_2(&sets));

    let mut samples = Vec::new();
    run.record(3, "curvature-dimension", true, 600.0, || {
        samples = gibbs_samples(&small)?;
        criterion_3(&small, &samples)
    });
    run.record(4, "equilibrium moments", true, 600.0, || {
        if samples.len() != small.len() {
            return Err("equilibrium samples unavailable".into());
        }
        criterion_4(&small, &samples)
    });
    drop(samples);

    let mut variances = Vec::new();
    run.record(5, "spectral decay", true, 600.0, || criterion_5(&mut variances));
    let mut curves = Vec::new();
    run.record(7, "Wasserstein contraction and bound", true, 600.0, || criterion_7(&mut curves));
    run.record(8, "OT cross-validation", true, 600.0, criterion_8);
    let mut scan = None;
    run.record(9, "cutoff sharpening", true, 1800.0, || criterion_9(&mut scan));
    run.record(10, "TV consistency", true, 600.0, || criterion_10(&mut curves));
    run.record(6, "variance bound", true, 600.0, || {
        let mut all: Vec<&ExperimentReport> = curves.iter().collect();
        if let Some(s) = &scan {
            all.extend(s.curves.iter());
        }
        criterion_6(&variances, &all)
    });

    #[cfg(feature = "matrix-oracle")]
    run.record(11, "matrix oracle (stretch)", false, 600.0, criterion_11);
    #[cfg(not(feature = "matrix-oracle"))]
    println!("SKIP criterion 11 matrix oracle (stretch): built without the matrix-oracle feature");

    run.lines.sort_by_key(|l| l.id);
    println!();
    println!("acceptance summary");
    for l in &run.lines {
        println!("  {:>2} {:<36} {:<5} {:>8.1} s", l.id, l.name, if l.passed { "PASS" } else { "FAIL" }, l.secs);
    }
    let blocking_failures: Vec<&Line> = run.lines.iter().filter(|l| l.blocking && !l.passed).collect();
    if !blocking_failures.is_empty() {
        for l in &blocking_failures {
            eprintln!("criterion {} failed: {}", l.id, l.detail);
        }
        std::process::exit(1);
    }
}
