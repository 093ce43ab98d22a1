//! Identity suites behind `verify`: eigen-identity, drift conjugacy,
//! Hessian cross-check, curvature margin and equilibrium moments.

use std::f64::consts::PI;

use dyson_jacobi::analysis::{cd_verify, flat_point, generator_from_drift, hessian_v, Eigenfunction};
use dyson_jacobi::dynamics::{dj_drift_into, edj_drift, flatten, flatten_coord, ito_flat_drift, unflatten_coord};
use dyson_jacobi::equilibrium::{moment_report, sample_gibbs, McmcControl};
use dyson_jacobi::rng::{stream, Domain};
use dyson_jacobi::{stats, Configuration, ModelParams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::config::{Config, Fault};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub params: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

fn check(suite: &str, p: Option<&ModelParams>, value: f64, tolerance: f64, passed: bool, detail: String) -> Check {
    Check { suite: suite.into(), params: p.map(label).unwrap_or_default(), value, tolerance, passed, detail }
}

pub fn label(p: &ModelParams) -> String {
    format!("n={} beta={} a={} b={}", p.n(), p.beta(), p.a(), p.b())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub params: String,
    pub bound: f64,
    pub margins: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub skipped: Vec<String>,
    pub curvature: Vec<CurvatureSummary>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Valid parameter sets of the product grid (plus `extra`), and labels of
/// the combinations that fail validation.
pub fn parameter_grid(
    ns: &[usize],
    betas: &[f64],
    abs: &[f64],
    extra: &[(usize, f64, f64, f64)],
) -> (Vec<ModelParams>, Vec<String>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    let combos = ns
        .iter()
        .flat_map(|&n| betas.iter().flat_map(move |&beta| abs.iter().map(move |&ab| (n, beta, ab, ab))))
        .chain(extra.iter().copied());
    for (n, beta, a, b) in combos {
        match ModelParams::new(n, beta, a, b) {
            Ok(p) => ok.push(p),
            Err(e) => skipped.push(format!("n={n} beta={beta} a={a} b={b}: {e}")),
        }
    }
    (ok, skipped)
}

/// Uniform ordered interior point, at least `gap` from the boundary and
/// from each other.
pub fn random_ordered(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(1e-6..1.0 - 1e-6)).collect();
        x.sort_by(f64::total_cmp);
        if x.windows(2).all(|w| w[1] - w[0] > 1e-9) {
            return x;
        }
    }
}

fn generator_phi(p: &ModelParams, x: &[f64], fault: Fault) -> Result<f64> {
    let mut drift = vec![0.0; x.len()];
    dj_drift_into(p, x, &mut drift)?;
    if fault == Fault::DriftSign {
        drift.iter_mut().for_each(|d| *d = -*d);
    }
    Ok(generator_from_drift(&Eigenfunction::new(p), x, &drift))
}

/// `|G phi + lambda phi| <= 1e-10 lambda max(1, |phi|)` at `points` random
/// ordered points.
pub fn eigen_identity(p: &ModelParams, points: usize, seed: u64, fault: Fault) -> Result<Check> {
    let mut rng = stream(seed, Domain::Test, 100);
    let ef = Eigenfunction::new(p);
    let lambda = p.lambda();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = random_ordered(&mut rng, p.n());
        let phi = ef.eval(&x);
        let r = (generator_phi(p, &x, fault)? + lambda * phi).abs() / (lambda * phi.abs().max(1.0));
        worst = worst.max(r);
    }
    Ok(check("eigen_identity", Some(p), worst, 1e-10, worst <= 1e-10, format!("{points} points, scaled residual")))
}

/// `G phi` at `x = (0.2, 0.6)` for `n=2, beta=1, a=b=8` is `16 - 16*0.8`.
pub fn hand_case(fault: Fault) -> Result<Check> {
    let p = ModelParams::new(2, 1.0, 8.0, 8.0)?;
    let g = generator_phi(&p, &[0.2, 0.6], fault)?;
    let err = (g - 3.2).abs();
    Ok(check("eigen_identity_hand_case", Some(&p), g, 1e-12, err <= 1e-12, "G phi at (0.2, 0.6), expected 3.2".into()))
}

/// Flat drift against the Ito transform of the DJ drift, and the chart
/// round trip.
pub fn conjugacy(p: &ModelParams, points: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream(seed, Domain::Test, 101);
    let mut worst: f64 = 0.0;
    let mut roundtrip: f64 = 0.0;
    for _ in 0..points {
        let x = Configuration::new(random_ordered(&mut rng, p.n()))?;
        let edj = edj_drift(p, &flatten(&x))?;
        let ito = ito_flat_drift(p, &x)?;
        for (e, i) in edj.iter().zip(&ito) {
            worst = worst.max((e - i).abs() / i.abs().max(1.0));
        }
        for &v in x.as_slice() {
            roundtrip = roundtrip.max((unflatten_coord(flatten_coord(v)) - v).abs());
        }
    }
    Ok(vec![
        check("drift_conjugacy", Some(p), worst, 1e-6, worst <= 1e-6, format!("{points} points, relative")),
        check(
            "chart_roundtrip",
            Some(p),
            roundtrip,
            1e-14,
            roundtrip <= 1e-14,
            format!("{} coordinates", points * p.n()),
        ),
    ])
}

/// `Hess V` at `y = pi/2` for `n=1, a=b=8`: 15, against the bound 7.5.
pub fn closed_form_hessian() -> Result<Check> {
    let p = ModelParams::new(1, 1.0, 8.0, 8.0)?;
    let h = hessian_v(&p, &[PI / 2.0])?[(0, 0)];
    let c = p.constants();
    let bound = 0.25 * (c.flat_exp_a + c.flat_exp_b);
    let ok = (h - 15.0).abs() <= 1e-12 && (bound - 7.5).abs() <= 1e-12;
    Ok(check("hessian_closed_form", Some(&p), h, 1e-12, ok, format!("expected 15, bound {bound}")))
}

/// Curvature margins and the finite-difference Hessian on flattened points.
pub fn curvature(p: &ModelParams, points: &[Vec<f64>], fd_points: usize) -> Result<(Vec<Check>, CurvatureSummary)> {
    let r = cd_verify(p, points, fd_points)?;
    let checks = vec![
        check(
            "hessian_fd",
            Some(p),
            r.fd_max_residual,
            1e-5,
            r.fd_max_residual <= 1e-5,
            format!("{} points, relative Frobenius", r.fd_points),
        ),
        check(
            "curvature_margin",
            Some(p),
            r.min_margin,
            -1e-8,
            r.holds(1e-8),
            format!("{} points, min eigenvalue - (C_a+C_b)/4, bound {:.6}", r.points, r.bound),
        ),
    ];
    Ok((checks, CurvatureSummary { params: label(p), bound: r.bound, margins: r.margins }))
}

/// Mean of `S`, the integration-by-parts identity and, for one particle,
/// the KS distance to the Beta law.
pub fn gibbs_moments(p: &ModelParams, sample: &dyson_jacobi::equilibrium::GibbsSample) -> Result<Vec<Check>> {
    let r = moment_report(p, sample);
    let dev = (r.mean_sum.value - r.target_mean_sum).abs();
    let mut out = vec![
        check(
            "gibbs_mean_sum",
            Some(p),
            dev / r.mean_sum.se,
            3.0,
            dev <= 3.0 * r.mean_sum.se,
            format!("E[S] = {:.6} +- {:.6}, nb/lambda = {:.6}", r.mean_sum.value, r.mean_sum.se, r.target_mean_sum),
        ),
        check(
            "gibbs_identity",
            Some(p),
            r.identity_gap.value.abs() / r.identity_gap.se,
            3.0,
            r.identity_gap.value.abs() <= 3.0 * r.identity_gap.se,
            format!("lambda Var(S) = {:.6}, E[sum x(1-x)] = {:.6}", r.lambda_var_sum.value, r.mean_gamma.value),
        ),
    ];
    if p.n() == 1 {
        let beta = Beta::new(p.b(), p.a()).map_err(|e| crate::error::HarnessError::Numerical(e.to_string()))?;
        let xs: Vec<f64> = sample.iter().map(|x| x[0]).collect();
        let ks = stats::ks_statistic(&xs, |x| beta.cdf(x));
        out.push(check("gibbs_beta_ks", Some(p), ks, 0.01, ks <= 0.01, format!("M = {}", xs.len())));
    }
    Ok(out)
}

/// Sample size behind the one-particle Beta KS check.
pub const ONE_PARTICLE_KS_M: usize = 100_000;

/// The whole suite over the configured grid.
pub fn run(cfg: &Config, seed: u64) -> Result<VerifyReport> {
    let (grid, skipped) = parameter_grid(&cfg.verify_ns, &cfg.verify_betas, &cfg.verify_ab, &[]);
    let mut rep = VerifyReport { skipped, ..Default::default() };
    rep.checks.push(hand_case(cfg.fault)?);
    rep.checks.push(closed_form_hessian()?);
    for (k, p) in grid.iter().enumerate() {
        let s = seed.wrapping_add(k as u64);
        log::info!("verifying {}", label(p));
        rep.checks.push(eigen_identity(p, cfg.verify_points, s, cfg.fault)?);
        rep.checks.extend(conjugacy(p, cfg.verify_points.min(100), s)?);
        let control = McmcControl { chains: cfg.chains, ..McmcControl::default() };
        // KS at 0.01 needs well over 1e4 states to be more than a coin flip
        let m = if p.n() == 1 { cfg.verify_gibbs.max(ONE_PARTICLE_KS_M) } else { cfg.verify_gibbs };
        let sample = sample_gibbs(p, m, s, &control)?;
        let pts: Vec<Vec<f64>> = sample.iter().map(flat_point).collect();
        let (cc, summary) = curvature(p, &pts, 50)?;
        rep.checks.extend(cc);
        rep.curvature.push(summary);
        rep.checks.extend(gibbs_moments(p, &sample)?);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case_and_its_mutation() {
        assert!(hand_case(Fault::None).unwrap().passed);
        assert!(!hand_case(Fault::DriftSign).unwrap().passed);
    }

    #[test]
    fn eigen_identity_catches_a_flipped_drift() {
        let p = ModelParams::new(4, 2.0, 16.0, 16.0).unwrap();
        assert!(eigen_identity(&p, 100, 1, Fault::None).unwrap().passed);
        let bad = eigen_identity(&p, 100, 1, Fault::DriftSign).unwrap();
        assert!(!bad.passed && bad.value > 1e-3);
    }

    #[test]
    fn grid_skips_invalid_sets() {
        let (ok, skipped) = parameter_grid(&[1, 8], &[1.0], &[1.0, 16.0], &[(2, 1.0, 16.0, 8.0)]);
        assert!(ok.iter().any(|p| p.n() == 8 && p.a() == 16.0));
        assert!(ok.iter().any(|p| p.n() == 2 && p.b() == 8.0));
        assert!(skipped.iter().any(|s| s.starts_with("n=8 beta=1 a=1")));
    }

    #[test]
    fn closed_form() {
        assert!(closed_form_hessian().unwrap().passed);
    }
}
