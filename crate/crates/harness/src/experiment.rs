//! Mixing curves and cutoff scans.
//!
//! `W(t)` is estimated between the ensemble at time `t` and an independent
//! Gibbs reference sample. Both pools are cut into blocks of `ot_atoms`
//! atoms (disjoint while the pools last) and each replicate transports one
//! ensemble block onto one reference block, so the replicate spread gives
//! the standard error. The same estimator between two disjoint reference
//! blocks measures the finite-sample floor.

use dyson_jacobi::analysis::{bound_curves, phi, BoundCurves};
use dyson_jacobi::dynamics::{simulate_ensemble, TrajectoryEnsemble};
use dyson_jacobi::equilibrium::{sample_gibbs, GibbsSample, McmcControl};
use dyson_jacobi::geometry::sinkhorn::SinkhornControl;
use dyson_jacobi::geometry::{
    intrinsic_distance, tv_lower_proxy_bootstrap, wasserstein_entropic, wasserstein_exact, wasserstein_sliced,
    wasserstein_statistic, EmpiricalMeasure, Epsilon,
};
use dyson_jacobi::model::{cutoff_window, CutoffWindow};
use dyson_jacobi::rng::{stream, Domain};
use dyson_jacobi::{stats, Configuration, ModelParams};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, GridKind, OtKind};
use crate::error::{HarnessError, Result};
use crate::tmix::{antitonic_fit, estimate_tmix, first_crossing, inverse_variance, TmixEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub se: f64,
    pub points: usize,
    pub t_first: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub params: ModelParams,
    pub x0: Vec<f64>,
    pub xbar: f64,
    pub window: CutoffWindow,
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub w_se: Vec<f64>,
    /// Estimator value between two independent reference blocks.
    pub floor: f64,
    pub floor_se: f64,
    /// `sqrt(max(W^2 - floor^2, 0))`.
    pub debiased: Vec<f64>,
    pub debiased_se: Vec<f64>,
    pub tv_proxy: Vec<f64>,
    pub tv_proxy_se: Vec<f64>,
    pub mean_phi: Vec<f64>,
    pub mean_phi_se: Vec<f64>,
    pub var_phi: Vec<f64>,
    pub var_phi_se: Vec<f64>,
    pub bounds: BoundCurves,
    pub tmix: Vec<TmixEstimate>,
    pub late_slope: Option<SlopeFit>,
    pub rho: f64,
    pub projection_rate: f64,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Grid times (physical units), starting at 0.
pub fn time_grid(cfg: &Config, p: &ModelParams, c_plus: f64) -> Vec<f64> {
    let lambda = p.lambda();
    let start = cfg.t_start / lambda;
    let end = match cfg.t_end {
        Some(e) => e / lambda,
        None if 3.0 * c_plus > 2.0 * start => 3.0 * c_plus,
        None => 3.0 / lambda,
    };
    let k = cfg.points;
    let mut t = vec![0.0];
    for i in 0..k {
        let u = i as f64 / (k - 1) as f64;
        t.push(match cfg.grid {
            GridKind::Geometric => start * (end / start).powf(u),
            GridKind::Linear => start + (end - start) * u,
        });
    }
    t
}

/// `count` index blocks of `size` drawn from `0..total`, disjoint until the
/// pool is used up, then from a fresh shuffle.
pub fn index_blocks(total: usize, size: usize, count: usize, seed: u64, index: u64) -> Vec<Vec<usize>> {
    let size = size.min(total);
    let mut rng = stream(seed, Domain::Subsample, index);
    let mut perm: Vec<usize> = Vec::new();
    let mut pos = total;
    (0..count)
        .map(|_| {
            if pos + size > total {
                perm = (0..total).collect();
                perm.shuffle(&mut rng);
                pos = 0;
            }
            let mut b = perm[pos..pos + size].to_vec();
            b.sort_unstable();
            pos += size;
            b
        })
        .collect()
}

pub fn gibbs_reference(cfg: &Config, p: &ModelParams, seed: u64) -> Result<GibbsSample> {
    let control = McmcControl { chains: cfg.chains, ..McmcControl::default() };
    Ok(sample_gibbs(p, cfg.reference_m, seed, &control)?)
}

/// Transport estimate between `p` and `q` with the configured method.
pub fn distance(cfg: &Config, par: &ModelParams, p: &EmpiricalMeasure, q: &EmpiricalMeasure, seed: u64) -> Result<f64> {
    let r = match cfg.ot {
        OtKind::Exact => wasserstein_exact(p, q, cfg.order)?,
        OtKind::Entropic => wasserstein_entropic(
            p,
            q,
            Epsilon::RelativeToMeanCost(cfg.epsilon),
            cfg.order,
            &SinkhornControl::default(),
        )?,
        OtKind::Sliced => wasserstein_sliced(p, q, cfg.projections, seed, cfg.order)?,
        OtKind::Sorted => wasserstein_statistic(p, q, |x| phi(par, x), cfg.order)?,
    };
    Ok(r.distance)
}

/// `W(delta_x, reference)` from all reference atoms, with a delta-method
/// standard error.
fn point_to_cloud(x: &[f64], reference: &EmpiricalMeasure, order: u32) -> (f64, f64) {
    let d: Vec<f64> =
        (0..reference.len()).map(|k| intrinsic_distance(x, reference.point(k)).powi(order as i32)).collect();
    let cost = stats::mean(&d);
    let se = stats::std_error(&d);
    let r = order as f64;
    let w = cost.powf(1.0 / r);
    let w_se = if cost > 0.0 { se / (r * cost.powf((r - 1.0) / r)) } else { 0.0 };
    (w, w_se)
}

fn is_point_mass(m: &EmpiricalMeasure) -> bool {
    let first = m.point(0);
    (1..m.len()).all(|k| m.point(k) == first)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    (stats::mean(xs), if xs.len() > 1 { stats::std_error(xs) } else { 0.0 })
}

/// Late-time slope of `ln D(t)`: among positive times where `D` exceeds
/// three standard errors, the later half (at least three points).
pub fn late_slope(times: &[f64], d: &[f64], se: &[f64]) -> Option<SlopeFit> {
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] > 0.0 && d[k] > 3.0 * se[k] && d[k] > 0.0).collect();
    if idx.len() < 3 {
        return None;
    }
    let from = (idx.len() / 2).min(idx.len() - 3);
    let late = &idx[from..];
    let ts: Vec<f64> = late.iter().map(|&k| times[k]).collect();
    let ys: Vec<f64> = late.iter().map(|&k| d[k].ln()).collect();
    let ws: Vec<f64> = late.iter().map(|&k| if se[k] > 0.0 { (d[k] / se[k]).powi(2) } else { 1e12 }).collect();
    let fit = stats::weighted_line_fit(&ts, &ys, &ws)?;
    Some(SlopeFit { slope: fit.slope, se: fit.slope_se, points: late.len(), t_first: ts[0] })
}

/// Everything measured on one parameter set.
pub fn mixing_curve(cfg: &Config, p: &ModelParams, x0: &Configuration, seed: u64) -> Result<ExperimentReport> {
    let n = p.n();
    let xbar = x0.as_slice().iter().sum::<f64>() / n as f64;
    let window = cutoff_window(p, xbar)?;
    let times = time_grid(cfg, p, window.c_plus);
    log::info!(
        "n={n} lambda={} grid [0, {:.4e}] with {} points, M={}",
        p.lambda(),
        times.last().unwrap(),
        times.len(),
        cfg.m
    );

    let reference = gibbs_reference(cfg, p, seed)?;
    let ref_measure = EmpiricalMeasure::from_gibbs(&reference)?;
    let ens = simulate_ensemble(p, x0, &times, cfg.m, seed, &cfg.step_control(p))?;
    curve_from(cfg, p, x0, &ens, &ref_measure, window, seed)
}

/// The measurements on an existing ensemble and reference.
pub fn curve_from(
    cfg: &Config,
    p: &ModelParams,
    x0: &Configuration,
    ens: &TrajectoryEnsemble,
    reference: &EmpiricalMeasure,
    window: CutoffWindow,
    seed: u64,
) -> Result<ExperimentReport> {
    let times = ens.t_grid.clone();
    let reps = cfg.replicates;
    let ens_blocks = index_blocks(ens.m, cfg.ot_atoms, reps, seed, 1);
    let ref_blocks = index_blocks(reference.len(), cfg.ot_atoms, 3 * reps, seed, 2);

    // finite-sample floor between disjoint reference blocks
    let floor_draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let a = reference.select(&ref_blocks[reps + 2 * r])?;
            let b = reference.select(&ref_blocks[reps + 2 * r + 1])?;
            distance(cfg, p, &a, &b, seed ^ r as u64)
        })
        .collect::<Result<_>>()?;
    let (floor, floor_se) = mean_se(&floor_draws);

    let mut w = Vec::new();
    let mut w_se = Vec::new();
    let mut tv_proxy = Vec::new();
    let mut tv_proxy_se = Vec::new();
    let mut mean_phi = Vec::new();
    let mut mean_phi_se = Vec::new();
    let mut var_phi = Vec::new();
    let mut var_phi_se = Vec::new();
    for ti in 0..times.len() {
        let snap = EmpiricalMeasure::from_ensemble(ens, ti)?;
        let (wv, ws) = if is_point_mass(&snap) {
            point_to_cloud(snap.point(0), reference, cfg.order)
        } else {
            let draws: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let a = snap.select(&ens_blocks[r])?;
                    let b = reference.select(&ref_blocks[r])?;
                    distance(cfg, p, &a, &b, seed ^ ((ti * reps + r) as u64))
                })
                .collect::<Result<_>>()?;
            mean_se(&draws)
        };
        w.push(wv);
        w_se.push(ws);
        let (tv, tv_se) = tv_lower_proxy_bootstrap(&snap, reference, |x| phi(p, x), cfg.tv_bootstrap, seed ^ ti as u64);
        tv_proxy.push(tv);
        tv_proxy_se.push(tv_se);
        let ph = ens.statistic(ti, |x| phi(p, x));
        let (m, s) = mean_se(&ph);
        mean_phi.push(m);
        mean_phi_se.push(s);
        let (v, vs) = stats::variance_with_se(&ph);
        var_phi.push(v);
        var_phi_se.push(vs);
        log::debug!("t={:.4e} W={wv:.4} +- {ws:.4} tv={tv:.3}", times[ti]);
    }

    let mut debiased = Vec::new();
    let mut debiased_se = Vec::new();
    for (&wv, &ws) in w.iter().zip(&w_se) {
        let excess = wv * wv - floor * floor;
        let ex_se = ((2.0 * wv * ws).powi(2) + (2.0 * floor * floor_se).powi(2)).sqrt();
        let d = excess.max(0.0).sqrt();
        debiased.push(d);
        debiased_se.push(if d > 0.0 { ex_se / (2.0 * d) } else { ex_se.sqrt() });
    }

    let bounds = bound_curves(p, x0.as_slice(), &times, cfg.eta)?;
    let tmix = estimate_tmix(&times, &w, &w_se, &cfg.levels);
    let slope = late_slope(&times, &debiased, &debiased_se);
    let rho = p.rho();

    let mut verdicts = Vec::new();
    let worst = (0..times.len())
        .map(|k| (w[k] - bounds.w2_upper[k] - 3.0 * w_se[k], k))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
    verdicts.push(Verdict::new(
        "w_below_upper_bound",
        worst.0 <= 0.0,
        format!("max of W - bound - 3SE = {:.4e} at t = {:.4e}", worst.0, times[worst.1]),
    ));
    verdicts.push(match slope {
        Some(s) => Verdict::new(
            "late_slope",
            s.slope <= -0.9 * rho,
            format!(
                "slope {:.3} +- {:.3} over {} points from t = {:.3e}; need <= {:.3}",
                s.slope,
                s.se,
                s.points,
                s.t_first,
                -0.9 * rho
            ),
        ),
        None => Verdict::new("late_slope", false, "fewer than 3 late points above 3 standard errors".into()),
    });
    let mut tv_checked = 0;
    let mut tv_ok = true;
    for k in 0..times.len() {
        if bounds.tv_lower[k] > 0.0 {
            tv_checked += 1;
            tv_ok &= tv_proxy[k] >= bounds.tv_lower[k] - 3.0 * tv_proxy_se[k];
        }
    }
    verdicts.push(Verdict::new("tv_consistent", tv_ok, format!("{tv_checked} times with a positive analytic bound")));
    let vbound = n_over_two_lambda(p);
    let var_ok = (0..times.len()).all(|k| {
        let rel = if var_phi[k] > 0.0 { var_phi_se[k] / var_phi[k] } else { 0.0 };
        var_phi[k] <= vbound * (1.0 + 3.0 * rel)
    });
    let vmax = var_phi.iter().copied().fold(0.0, f64::max);
    verdicts.push(Verdict::new(
        "variance_bound",
        var_ok,
        format!("max Var(phi) {vmax:.4e} vs n/(2 lambda) = {vbound:.4e}"),
    ));
    if window.informative {
        for est in &tmix {
            let (lo, hi) = ((1.0 - cfg.delta) * window.c_minus, (1.0 + cfg.delta) * window.c_plus);
            let ok = est.t_mix.is_some_and(|t| t >= lo && t <= hi);
            verdicts.push(Verdict::new(
                &format!("tmix_in_window[{}]", est.epsilon),
                ok,
                format!("t_mix = {:?}, window [{lo:.4e}, {hi:.4e}]", est.t_mix),
            ));
        }
    }

    Ok(ExperimentReport {
        params: *p,
        x0: x0.as_slice().to_vec(),
        xbar: x0.as_slice().iter().sum::<f64>() / p.n() as f64,
        window,
        times,
        w,
        w_se,
        floor,
        floor_se,
        debiased,
        debiased_se,
        tv_proxy,
        tv_proxy_se,
        mean_phi,
        mean_phi_se,
        var_phi,
        var_phi_se,
        bounds,
        tmix,
        late_slope: slope,
        rho,
        projection_rate: ens.projection_rate(),
        verdicts,
    })
}

fn n_over_two_lambda(p: &ModelParams) -> f64 {
    p.n() as f64 / (2.0 * p.lambda())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub lambda: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub informative: bool,
    /// Preset large-`n` window, reported only.
    pub asymptotic_minus: f64,
    pub asymptotic_plus: f64,
    pub w0: f64,
    /// Absolute-level mixing time used to normalize time.
    pub t_mix: Option<f64>,
    pub t75: Option<f64>,
    pub t25: Option<f64>,
    /// `(t25 - t75) / t_mix`.
    pub width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub level: f64,
    pub rows: Vec<ScanRow>,
    pub curves: Vec<ExperimentReport>,
    pub verdicts: Vec<Verdict>,
}

impl ScanReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Profile of one curve: fractions of `W(0)` crossed on the monotone fit.
pub fn profile_row(r: &ExperimentReport, level: f64, asymptotic: (f64, f64)) -> ScanRow {
    let fit = antitonic_fit(&r.w, &inverse_variance(&r.w_se));
    let w0 = r.w[0];
    let t_mix = first_crossing(&r.times, &fit, level);
    let t75 = first_crossing(&r.times, &fit, 0.75 * w0);
    let t25 = first_crossing(&r.times, &fit, 0.25 * w0);
    let width = match (t75, t25, t_mix) {
        (Some(a), Some(b), Some(m)) if m > 0.0 => Some((b - a) / m),
        _ => None,
    };
    ScanRow {
        n: r.params.n(),
        lambda: r.params.lambda(),
        c_minus: r.window.c_minus,
        c_plus: r.window.c_plus,
        informative: r.window.informative,
        asymptotic_minus: asymptotic.0,
        asymptotic_plus: asymptotic.1,
        w0,
        t_mix,
        t75,
        t25,
        width,
    }
}

/// Mixing curve per preset size, then the profile widths and windows.
pub fn cutoff_scan(cfg: &Config, seed: u64) -> Result<ScanReport> {
    let preset = cfg.regime()?.ok_or_else(|| HarnessError::Config("cutoff-scan needs a preset".into()))?;
    let level = *cfg.levels.first().ok_or_else(|| HarnessError::Config("cutoff-scan needs a level".into()))?;
    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let p = preset.params(n)?;
        let x0 = cfg.initial(n)?.x0;
        let r = mixing_curve(cfg, &p, &x0, seed)?;
        let row = profile_row(&r, level, preset.window(n)?);
        log::info!(
            "n={n}: W0={:.3} t_mix={:?} width={:?} window [{:.3e}, {:.3e}]",
            row.w0,
            row.t_mix,
            row.width,
            row.c_minus,
            row.c_plus
        );
        rows.push(row);
        curves.push(r);
    }
    let mut verdicts = Vec::new();
    let widths: Vec<Option<f64>> = rows.iter().map(|r| r.width).collect();
    let decreasing = widths.iter().all(|w| w.is_some()) && widths.windows(2).all(|p| p[1].unwrap() < p[0].unwrap());
    verdicts.push(Verdict::new("widths_decreasing", decreasing, format!("{widths:?}")));
    let (lo_f, hi_f) = (1.0 - cfg.delta, 1.0 + cfg.delta);
    for row in &rows {
        let ok = row.t_mix.is_some_and(|t| t >= lo_f * row.c_minus && t <= hi_f * row.c_plus);
        verdicts.push(Verdict::new(
            &format!("tmix_in_window[n={}]", row.n),
            ok,
            format!("t_mix = {:?}, window [{:.4e}, {:.4e}]", row.t_mix, lo_f * row.c_minus, hi_f * row.c_plus),
        ));
        if !row.informative {
            verdicts.push(Verdict::new(
                &format!("window_uninformative[n={}]", row.n),
                true,
                "start mean at the equilibrium mean".into(),
            ));
        }
    }
    Ok(ScanReport { level, rows, curves, verdicts })
}
