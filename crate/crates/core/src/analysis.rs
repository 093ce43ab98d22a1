//! Spectral objects and bound formulas: the affine eigenfunction and the
//! generator, decay and variance checks on ensembles, the Hessian of the
//! flattened potential, and the TV / Wasserstein / KL bound curves.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dj_drift_into, flatten_coord, unflatten_coord, TrajectoryEnsemble};
use crate::equilibrium::{grad_potential_into, hessian_potential_into};
use crate::error::{Error, Result};
use crate::geometry::NORMALIZATION;
use crate::model::{cutoff_window, ModelParams};
use crate::stats;

/// A function with exact gradient and diagonal Hessian, as needed by the
/// generator (which has no mixed second-order terms).
pub trait SmoothFunction {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian_diag(&self, x: &[f64], out: &mut [f64]);
}

/// Closure-backed [`SmoothFunction`].
pub struct FnSmooth<F, G, H> {
    pub value: F,
    pub gradient: G,
    pub hessian_diag: H,
}

impl<F, G, H> SmoothFunction for FnSmooth<F, G, H>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
    H: Fn(&[f64], &mut [f64]),
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }
    fn hessian_diag(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian_diag)(x, out)
    }
}

/// `phi(x) = sum x_i - nb/lambda`, with `G phi = -lambda phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenfunction {
    pub offset: f64,
    /// Decay rate; the eigenvalue is `-rate`.
    pub rate: f64,
}

impl Eigenfunction {
    pub fn new(p: &ModelParams) -> Self {
        Self { offset: p.equilibrium_sum_mean(), rate: p.lambda() }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() - self.offset
    }

    /// Same function in the flattened chart: `sum sin^2(y_i/2) - nb/lambda`.
    pub fn eval_flat(&self, y: &[f64]) -> f64 {
        y.iter().map(|&v| unflatten_coord(v)).sum::<f64>() - self.offset
    }
}

impl SmoothFunction for Eigenfunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(1.0);
    }
    fn hessian_diag(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Shorthand for `Eigenfunction::new(p).eval(x)`.
pub fn phi(p: &ModelParams, x: &[f64]) -> f64 {
    Eigenfunction::new(p).eval(x)
}

/// `(G f)(x) = sum x_i(1-x_i) f_ii + sum drift_i f_i`.
pub fn apply_generator(p: &ModelParams, f: &impl SmoothFunction, x: &[f64]) -> Result<f64> {
    let mut drift = vec![0.0; x.len()];
    dj_drift_into(p, x, &mut drift)?;
    Ok(generator_from_drift(f, x, &drift))
}

/// The generator with a caller-supplied drift vector at `x`.
pub fn generator_from_drift(f: &impl SmoothFunction, x: &[f64], drift: &[f64]) -> f64 {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    f.gradient(x, &mut grad);
    f.hessian_diag(x, &mut hess);
    (0..n).map(|i| x[i] * (1.0 - x[i]) * hess[i] + drift[i] * grad[i]).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub se: f64,
    pub intercept: f64,
    /// Grid times that carried signal and entered the fit.
    pub times_used: Vec<f64>,
}

/// Weighted least-squares slope of `ln|E stat(X_t)|` against `t`, using
/// only times where the mean exceeds five standard errors.
pub fn decay_fit(ens: &TrajectoryEnsemble, stat: impl Fn(&[f64]) -> f64) -> Result<DecayFit> {
    let values: Vec<Vec<f64>> = (0..ens.t_grid.len()).map(|ti| ens.statistic(ti, &stat)).collect();
    decay_fit_samples(&ens.t_grid, &values)
}

/// [`decay_fit`] on per-time samples of the statistic.
pub fn decay_fit_samples(times: &[f64], values: &[Vec<f64>]) -> Result<DecayFit> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (&t, v) in times.iter().zip(values) {
        let m = stats::mean(v);
        let se = stats::std_error(v);
        if m.abs() > 5.0 * se && m != 0.0 {
            let rel = (se / m.abs()).max(1e-6);
            ts.push(t);
            ys.push(m.abs().ln());
            ws.push(1.0 / (rel * rel));
        }
    }
    if ts.len() < 4 {
        return Err(Error::InsufficientSignal(format!("{} grid times above 5 standard errors, need 4", ts.len())));
    }
    let fit = stats::weighted_line_fit(&ts, &ys, &ws)
        .ok_or_else(|| Error::InsufficientSignal("degenerate time grid".into()))?;
    Ok(DecayFit { rate: -fit.slope, se: fit.slope_se, intercept: fit.intercept, times_used: ts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub times: Vec<f64>,
    pub variance: Vec<f64>,
    pub se: Vec<f64>,
    /// `n / (2 lambda)`.
    pub bound: f64,
    pub ok: Vec<bool>,
    pub passed: bool,
}

/// Empirical `Var(phi(X_t))` per grid time against `n/(2 lambda)`, allowing
/// three relative standard errors.
pub fn variance_check(ens: &TrajectoryEnsemble) -> VarianceReport {
    let p = &ens.params;
    let ef = Eigenfunction::new(p);
    let bound = p.n() as f64 / (2.0 * p.lambda());
    let mut variance = Vec::new();
    let mut se = Vec::new();
    let mut ok = Vec::new();
    for ti in 0..ens.t_grid.len() {
        let (v, s) = stats::variance_with_se(&ens.statistic(ti, |x| ef.eval(x)));
        let rel = if v > 0.0 { s / v } else { 0.0 };
        ok.push(v <= bound * (1.0 + 3.0 * rel));
        variance.push(v);
        se.push(s);
    }
    let passed = ok.iter().all(|&b| b);
    VarianceReport { times: ens.t_grid.clone(), variance, se, bound, ok, passed }
}

/// Analytic Hessian of the flattened potential at an ordered interior `y`.
pub fn hessian_v(p: &ModelParams, y: &[f64]) -> Result<DMatrix<f64>> {
    let mut h = DMatrix::zeros(y.len(), y.len());
    hessian_potential_into(p, y, &mut h)?;
    Ok(h)
}

/// Hessian by five-point differences of the analytic gradient.
pub fn hessian_v_fd(p: &ModelParams, y: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = y.len();
    let mut out = DMatrix::zeros(n, n);
    let mut yy = y.to_vec();
    let mut g = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for j in 0..n {
        for (k, off) in [-2.0, -1.0, 1.0, 2.0].into_iter().enumerate() {
            yy[j] = y[j] + off * h;
            grad_potential_into(p, &yy, &mut g[k])?;
        }
        yy[j] = y[j];
        for i in 0..n {
            out[(i, j)] = (g[0][i] - 8.0 * g[1][i] + 8.0 * g[2][i] - g[3][i]) / (12.0 * h);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub points: usize,
    pub min_eigenvalues: Vec<f64>,
    /// `(C_a + C_b) / 4`.
    pub bound: f64,
    /// Raw `min eigenvalue - bound` per point, not clipped.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub mean_margin: f64,
    /// Infimum of the one-particle curvature, `(sqrt C_a + sqrt C_b)^2 / 4`.
    pub single_particle_infimum: f64,
    /// Largest relative Frobenius residual of the finite-difference check.
    pub fd_max_residual: f64,
    pub fd_points: usize,
}

impl CurvatureReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_margin >= -tol
    }
}

/// Smallest eigenvalue of `Hess V` at each flattened point against the
/// curvature bound; the first `fd_points` points are also checked by
/// finite differences.
pub fn cd_verify(p: &ModelParams, points: &[Vec<f64>], fd_points: usize) -> Result<CurvatureReport> {
    let min_eigenvalues = points
        .par_iter()
        .map(|y| hessian_v(p, y).map(|h| SymmetricEigen::new(h).eigenvalues.min()))
        .collect::<Result<Vec<f64>>>()?;
    let c = p.constants();
    let bound = 0.25 * (c.flat_exp_a + c.flat_exp_b);
    let margins: Vec<f64> = min_eigenvalues.iter().map(|l| l - bound).collect();
    let fd_points = fd_points.min(points.len());
    let mut fd_max_residual: f64 = 0.0;
    for y in &points[..fd_points] {
        let a = hessian_v(p, y)?;
        let step = 1e-4 * y.iter().zip(y.iter().skip(1).chain([&PI])).map(|(u, v)| v - u).fold(y[0], f64::min);
        let d = hessian_v_fd(p, y, step)?;
        fd_max_residual = fd_max_residual.max((&a - &d).norm() / a.norm());
    }
    Ok(CurvatureReport {
        points: points.len(),
        bound,
        min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        mean_margin: stats::mean(&margins),
        margins,
        min_eigenvalues,
        single_particle_infimum: 0.25 * (c.flat_exp_a.sqrt() + c.flat_exp_b.sqrt()).powi(2),
        fd_max_residual,
        fd_points,
    })
}

fn psi_nonzero(p: &ModelParams, x0: &[f64]) -> Result<f64> {
    let psi = phi(p, x0);
    // zero up to the rounding of the coordinate sum
    if psi.abs() <= 1e-12 * (p.n() as f64).max(p.equilibrium_sum_mean()) {
        return Err(Error::InvalidArgument("phi(x0) = 0: the TV lower bound is vacuous".into()));
    }
    Ok(psi)
}

/// `max(0, 1 - 6 (nb/lambda) / phi(x0)^2 * e^{2 lambda t})`.
pub fn tv_lower_bound(p: &ModelParams, x0: &[f64], t: f64) -> Result<f64> {
    tv_lower_bound_calibrated(p, x0, t, p.equilibrium_sum_mean())
}

/// As [`tv_lower_bound`] with `nb/lambda` replaced by a measured
/// equilibrium variance of the coordinate sum.
pub fn tv_lower_bound_calibrated(p: &ModelParams, x0: &[f64], t: f64, var_sum: f64) -> Result<f64> {
    let psi = psi_nonzero(p, x0)?;
    Ok((1.0 - 6.0 * var_sum / (psi * psi) * (2.0 * p.lambda() * t).exp()).max(0.0))
}

/// Time at which the unclamped TV lower bound reaches 0; negative when the
/// bound is already vacuous at `t = 0`.
pub fn tv_lower_bound_zero(p: &ModelParams, x0: &[f64]) -> Result<f64> {
    let psi = psi_nonzero(p, x0)?;
    Ok((psi * psi / (6.0 * p.equilibrium_sum_mean())).ln() / (2.0 * p.lambda()))
}

/// `pi e^{-rho t} sqrt(S(x0) + nb/lambda)`, an upper bound on `W(Law X_t, pi)`
/// for the flattened-chart distance.
pub fn w2_upper_bound(p: &ModelParams, x0: &[f64], t: f64) -> f64 {
    2.0 * w2_upper_bound_half_angle(p, x0, t)
}

/// The same bound for the distance built from `asin sqrt` differences
/// (half the flattened one).
pub fn w2_upper_bound_half_angle(p: &ModelParams, x0: &[f64], t: f64) -> f64 {
    let s: f64 = x0.iter().sum();
    0.5 * PI * (-p.rho() * t).exp() * (s + p.equilibrium_sum_mean()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizedBounds {
    /// `W^2 / (4 eta)`.
    pub kl: f64,
    /// `sqrt(W^2 / (2 eta))`, so that `tv^2 = 2 kl`.
    pub tv: f64,
}

/// KL and TV bounds at `t + eta` from a Wasserstein distance at `t`.
pub fn kl_regularization_bound(w: f64, eta: f64) -> Result<RegularizedBounds> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let w2 = w * w;
    Ok(RegularizedBounds { kl: w2 / (4.0 * eta), tv: (w2 / (2.0 * eta)).sqrt() })
}

/// `phi(x0)^2 lambda / (n b)`; large values along a sequence signal the
/// L^p cutoff condition.
pub fn lp_cutoff_diagnostic(p: &ModelParams, x0: &[f64]) -> f64 {
    let psi = phi(p, x0);
    psi * psi * p.lambda() / (p.n() as f64 * p.b())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCurves {
    pub times: Vec<f64>,
    pub tv_lower: Vec<f64>,
    pub w2_upper: Vec<f64>,
    /// KL and TV upper bounds at `times[k] + eta`.
    pub kl_upper: Vec<f64>,
    pub tv_upper: Vec<f64>,
    pub eta: f64,
    pub window: (f64, f64),
    pub normalization: String,
}

/// All bound curves on a time grid; `eta` defaults to `1/(2 rho)`.
pub fn bound_curves(p: &ModelParams, x0: &[f64], times: &[f64], eta: Option<f64>) -> Result<BoundCurves> {
    let eta = eta.unwrap_or(0.5 / p.rho());
    let xbar = x0.iter().sum::<f64>() / x0.len() as f64;
    let w = cutoff_window(p, xbar)?;
    let mut c = BoundCurves {
        times: times.to_vec(),
        tv_lower: Vec::with_capacity(times.len()),
        w2_upper: Vec::with_capacity(times.len()),
        kl_upper: Vec::with_capacity(times.len()),
        tv_upper: Vec::with_capacity(times.len()),
        eta,
        window: (w.c_minus, w.c_plus),
        normalization: NORMALIZATION.to_string(),
    };
    for &t in times {
        c.tv_lower.push(tv_lower_bound(p, x0, t).unwrap_or(0.0));
        let wt = w2_upper_bound(p, x0, t);
        let r = kl_regularization_bound(wt, eta)?;
        c.w2_upper.push(wt);
        c.kl_upper.push(r.kl);
        c.tv_upper.push(r.tv.min(1.0));
    }
    Ok(c)
}

/// Flattened copy of a configuration, for feeding samples to [`cd_verify`].
pub fn flat_point(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| flatten_coord(v)).collect()
}
