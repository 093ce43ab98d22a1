//! Energy and flattened potential of the equilibrium measure, a MALA
//! sampler on the flattened chart, and equilibrium moment reports.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flatten_coord, unflatten_coord, Configuration, FlatConfiguration};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{stream, Domain};
use crate::stats;

/// `E(x) = -sum(c_b ln x_i + c_a ln(1 - x_i)) - beta sum_{j<i} ln|x_i - x_j|`,
/// so that `exp(-E)` is the unnormalized equilibrium density. `+inf` on the
/// boundary and on collisions.
pub fn energy(p: &ModelParams, x: &[f64]) -> f64 {
    let c = p.constants();
    let mut e = 0.0;
    for &xi in x {
        if !(xi > 0.0 && xi < 1.0) {
            return f64::INFINITY;
        }
        e -= c.energy_exp_b * xi.ln() + c.energy_exp_a * (1.0 - xi).ln();
    }
    for i in 0..x.len() {
        for j in 0..i {
            let d = (x[i] - x[j]).abs();
            if d == 0.0 {
                return f64::INFINITY;
            }
            e -= p.beta() * d.ln();
        }
    }
    e
}

fn interior_ordered(y: &[f64]) -> bool {
    y.iter().all(|&v| v > 0.0 && v < PI) && y.windows(2).all(|w| w[0] < w[1])
}

/// Flattened potential
/// `V(y) = -sum(C_b ln sin(y_i/2) + C_a ln cos(y_i/2))
///         - beta sum_{i>j} (ln sin((y_i-y_j)/2) + ln sin((y_i+y_j)/2))`.
/// `+inf` off the ordered interior.
pub fn potential(p: &ModelParams, y: &[f64]) -> f64 {
    if !interior_ordered(y) {
        return f64::INFINITY;
    }
    let c = p.constants();
    let mut v = 0.0;
    for &yi in y {
        let (s, co) = (0.5 * yi).sin_cos();
        v -= c.flat_exp_b * s.ln() + c.flat_exp_a * co.ln();
    }
    for i in 0..y.len() {
        for j in 0..i {
            v -= p.beta() * ((0.5 * (y[i] - y[j])).sin().ln() + (0.5 * (y[i] + y[j])).sin().ln());
        }
    }
    v
}

/// `V(y)` and `grad V(y)` in one pass; `+inf` (gradient untouched) off the
/// ordered interior.
pub fn potential_and_grad(p: &ModelParams, y: &[f64], grad: &mut [f64]) -> f64 {
    if !interior_ordered(y) {
        return f64::INFINITY;
    }
    let c = p.constants();
    let mut v = 0.0;
    let half: Vec<(f64, f64)> = y.iter().map(|v| (0.5 * v).sin_cos()).collect();
    for (g, &(s, co)) in grad.iter_mut().zip(&half) {
        v -= c.flat_exp_b * s.ln() + c.flat_exp_a * co.ln();
        *g = -0.5 * c.flat_exp_b * co / s + 0.5 * c.flat_exp_a * s / co;
    }
    let hb = 0.5 * p.beta();
    // pair factors are multiplied up and logged once per row, flushing early so the product stays normal
    let mut log_pairs = 0.0;
    for i in 0..y.len() {
        let mut prod = 1.0;
        for j in 0..i {
            let (sm, cm) = (0.5 * (y[i] - y[j])).sin_cos();
            // both halves lie in (0, pi/2), so the sum formula has no cancellation
            let ((si, ci), (sj, cj)) = (half[i], half[j]);
            let (sp, cp) = (si * cj + ci * sj, ci * cj - si * sj);
            let f = sm * sp;
            if f < 1e-100 {
                log_pairs += f.ln();
            } else {
                prod *= f;
                if prod < 1e-150 {
                    log_pairs += prod.ln();
                    prod = 1.0;
                }
            }
            let cot_m = cm / sm;
            let cot_p = cp / sp;
            grad[i] -= hb * (cot_m + cot_p);
            grad[j] -= hb * (cot_p - cot_m);
        }
        log_pairs += prod.ln();
    }
    v -= p.beta() * log_pairs;
    v
}

/// Analytic gradient of `V` written into `out`.
pub fn grad_potential_into(p: &ModelParams, y: &[f64], out: &mut [f64]) -> Result<()> {
    if y.len() != p.n() || out.len() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: y.len().min(out.len()) });
    }
    if potential_and_grad(p, y, out).is_infinite() {
        return Err(Error::Singular);
    }
    Ok(())
}

/// Analytic Hessian of `V` written into `h` (`n x n`).
pub fn hessian_potential_into(p: &ModelParams, y: &[f64], h: &mut DMatrix<f64>) -> Result<()> {
    let n = y.len();
    if n != p.n() || h.nrows() != n || h.ncols() != n {
        return Err(Error::Dimension { expected: p.n(), got: n });
    }
    if !interior_ordered(y) {
        return Err(Error::Singular);
    }
    let c = p.constants();
    let qb = 0.25 * p.beta();
    h.fill(0.0);
    let half: Vec<(f64, f64)> = y.iter().map(|v| (0.5 * v).sin_cos()).collect();
    for (i, &(s, co)) in half.iter().enumerate() {
        h[(i, i)] = 0.25 * c.flat_exp_b / (s * s) + 0.25 * c.flat_exp_a / (co * co);
    }
    for i in 0..n {
        for j in 0..i {
            let minus = 1.0 / (0.5 * (y[i] - y[j])).sin().powi(2);
            let sp = half[i].0 * half[j].1 + half[i].1 * half[j].0;
            let plus = 1.0 / (sp * sp);
            h[(i, i)] += qb * (minus + plus);
            h[(j, j)] += qb * (minus + plus);
            h[(i, j)] = qb * (plus - minus);
            h[(j, i)] = h[(i, j)];
        }
    }
    Ok(())
}

pub fn grad_potential(p: &ModelParams, y: &FlatConfiguration) -> Result<Vec<f64>> {
    let mut g = vec![0.0; y.len()];
    grad_potential_into(p, y.as_slice(), &mut g)?;
    Ok(g)
}

/// Metropolis-adjusted Langevin kernel targeting `exp(-V)` on the ordered
/// flattened chart, with proposal `y - h grad V(y) + sqrt(2h) xi`.
#[derive(Clone, Copy, Debug)]
pub struct MalaKernel<'a> {
    pub params: &'a ModelParams,
    pub h: f64,
}

#[derive(Clone, Debug)]
struct ChainState {
    y: Vec<f64>,
    v: f64,
    grad: Vec<f64>,
}

impl ChainState {
    fn new(p: &ModelParams, y: Vec<f64>) -> Result<Self> {
        let mut grad = vec![0.0; y.len()];
        let v = potential_and_grad(p, &y, &mut grad);
        if !v.is_finite() {
            return Err(Error::Singular);
        }
        Ok(Self { y, v, grad })
    }
}

impl<'a> MalaKernel<'a> {
    /// `ln q(to | from)` up to the Gaussian normalizer.
    fn log_q(&self, to: &[f64], from: &[f64], grad_from: &[f64]) -> f64 {
        let ss: f64 = to.iter().zip(from).zip(grad_from).map(|((t, f), g)| (t - f + self.h * g).powi(2)).sum();
        -ss / (4.0 * self.h)
    }

    /// `ln[pi(y') q(y | y') / (pi(y) q(y' | y))]`; `-inf` when `y'` is
    /// outside the support.
    pub fn log_accept_ratio(&self, y: &[f64], y_prop: &[f64]) -> f64 {
        let n = y.len();
        let mut g = vec![0.0; n];
        let mut g_prop = vec![0.0; n];
        let v = potential_and_grad(self.params, y, &mut g);
        let v_prop = potential_and_grad(self.params, y_prop, &mut g_prop);
        if !v_prop.is_finite() {
            return f64::NEG_INFINITY;
        }
        (v - v_prop) + self.log_q(y, y_prop, &g_prop) - self.log_q(y_prop, y, &g)
    }

    /// Draw a proposal from `y`.
    pub fn propose(&self, y: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        potential_and_grad(self.params, y, &mut g);
        let s = (2.0 * self.h).sqrt();
        y.iter().zip(&g).map(|(&yi, &gi)| yi - self.h * gi + s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn transition(&self, st: &mut ChainState, prop: &mut ChainState, rng: &mut ChaCha8Rng) -> bool {
        let s = (2.0 * self.h).sqrt();
        for i in 0..st.y.len() {
            prop.y[i] = st.y[i] - self.h * st.grad[i] + s * rng.sample::<f64, _>(StandardNormal);
        }
        prop.v = potential_and_grad(self.params, &prop.y, &mut prop.grad);
        let u: f64 = rng.random();
        if !prop.v.is_finite() {
            log::debug!("mala proposal outside support");
            return false;
        }
        let log_r = (st.v - prop.v) + self.log_q(&st.y, &prop.y, &prop.grad) - self.log_q(&prop.y, &st.y, &st.grad);
        log::debug!("mala proposal log_r={log_r:.4}");
        if u.ln() < log_r {
            std::mem::swap(st, prop);
            true
        } else {
            false
        }
    }

    fn run(&self, st: &mut ChainState, steps: usize, rng: &mut ChaCha8Rng) -> usize {
        let mut prop = st.clone();
        (0..steps).filter(|_| self.transition(st, &mut prop, rng)).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcControl {
    pub chains: usize,
    pub tune_steps: usize,
    pub max_tune_rounds: usize,
    pub burn_in: usize,
    pub pilot_steps: usize,
    /// Extra attempts with doubled thinning when ESS or Rhat fall short.
    pub max_retries: usize,
    /// Thinning interval in units of the pilot autocorrelation time of `S`.
    pub thin_factor: f64,
}

impl Default for McmcControl {
    fn default() -> Self {
        Self {
            chains: 4,
            tune_steps: 200,
            max_tune_rounds: 60,
            burn_in: 2000,
            pilot_steps: 4000,
            max_retries: 3,
            thin_factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsDiagnostics {
    pub acceptance: f64,
    pub step_size: f64,
    pub tuning_rounds: usize,
    pub thin: usize,
    pub chains: usize,
    /// Effective sample size of `S(x) = sum x_i` over the retained states.
    pub ess_sum: f64,
    pub rhat_sum: f64,
}

/// Retained equilibrium states, row-major `M x n`, in original coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsSample {
    pub n: usize,
    data: Vec<f64>,
    pub diagnostics: GibbsDiagnostics,
}

impl GibbsSample {
    pub fn len(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.data.len() / self.n
        }
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn configuration(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks(self.n)
    }
    pub fn sums(&self) -> Vec<f64> {
        self.iter().map(|c| c.iter().sum()).collect()
    }
    /// Rows `[start, end)` as a new sample sharing the diagnostics.
    pub fn slice(&self, start: usize, end: usize) -> GibbsSample {
        GibbsSample {
            n: self.n,
            data: self.data[start * self.n..end * self.n].to_vec(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// Equispaced flattened starting point.
fn start_point(n: usize) -> Vec<f64> {
    (0..n).map(|i| flatten_coord((i + 1) as f64 / (n + 1) as f64)).collect()
}

fn flat_sum(y: &[f64]) -> f64 {
    y.iter().map(|&v| unflatten_coord(v)).sum()
}

/// Sample the equilibrium with `control.chains` MALA chains in parallel.
pub fn sample_gibbs(p: &ModelParams, m: usize, seed: u64, control: &McmcControl) -> Result<GibbsSample> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let chains = control.chains.max(1);
    let n = p.n();
    let mut rngs: Vec<ChaCha8Rng> = (0..chains).map(|c| stream(seed, Domain::Mcmc, c as u64)).collect();
    let mut states: Vec<ChainState> = (0..chains).map(|_| ChainState::new(p, start_point(n))).collect::<Result<_>>()?;

    // step size tuning, which doubles as the first part of burn-in
    let mut h = 1.0 / (p.lambda() * n as f64);
    let mut rounds = 0;
    let acceptance = loop {
        let kernel = MalaKernel { params: p, h };
        let accepted: usize = states
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .map(|(st, rng)| kernel.run(st, control.tune_steps, rng))
            .sum();
        let acceptance = accepted as f64 / (chains * control.tune_steps) as f64;
        rounds += 1;
        if (0.5..=0.7).contains(&acceptance) || rounds >= control.max_tune_rounds {
            break acceptance;
        }
        h *= (3.0 * (acceptance - 0.6)).exp();
    };
    log::debug!("mala tuned h={h:.3e} acceptance={acceptance:.3} after {rounds} rounds");
    if !(0.2..=0.9).contains(&acceptance) {
        return Err(Error::TuningFailure { acceptance, rounds });
    }
    let kernel = MalaKernel { params: p, h };

    states.par_iter_mut().zip(rngs.par_iter_mut()).for_each(|(st, rng)| {
        kernel.run(st, control.burn_in, rng);
    });

    // pilot run for the autocorrelation time of S
    let pilot: Vec<Vec<f64>> = states
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .map(|(st, rng)| {
            let mut prop = st.clone();
            (0..control.pilot_steps)
                .map(|_| {
                    kernel.transition(st, &mut prop, rng);
                    flat_sum(&st.y)
                })
                .collect()
        })
        .collect();
    let total = (chains * control.pilot_steps) as f64;
    let tau = total / stats::effective_sample_size(&pilot).max(1.0);
    let mut thin = (control.thin_factor * tau).ceil().max(1.0) as usize;

    let per_chain = m.div_ceil(chains);
    let mut attempt = 0;
    loop {
        let draws: Vec<Vec<Vec<f64>>> = states
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .map(|(st, rng)| {
                let mut prop = st.clone();
                let mut out = Vec::with_capacity(per_chain);
                for _ in 0..per_chain {
                    for _ in 0..thin {
                        kernel.transition(st, &mut prop, rng);
                    }
                    out.push(st.y.clone());
                }
                out
            })
            .collect();
        let sums: Vec<Vec<f64>> = draws.iter().map(|c| c.iter().map(|y| flat_sum(y)).collect()).collect();
        let ess = stats::effective_sample_size(&sums);
        let rhat = stats::split_rhat(&sums);
        let wanted = m as f64 / 2.0;
        let rhat_ok = rhat < 1.01 || per_chain < 4;
        if (ess >= wanted && rhat_ok) || attempt >= control.max_retries {
            if !(ess >= wanted && rhat_ok) {
                return Err(Error::ChainsNotConverged { rhat, ess, wanted });
            }
            let mut data = Vec::with_capacity(m * n);
            for y in draws.iter().flatten().take(m) {
                data.extend(y.iter().map(|&v| unflatten_coord(v)));
            }
            return Ok(GibbsSample {
                n,
                data,
                diagnostics: GibbsDiagnostics {
                    acceptance,
                    step_size: h,
                    tuning_rounds: rounds,
                    thin,
                    chains,
                    ess_sum: ess,
                    rhat_sum: rhat,
                },
            });
        }
        log::debug!("ess {ess:.0} / rhat {rhat:.4} short of target; doubling thinning from {thin}");
        thin *= 2;
        attempt += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean_sum: Estimate,
    /// `n b / lambda`.
    pub target_mean_sum: f64,
    pub var_sum: Estimate,
    /// `E[sum x_i (1 - x_i)]`, the mean carre du champ of `S`.
    pub mean_gamma: Estimate,
    pub lambda_var_sum: Estimate,
    /// `lambda Var(S) - E[sum x_i(1 - x_i)]`, zero at equilibrium.
    pub identity_gap: Estimate,
}

/// Equilibrium moments of `S` with standard errors inflated by the
/// retained-sample autocorrelation (`sqrt(M / ESS)`).
pub fn moment_report(p: &ModelParams, sample: &GibbsSample) -> MomentReport {
    let m = sample.len() as f64;
    let inflate = if sample.diagnostics.ess_sum > 0.0 { (m / sample.diagnostics.ess_sum).max(1.0).sqrt() } else { 1.0 };
    let est = |xs: &[f64]| Estimate { value: stats::mean(xs), se: stats::std_error(xs) * inflate };
    let sums = sample.sums();
    let gammas: Vec<f64> = sample.iter().map(|c| c.iter().map(|x| x * (1.0 - x)).sum()).collect();
    let (var, var_se) = stats::variance_with_se(&sums);
    let mean_s = stats::mean(&sums);
    let lambda = p.lambda();
    let gaps: Vec<f64> =
        sums.iter().zip(&gammas).map(|(s, g)| lambda * (s - mean_s).powi(2) * m / (m - 1.0).max(1.0) - g).collect();
    MomentReport {
        mean_sum: est(&sums),
        target_mean_sum: p.equilibrium_sum_mean(),
        var_sum: Estimate { value: var, se: var_se * inflate },
        mean_gamma: est(&gammas),
        lambda_var_sum: Estimate { value: lambda * var, se: lambda * var_se * inflate },
        identity_gap: est(&gaps),
    }
}

/// Configuration view of a flattened state, for callers holding raw vectors.
pub fn to_configuration(y: &[f64]) -> Result<Configuration> {
    Configuration::new(y.iter().map(|&v| unflatten_coord(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Beta, ContinuousCDF};

    fn p(n: usize, beta: f64, a: f64, b: f64) -> ModelParams {
        ModelParams::new(n, beta, a, b).unwrap()
    }

    fn random_flat(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..PI - 0.05)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn energy_examples() {
        let pp = p(2, 1.0, 8.0, 8.0);
        let e = energy(&pp, &[0.2, 0.6]);
        // c_a = c_b = 8 - 1/2 - 1 at n = 2
        let want = -(6.5 * (0.2f64.ln() + 0.8f64.ln() + 0.6f64.ln() + 0.4f64.ln()) + 0.4f64.ln());
        assert!((e - want).abs() < 1e-12);
        assert_eq!(energy(&pp, &[0.3, 0.3]), f64::INFINITY);
        assert_eq!(energy(&pp, &[0.0, 0.3]), f64::INFINITY);

        let one = p(1, 1.0, 8.0, 8.0);
        let mid = energy(&one, &[0.5]);
        for k in 1..100 {
            assert!(energy(&one, &[k as f64 / 100.0]) >= mid);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream(21, Domain::Test, 0);
        for &(n, beta, a, b) in &[(1, 1.0, 8.0, 8.0), (2, 1.0, 8.0, 8.0), (4, 2.0, 16.0, 9.0), (8, 1.0, 64.0, 64.0)] {
            let pp = p(n, beta, a, b);
            for _ in 0..50 {
                let y = random_flat(&mut rng, n);
                let g = grad_potential(&pp, &FlatConfiguration::new(y.clone()).unwrap()).unwrap();
                for i in 0..n {
                    let h = 1e-5;
                    let at = |d: f64| {
                        let mut z = y.clone();
                        z[i] += d;
                        potential(&pp, &z)
                    };
                    let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
                    let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
                    assert!(rel < 1e-6, "n={n} i={i} fd={fd} g={}", g[i]);
                }
            }
        }
        let g = grad_potential(&p(1, 1.0, 8.0, 8.0), &FlatConfiguration::new(vec![PI / 2.0]).unwrap()).unwrap();
        assert!(g[0].abs() < 1e-13);
    }

    #[test]
    fn potential_matches_energy_up_to_jacobian() {
        let mut rng = stream(22, Domain::Test, 0);
        for &(n, beta, a, b) in &[(1, 1.0, 8.0, 8.0), (3, 2.0, 12.0, 7.0), (5, 1.0, 16.0, 20.0)] {
            let pp = p(n, beta, a, b);
            // -E(x) = -V(A(x)) + sum ln A'(x) + const
            let reduced = |x: &[f64]| {
                let y: Vec<f64> = x.iter().map(|&v| flatten_coord(v)).collect();
                potential(&pp, &y) + x.iter().map(|&v| 0.5 * (v * (1.0 - v)).ln()).sum::<f64>()
            };
            for _ in 0..20 {
                let mut x1: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
                let mut x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
                x1.sort_by(f64::total_cmp);
                x2.sort_by(f64::total_cmp);
                let lhs = energy(&pp, &x1) - energy(&pp, &x2);
                let rhs = reduced(&x1) - reduced(&x2);
                assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn kernel_is_reversible() {
        let mut rng = stream(23, Domain::Test, 0);
        let pp = p(4, 1.0, 8.0, 8.0);
        let kernel = MalaKernel { params: &pp, h: 0.01 };
        for _ in 0..200 {
            let y = random_flat(&mut rng, 4);
            let y2 = kernel.propose(&y, &mut rng);
            let fwd = kernel.log_accept_ratio(&y, &y2);
            if fwd.is_finite() {
                let back = kernel.log_accept_ratio(&y2, &y);
                assert!((fwd + back).abs() < 1e-9 * fwd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn one_particle_is_beta() {
        let pp = p(1, 1.0, 8.0, 8.0);
        let s = sample_gibbs(&pp, 10_000, 2024, &McmcControl::default()).unwrap();
        assert!(s.diagnostics.ess_sum >= 5000.0);
        let beta = Beta::new(8.0, 8.0).unwrap();
        let xs: Vec<f64> = s.iter().map(|c| c[0]).collect();
        let ks = stats::ks_statistic(&xs, |x| beta.cdf(x));
        // 0.0136 is the 95% KS quantile at this size for independent draws
        assert!(ks < 0.0136 * (10_000.0 / s.diagnostics.ess_sum).sqrt(), "ks {ks}");

        let r = moment_report(&pp, &s);
        assert!((r.var_sum.value - 64.0 / (256.0 * 17.0)).abs() < 3.0 * r.var_sum.se);
        assert!((r.mean_gamma.value - 0.235294).abs() < 3.0 * r.mean_gamma.se);
        assert!(r.identity_gap.value.abs() < 3.0 * r.identity_gap.se);
    }

    #[test]
    fn sum_mean_and_symmetry() {
        let pp = p(4, 1.0, 8.0, 8.0);
        let s = sample_gibbs(&pp, 10_000, 7, &McmcControl::default()).unwrap();
        assert!(s.iter().all(|c| c.windows(2).all(|w| w[0] <= w[1]) && c.iter().all(|&v| (0.0..=1.0).contains(&v))));
        let r = moment_report(&pp, &s);
        assert_eq!(r.target_mean_sum, 2.0);
        assert!((r.mean_sum.value - 2.0).abs() < 3.0 * r.mean_sum.se);
        let sums = s.sums();
        let sk = stats::skewness(&sums);
        let sk_se = (6.0 / s.diagnostics.ess_sum).sqrt();
        assert!(sk.abs() < 3.0 * sk_se, "skew {sk}");
    }
}
