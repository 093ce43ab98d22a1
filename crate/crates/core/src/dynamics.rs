//! Drift and diffusion of the particle system in both coordinate charts,
//! the flattening map, a retrying Euler-Maruyama step and parallel ensemble
//! simulation.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::equilibrium::{grad_potential_into, hessian_potential_into, potential_and_grad};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{seek_block, stream, Domain};

/// Ordered positions in `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Configuration(Vec<f64>);

/// Ordered flattened positions in `[0,pi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FlatConfiguration(Vec<f64>);

fn check_ordered(v: &[f64], lo: f64, hi: f64) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { index: i, value: x, lo, hi });
        }
    }
    for (i, w) in v.windows(2).enumerate() {
        if w[0] > w[1] {
            return Err(Error::Ordering { index: i, left: w[0], right: w[1] });
        }
    }
    Ok(())
}

macro_rules! ordered_vec {
    ($t:ident, $hi:expr) => {
        impl $t {
            pub fn new(v: Vec<f64>) -> Result<Self> {
                check_ordered(&v, 0.0, $hi)?;
                Ok(Self(v))
            }
            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }
            pub fn len(&self) -> usize {
                self.0.len()
            }
            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }
        }
        impl TryFrom<Vec<f64>> for $t {
            type Error = Error;
            fn try_from(v: Vec<f64>) -> Result<Self> {
                Self::new(v)
            }
        }
        impl From<$t> for Vec<f64> {
            fn from(c: $t) -> Self {
                c.0
            }
        }
    };
}

ordered_vec!(Configuration, 1.0);
ordered_vec!(FlatConfiguration, PI);

impl Configuration {
    /// Coordinate sum `S(x)`.
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// `A(x) = 2 asin(sqrt(x))`.
#[inline]
pub fn flatten_coord(x: f64) -> f64 {
    2.0 * x.clamp(0.0, 1.0).sqrt().asin()
}

/// `A^{-1}(y) = sin^2(y/2)`.
#[inline]
pub fn unflatten_coord(y: f64) -> f64 {
    let s = (0.5 * y).sin();
    s * s
}

pub fn flatten(x: &Configuration) -> FlatConfiguration {
    // A is increasing, so ordering survives.
    FlatConfiguration(x.0.iter().map(|&v| flatten_coord(v)).collect())
}

pub fn unflatten(y: &FlatConfiguration) -> Configuration {
    Configuration(y.0.iter().map(|&v| unflatten_coord(v)).collect())
}

/// Drift of the original SDE written into `out`.
pub fn dj_drift_into(p: &ModelParams, x: &[f64], out: &mut [f64]) -> Result<()> {
    if x.len() != p.n() || out.len() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: x.len().min(out.len()) });
    }
    let (a, b, beta) = (p.a(), p.b(), p.beta());
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = b - (a + b) * xi;
    }
    let half_beta = 0.5 * beta;
    for i in 0..x.len() {
        for j in 0..i {
            let d = x[i] - x[j];
            if d == 0.0 {
                return Err(Error::Collision { i: j, j: i });
            }
            let h = x[i] * (1.0 - x[j]) + x[j] * (1.0 - x[i]);
            let t = half_beta * h / d;
            out[i] += t;
            out[j] -= t;
        }
    }
    Ok(())
}

pub fn dj_drift(p: &ModelParams, x: &Configuration) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    dj_drift_into(p, x.as_slice(), &mut out)?;
    Ok(out)
}

pub fn dj_diffusion(x: &Configuration) -> Vec<f64> {
    x.0.iter().map(|&v| (2.0 * (v * (1.0 - v)).max(0.0)).sqrt()).collect()
}

/// Drift of the flattened SDE, `-grad V(y)`.
pub fn edj_drift(p: &ModelParams, y: &FlatConfiguration) -> Result<Vec<f64>> {
    let mut out = vec![0.0; y.len()];
    grad_potential_into(p, y.as_slice(), &mut out)?;
    out.iter_mut().for_each(|g| *g = -*g);
    Ok(out)
}

/// DJ drift pushed through `y = 2 asin(sqrt(x))` by Ito's formula. Equals
/// [`edj_drift`] at `flatten(x)`.
pub fn ito_flat_drift(p: &ModelParams, x: &Configuration) -> Result<Vec<f64>> {
    let mut out = dj_drift(p, x)?;
    for (d, &v) in out.iter_mut().zip(x.as_slice()) {
        let s = (v * (1.0 - v)).sqrt();
        *d = *d / s - 0.5 * (1.0 - 2.0 * v) / s;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Euler-Maruyama on the flattened SDE (constant diffusion).
    EdjEuler,
    /// Euler-Maruyama on the original SDE.
    DjEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub dt: f64,
    pub max_halvings: u32,
    pub scheme: Scheme,
}

impl StepControl {
    /// `dt = 0.01 / lambda`, flattened scheme.
    pub fn default_for(p: &ModelParams) -> Self {
        Self { dt: 0.01 / p.lambda(), max_halvings: 0, scheme: Scheme::EdjEuler }
    }
}

/// Distance kept from the chart boundary and between neighbours after a
/// projection.
const PROJECTION_GAP: f64 = 1e-10;

/// Nudge applied to boundary atoms of the initial condition.
const BOUNDARY_NUDGE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// Deepest halving level reached.
    pub halvings: u32,
    /// Number of sub-steps that had to be projected.
    pub projections: u32,
    /// Number of sub-steps taken with the drift-implicit rule.
    pub implicit: u32,
}

impl Scheme {
    fn upper(self) -> f64 {
        match self {
            Scheme::EdjEuler => PI,
            Scheme::DjEuler => 1.0,
        }
    }

    fn admissible(self, s: &[f64]) -> bool {
        let hi = self.upper();
        match self {
            // the flattened drift is singular on the boundary, so stay inside
            Scheme::EdjEuler => s.iter().all(|&v| v > 0.0 && v < hi),
            Scheme::DjEuler => s.iter().all(|&v| (0.0..=hi).contains(&v)),
        }
    }
}

/// Largest drift displacement per sub-step, as a fraction of the distance
/// to the nearest singularity.
const DRIFT_FRACTION: f64 = 1.0;

/// Smallest accepted ratio of a new gap to the old one.
const GAP_SHRINK: f64 = 0.25;

fn strictly_increasing(s: &[f64]) -> bool {
    s.windows(2).all(|w| w[0] < w[1])
}

/// Sort, clamp into `[gap, hi - gap]` and pull apart ties.
pub fn project(s: &mut [f64], hi: f64) {
    s.sort_by(f64::total_cmp);
    let lo = PROJECTION_GAP;
    let top = hi - PROJECTION_GAP;
    for v in s.iter_mut() {
        *v = if v.is_nan() { 0.5 * hi } else { v.clamp(lo, top) };
    }
    for i in 1..s.len() {
        if s[i] <= s[i - 1] {
            s[i] = s[i - 1] + PROJECTION_GAP;
        }
    }
    let n = s.len();
    for i in (0..n).rev() {
        let cap = top - (n - 1 - i) as f64 * PROJECTION_GAP;
        if s[i] > cap {
            s[i] = cap;
        }
    }
}

/// Largest `t <= 1` (with a safety factor) keeping `z - t d` ordered and
/// inside `(0, pi)`.
fn max_feasible_step(z: &[f64], d: &[f64]) -> f64 {
    let n = z.len();
    let mut t: f64 = 1.0;
    let mut limit = |gap: f64, closing: f64| {
        if closing > 0.0 {
            t = t.min(0.9 * gap / closing);
        }
    };
    limit(z[0], d[0]);
    limit(PI - z[n - 1], -d[n - 1]);
    for k in 1..n {
        limit(z[k] - z[k - 1], d[k] - d[k - 1]);
    }
    t
}

struct Stepper<'a> {
    p: &'a ModelParams,
    control: StepControl,
    drift: Vec<f64>,
    proposal: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(p: &'a ModelParams, control: StepControl) -> Self {
        Self { p, control, drift: vec![0.0; p.n()], proposal: vec![0.0; p.n()] }
    }

    /// Fill `self.proposal` with the Euler-Maruyama proposal from `s`.
    /// Returns false when the drift is singular at `s`.
    fn propose(&mut self, s: &[f64], dt: f64, noise: &[f64]) -> bool {
        let ok = match self.control.scheme {
            Scheme::EdjEuler => grad_potential_into(self.p, s, &mut self.drift).map(|_| {
                self.drift.iter_mut().for_each(|g| *g = -*g);
            }),
            Scheme::DjEuler => dj_drift_into(self.p, s, &mut self.drift),
        };
        if ok.is_err() || self.drift.iter().any(|d| !d.is_finite()) {
            return false;
        }
        let sq = dt.sqrt();
        for i in 0..s.len() {
            let sigma = match self.control.scheme {
                Scheme::EdjEuler => std::f64::consts::SQRT_2,
                Scheme::DjEuler => (2.0 * (s[i] * (1.0 - s[i])).max(0.0)).sqrt(),
            };
            self.proposal[i] = s[i] + dt * self.drift[i] + sigma * sq * noise[i];
        }
        true
    }

    /// Drift-implicit step `y' = y - dt grad V(y') + sqrt(2 dt) xi`, i.e. the
    /// minimizer of `dt V(z) + |z - w|^2 / 2` with `w` the noisy point. `V`
    /// is strongly convex and infinite off the ordered interior, so the
    /// result is always admissible. Damped Newton; false if it stalls.
    fn implicit(&mut self, s: &mut [f64], dt: f64, noise: &[f64]) -> bool {
        let n = s.len();
        let sq = (2.0 * dt).sqrt();
        let w: Vec<f64> = s.iter().zip(noise).map(|(y, z)| y + sq * z).collect();
        let objective = |z: &[f64], g: &mut [f64]| {
            let v = potential_and_grad(self.p, z, g);
            let mut f = dt * v;
            for i in 0..n {
                g[i] = dt * g[i] + z[i] - w[i];
                f += 0.5 * (z[i] - w[i]).powi(2);
            }
            f
        };
        let mut z = if strictly_increasing(&self.proposal)
            && Scheme::EdjEuler.admissible(&self.proposal)
            && self.proposal.iter().all(|v| v.is_finite())
        {
            self.proposal.clone()
        } else {
            s.to_vec()
        };
        let mut g = vec![0.0; n];
        let mut gt = vec![0.0; n];
        let mut f = objective(&z, &mut g);
        let mut h = DMatrix::zeros(n, n);
        for _ in 0..100 {
            if hessian_potential_into(self.p, &z, &mut h).is_err() {
                return false;
            }
            h *= dt;
            for i in 0..n {
                h[(i, i)] += 1.0;
            }
            let Some(chol) = h.clone().cholesky() else { return false };
            let d = chol.solve(&DVector::from_column_slice(&g));
            let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if d.amax() <= 1e-9 * scale {
                // quadratic convergence: the full step lands at rounding level
                for i in 0..n {
                    s[i] = z[i] - d[i];
                }
                return strictly_increasing(s) && Scheme::EdjEuler.admissible(s);
            }
            let slope: f64 = -d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let mut t = max_feasible_step(&z, d.as_slice());
            let mut trial = vec![0.0; n];
            loop {
                for i in 0..n {
                    trial[i] = z[i] - t * d[i];
                }
                let ft = objective(&trial, &mut gt);
                // slack for rounding in f once the step is tiny
                if ft.is_finite() && ft <= f + 1e-4 * t * slope + 8.0 * f64::EPSILON * f.abs() {
                    z.copy_from_slice(&trial);
                    g.copy_from_slice(&gt);
                    f = ft;
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return false;
                }
            }
        }
        false
    }

    /// Advance `s` by `dt` with standard normal `noise`. A rejected proposal
    /// is replaced by two half steps whose noises `(xi +- z)/sqrt(2)` add up
    /// to the same Brownian increment.
    /// Gap `k` of `s`: `k = 0` is the lower boundary, `k = n` the upper one.
    /// Boundaries only count where the drift is singular there.
    fn gap(&self, s: &[f64], k: usize) -> f64 {
        let n = s.len();
        let singular_edges = self.control.scheme == Scheme::EdjEuler;
        match k {
            0 if singular_edges => s[0],
            0 => f64::INFINITY,
            k if k == n && singular_edges => self.control.scheme.upper() - s[n - 1],
            k if k == n => f64::INFINITY,
            k => s[k] - s[k - 1],
        }
    }

    /// The proposal is resolved: drift moves are small against the local
    /// gaps and no gap collapses in one sub-step.
    fn resolved(&self, s: &[f64], dt: f64) -> bool {
        let n = s.len();
        for i in 0..n {
            let room = self.gap(s, i).min(self.gap(s, i + 1));
            if dt * self.drift[i].abs() > DRIFT_FRACTION * room {
                return false;
            }
        }
        (0..=n).all(|k| self.gap(&self.proposal, k) >= GAP_SHRINK * self.gap(s, k))
    }

    /// Advance `s` by `dt` with standard normal `noise`. A rejected proposal
    /// is replaced by two half steps whose noises `(xi +- z)/sqrt(2)` add up
    /// to the same Brownian increment.
    fn advance(
        &mut self,
        s: &mut [f64],
        dt: f64,
        noise: &[f64],
        depth: u32,
        rng: &mut ChaCha8Rng,
        out: &mut StepOutcome,
    ) {
        out.halvings = out.halvings.max(depth);
        let finite = self.propose(s, dt, noise);
        let scheme = self.control.scheme;
        let valid = finite && scheme.admissible(&self.proposal) && strictly_increasing(&self.proposal);
        if valid && self.resolved(s, dt) {
            s.copy_from_slice(&self.proposal);
            return;
        }
        if depth >= self.control.max_halvings {
            if scheme == Scheme::EdjEuler && self.implicit(s, dt, noise) {
                out.implicit += 1;
                return;
            }
            if valid {
                s.copy_from_slice(&self.proposal);
                return;
            }
            if finite {
                s.copy_from_slice(&self.proposal);
            }
            project(s, scheme.upper());
            out.projections += 1;
            log::debug!("projection after {depth} halvings");
            return;
        }
        let z: Vec<f64> = (0..s.len()).map(|_| rng.sample(StandardNormal)).collect();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let first: Vec<f64> = noise.iter().zip(&z).map(|(x, z)| (x + z) * r).collect();
        let second: Vec<f64> = noise.iter().zip(&z).map(|(x, z)| (x - z) * r).collect();
        self.advance(s, 0.5 * dt, &first, depth + 1, rng, out);
        self.advance(s, 0.5 * dt, &second, depth + 1, rng, out);
    }
}

/// One Euler-Maruyama step of length `dt` in the chart selected by
/// `control.scheme`. `state` is in that chart. `rng` supplies the sub-noise
/// for halved retries.
pub fn step(
    p: &ModelParams,
    state: &mut [f64],
    dt: f64,
    noise: &[f64],
    control: &StepControl,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome> {
    if state.len() != p.n() || noise.len() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: state.len().min(noise.len()) });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut out = StepOutcome::default();
    Stepper::new(p, *control).advance(state, dt, noise, 0, rng, &mut out);
    Ok(out)
}

/// Snapshots of `m` trajectories on a common time grid, stored
/// trajectory-major as `[traj][time][particle]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub params: ModelParams,
    pub x0: Configuration,
    pub t_grid: Vec<f64>,
    pub m: usize,
    pub seed: u64,
    pub control: StepControl,
    data: Vec<f64>,
    pub steps: u64,
    pub projection_events: u64,
}

impl TrajectoryEnsemble {
    pub fn n(&self) -> usize {
        self.params.n()
    }

    /// Positions of trajectory `k` at grid index `ti`.
    pub fn configuration(&self, k: usize, ti: usize) -> &[f64] {
        let n = self.n();
        let off = (k * self.t_grid.len() + ti) * n;
        &self.data[off..off + n]
    }

    /// All `m` configurations at grid index `ti`.
    pub fn snapshot(&self, ti: usize) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.m).map(move |k| self.configuration(k, ti))
    }

    /// `f` evaluated on every trajectory at grid index `ti`.
    pub fn statistic(&self, ti: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.snapshot(ti).map(f).collect()
    }

    /// Projection events per integration step.
    pub fn projection_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.projection_events as f64 / self.steps as f64
        }
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first().is_some_and(|&t| !(t >= 0.0)) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("time grid must start at t >= 0 and be finite".into()));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Map the initial condition into the integration chart, moving boundary
/// atoms and ties slightly inward.
fn initial_state(x0: &Configuration, scheme: Scheme) -> Vec<f64> {
    let mut x: Vec<f64> = x0.as_slice().iter().map(|&v| v.clamp(BOUNDARY_NUDGE, 1.0 - BOUNDARY_NUDGE)).collect();
    for i in 1..x.len() {
        if x[i] <= x[i - 1] {
            x[i] = x[i - 1] + BOUNDARY_NUDGE;
        }
    }
    match scheme {
        Scheme::EdjEuler => {
            let mut y: Vec<f64> = x.iter().map(|&v| flatten_coord(v)).collect();
            if !strictly_increasing(&y) || !scheme.admissible(&y) {
                project(&mut y, PI);
            }
            y
        }
        Scheme::DjEuler => x,
    }
}

fn run_trajectory(
    p: &ModelParams,
    start: &[f64],
    t_grid: &[f64],
    seed: u64,
    k: usize,
    control: &StepControl,
    out: &mut [f64],
) -> (u64, u64) {
    let n = p.n();
    let mut rng = stream(seed, Domain::Trajectory, k as u64);
    let mut stepper = Stepper::new(p, *control);
    let mut s = start.to_vec();
    let mut noise = vec![0.0; n];
    let mut t = 0.0;
    let mut block = 0u64;
    let mut projections = 0u64;
    for (ti, &target) in t_grid.iter().enumerate() {
        let span = target - t;
        if span > 0.0 {
            let count = (span / control.dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
            let h = span / count as f64;
            for _ in 0..count {
                seek_block(&mut rng, block);
                block += 1;
                noise.iter_mut().for_each(|z| *z = rng.sample(StandardNormal));
                let mut o = StepOutcome::default();
                stepper.advance(&mut s, h, &noise, 0, &mut rng, &mut o);
                projections += o.projections as u64;
            }
        }
        t = target;
        let dst = &mut out[ti * n..(ti + 1) * n];
        match control.scheme {
            Scheme::EdjEuler => dst.iter_mut().zip(&s).for_each(|(d, &y)| *d = unflatten_coord(y)),
            Scheme::DjEuler => dst.copy_from_slice(&s),
        }
    }
    (block, projections)
}

/// Simulate `m` independent trajectories from `x0` and record them at each
/// time of `t_grid`. Trajectory `k` draws only from stream `(seed, k)`, so
/// the output does not depend on the thread count.
pub fn simulate_ensemble(
    p: &ModelParams,
    x0: &Configuration,
    t_grid: &[f64],
    m: usize,
    seed: u64,
    control: &StepControl,
) -> Result<TrajectoryEnsemble> {
    if x0.len() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: x0.len() });
    }
    check_grid(t_grid)?;
    if !(control.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", control.dt)));
    }
    let n = p.n();
    let per_traj = t_grid.len() * n;
    let start = initial_state(x0, control.scheme);
    let mut data = vec![0.0; m * per_traj];
    let counts: Vec<(u64, u64)> = if per_traj == 0 {
        Vec::new()
    } else {
        data.par_chunks_mut(per_traj)
            .enumerate()
            .map(|(k, out)| run_trajectory(p, &start, t_grid, seed, k, control, out))
            .collect()
    };
    let steps = counts.iter().map(|c| c.0).sum();
    let projection_events = counts.iter().map(|c| c.1).sum();
    let ens = TrajectoryEnsemble {
        params: *p,
        x0: x0.clone(),
        t_grid: t_grid.to_vec(),
        m,
        seed,
        control: *control,
        data,
        steps,
        projection_events,
    };
    if ens.projection_rate() > 1e-4 {
        log::warn!("projection rate {:.2e} per step exceeds 1e-4", ens.projection_rate());
    }
    Ok(ens)
}
