//! Intrinsic distance on the simplex chamber, geodesics, and Wasserstein /
//! total-variation estimators between empirical measures.
//!
//! The distance is the Euclidean distance of the flattened images, so the
//! flattening map is an isometry. Everything here uses that normalization.

pub mod assignment;
pub mod sinkhorn;
pub mod transport;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flatten_coord, unflatten_coord, Configuration, TrajectoryEnsemble};
use crate::equilibrium::GibbsSample;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{stream, Domain};
use crate::stats;

pub use assignment::solve_assignment;
pub use sinkhorn::{sinkhorn, SinkhornControl, SinkhornOutput};
pub use transport::{quantile_coupling_1d, solve_transport};

/// Recorded in every report that carries distances or bounds.
pub const NORMALIZATION: &str = "flattened: d(x,y) = |A(x) - A(y)|_2 with A(x) = 2 asin(sqrt(x))";

/// Largest `M_P * M_Q` the exact solvers accept.
pub const EXACT_PAIR_LIMIT: usize = 1_000_000;

pub fn intrinsic_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| (flatten_coord(a) - flatten_coord(b)).powi(2)).sum::<f64>().sqrt()
}

/// Point at fraction `t` along the geodesic from `x` to `y`: the pullback of
/// the straight segment between the flattened images.
pub fn geodesic(x: &Configuration, y: &Configuration, t: f64) -> Result<Configuration> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("geodesic parameter {t} outside [0,1]")));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    if t == 1.0 {
        return Ok(y.clone());
    }
    let pts = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &b)| unflatten_coord(t * flatten_coord(b) + (1.0 - t) * flatten_coord(a)))
        .collect();
    Configuration::new(pts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub params: ModelParams,
    pub time: Option<f64>,
    pub seed: u64,
}

/// Weighted atoms, row-major `M x n`, in original coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub n: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    pub meta: Option<MeasureMeta>,
}

impl EmpiricalMeasure {
    /// Uniform weights over the rows of `points`.
    pub fn uniform(n: usize, points: Vec<f64>) -> Result<Self> {
        let m = if n == 0 { 0 } else { points.len() / n };
        Self::weighted(n, points, vec![1.0 / m as f64; m])
    }

    /// Explicit weights, renormalized to sum to one.
    pub fn weighted(n: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || points.len() != n * weights.len() {
            return Err(Error::Dimension { expected: n * weights.len(), got: points.len() });
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empirical measure needs at least one atom".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { n, points, weights, meta: None })
    }

    pub fn dirac(x: &Configuration) -> Self {
        Self { n: x.len(), points: x.as_slice().to_vec(), weights: vec![1.0], meta: None }
    }

    pub fn from_ensemble(e: &TrajectoryEnsemble, ti: usize) -> Result<Self> {
        let points: Vec<f64> = e.snapshot(ti).flatten().copied().collect();
        let mut m = Self::uniform(e.n(), points)?;
        m.meta = Some(MeasureMeta { params: e.params, time: Some(e.t_grid[ti]), seed: e.seed });
        Ok(m)
    }

    pub fn from_gibbs(s: &GibbsSample) -> Result<Self> {
        Self::uniform(s.n, s.iter().flatten().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.n..(k + 1) * self.n]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| (w - w0).abs() <= 1e-12 * w0)
    }

    /// Rows `idx` with uniform weights.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let pts = idx.iter().flat_map(|&k| self.point(k).iter().copied()).collect();
        let mut m = Self::uniform(self.n, pts)?;
        m.meta = self.meta;
        Ok(m)
    }

    /// `k` atoms drawn without replacement (all atoms if `k >= len`).
    pub fn subsample(&self, k: usize, seed: u64) -> Result<Self> {
        let m = self.len();
        let mut idx: Vec<usize> = (0..m).collect();
        if k < m {
            let mut rng = stream(seed, Domain::Subsample, 0);
            for i in 0..k {
                let j = rng.random_range(i..m);
                idx.swap(i, j);
            }
            idx.truncate(k);
        }
        self.select(&idx)
    }

    fn flattened(&self) -> Vec<f64> {
        self.points.iter().map(|&v| flatten_coord(v)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OtMethod {
    Exact,
    Entropic { epsilon: f64 },
    SortedStat,
    Sliced { projections: usize },
}

/// Sparse plan `(i, j, mass)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn row_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for &(i, _, m) in &self.entries {
            out[i] += m;
        }
        out
    }
    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for &(_, j, m) in &self.entries {
            out[j] += m;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    /// Transport cost `sum pi_ij d_ij^r` (debiased for the entropic method).
    pub cost: f64,
    /// `max(cost, 0)^(1/r)`.
    pub distance: f64,
    pub order: u32,
    pub plan: TransportPlan,
    pub method: OtMethod,
    /// `(epsilon, cost)` along the annealing schedule of the cross term.
    pub epsilon_trace: Vec<(f64, f64)>,
}

fn check_order(r: u32) -> Result<()> {
    if r == 1 || r == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("transport order must be 1 or 2, got {r}")))
    }
}

fn check_pair(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<()> {
    if p.n != q.n {
        return Err(Error::Dimension { expected: p.n, got: q.n });
    }
    Ok(())
}

/// Dense row-major ground cost `d^r` between the atoms.
pub fn cost_matrix(p: &EmpiricalMeasure, q: &EmpiricalMeasure, r: u32) -> Vec<f64> {
    let (fp, fq) = (p.flattened(), q.flattened());
    let n = p.n;
    let cols = q.len();
    let mut cost = vec![0.0; p.len() * cols];
    cost.par_chunks_mut(cols.max(1)).enumerate().for_each(|(i, row)| {
        let a = &fp[i * n..(i + 1) * n];
        for (j, c) in row.iter_mut().enumerate() {
            let b = &fq[j * n..(j + 1) * n];
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            *c = if r == 2 { d2 } else { d2.sqrt() };
        }
    });
    cost
}

fn finish(cost: f64, r: u32, plan: TransportPlan, method: OtMethod, trace: Vec<(f64, f64)>) -> CouplingResult {
    let distance = cost.max(0.0).powf(1.0 / r as f64);
    CouplingResult { cost, distance, order: r, plan, method, epsilon_trace: trace }
}

/// Exact optimal transport for ground cost `d^r`. Equal-size uniform
/// measures go through the assignment solver, everything else through
/// successive shortest paths.
pub fn wasserstein_exact(p: &EmpiricalMeasure, q: &EmpiricalMeasure, r: u32) -> Result<CouplingResult> {
    check_order(r)?;
    check_pair(p, q)?;
    let (rows, cols) = (p.len(), q.len());
    if rows.saturating_mul(cols) > EXACT_PAIR_LIMIT {
        return Err(Error::SizeGuard { rows, cols, limit: EXACT_PAIR_LIMIT });
    }
    let cost = cost_matrix(p, q, r);
    let entries = if rows == cols && p.is_uniform() && q.is_uniform() {
        let (perm, _) = solve_assignment(&cost, rows);
        let w = 1.0 / rows as f64;
        perm.iter().enumerate().map(|(i, &j)| (i, j, w)).collect()
    } else if rows == 1 || cols == 1 {
        // a single atom on one side leaves one feasible coupling
        (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, p.weights[i] * q.weights[j]))
            .collect()
    } else {
        solve_transport(&cost, &p.weights, &q.weights)?
    };
    let total = entries.iter().map(|&(i, j, m)| m * cost[i * cols + j]).sum();
    Ok(finish(total, r, TransportPlan { rows, cols, entries }, OtMethod::Exact, Vec::new()))
}

/// How the entropic regularization is specified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Epsilon {
    Absolute(f64),
    /// Multiple of the mean ground cost of the cross problem.
    RelativeToMeanCost(f64),
}

/// Debiased entropic estimate
/// `OT_eps(P,Q) - (OT_eps(P,P) + OT_eps(Q,Q))/2`, each term the transport
/// cost of the Sinkhorn plan. The returned plan is the cross plan.
pub fn wasserstein_entropic(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    eps: Epsilon,
    r: u32,
    control: &SinkhornControl,
) -> Result<CouplingResult> {
    check_order(r)?;
    check_pair(p, q)?;
    let cpq = cost_matrix(p, q, r);
    let eps_abs = match eps {
        Epsilon::Absolute(e) => e,
        Epsilon::RelativeToMeanCost(k) => {
            let mean = cpq.iter().sum::<f64>() / cpq.len() as f64;
            k * mean.max(f64::MIN_POSITIVE)
        }
    };
    if !(eps_abs > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps_abs}")));
    }
    let cross = sinkhorn(&cpq, &p.weights, &q.weights, eps_abs, control)?;
    let self_cost = |m: &EmpiricalMeasure| -> Result<f64> {
        let c = cost_matrix(m, m, r);
        Ok(sinkhorn(&c, &m.weights, &m.weights, eps_abs, control)?.cost)
    };
    let debiased = cross.cost - 0.5 * (self_cost(p)? + self_cost(q)?);
    let cols = q.len();
    let entries =
        cross.plan.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(k, &m)| (k / cols, k % cols, m)).collect();
    let plan = TransportPlan { rows: p.len(), cols, entries };
    Ok(finish(debiased, r, plan, OtMethod::Entropic { epsilon: eps_abs }, cross.trace))
}

/// One-dimensional transport between the pushforwards under `stat`.
pub fn wasserstein_statistic(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    stat: impl Fn(&[f64]) -> f64,
    r: u32,
) -> Result<CouplingResult> {
    check_order(r)?;
    let xs: Vec<f64> = (0..p.len()).map(|k| stat(p.point(k))).collect();
    let ys: Vec<f64> = (0..q.len()).map(|k| stat(q.point(k))).collect();
    let entries = quantile_coupling_1d(&xs, &p.weights, &ys, &q.weights);
    let cost = entries.iter().map(|&(i, j, m)| m * (xs[i] - ys[j]).abs().powi(r as i32)).sum();
    let plan = TransportPlan { rows: p.len(), cols: q.len(), entries };
    Ok(finish(cost, r, plan, OtMethod::SortedStat, Vec::new()))
}

/// Sliced estimate in the flattened chart: mean 1D transport cost over
/// random unit directions.
pub fn wasserstein_sliced(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    projections: usize,
    seed: u64,
    r: u32,
) -> Result<CouplingResult> {
    check_order(r)?;
    check_pair(p, q)?;
    let (fp, fq) = (p.flattened(), q.flattened());
    let n = p.n;
    let mut rng = stream(seed, Domain::Subsample, 1);
    let dirs: Vec<Vec<f64>> = (0..projections.max(1))
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let costs: Vec<f64> = dirs
        .par_iter()
        .map(|d| {
            let proj = |f: &[f64], k: usize| f[k * n..(k + 1) * n].iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
            let xs: Vec<f64> = (0..p.len()).map(|k| proj(&fp, k)).collect();
            let ys: Vec<f64> = (0..q.len()).map(|k| proj(&fq, k)).collect();
            quantile_coupling_1d(&xs, &p.weights, &ys, &q.weights)
                .iter()
                .map(|&(i, j, m)| m * (xs[i] - ys[j]).abs().powi(r as i32))
                .sum::<f64>()
        })
        .collect();
    let cost = stats::mean(&costs);
    Ok(finish(
        cost,
        r,
        TransportPlan { rows: p.len(), cols: q.len(), entries: Vec::new() },
        OtMethod::Sliced { projections },
        Vec::new(),
    ))
}

/// Histogram estimate of the total variation between the pushforwards of
/// `p` and `q` under `stat`, on shared Freedman-Diaconis bins of the pooled
/// values. Returns 0 when the pooled values have no spread.
pub fn tv_lower_proxy(p: &EmpiricalMeasure, q: &EmpiricalMeasure, stat: impl Fn(&[f64]) -> f64) -> f64 {
    let xs: Vec<f64> = (0..p.len()).map(|k| stat(p.point(k))).collect();
    let ys: Vec<f64> = (0..q.len()).map(|k| stat(q.point(k))).collect();
    tv_histogram(&xs, &p.weights, &ys, &q.weights)
}

/// Bin edges chosen from the pooled values; at most this many bins.
const MAX_BINS: usize = 4096;

pub fn tv_histogram(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> f64 {
    let pooled = stats::sorted(&[xs, ys].concat());
    if pooled.is_empty() {
        return 0.0;
    }
    let lo = pooled[0];
    let hi = pooled[pooled.len() - 1];
    let range = hi - lo;
    if !(range > 0.0) {
        return 0.0;
    }
    let iqr = stats::quantile_sorted(&pooled, 0.75) - stats::quantile_sorted(&pooled, 0.25);
    let nf = pooled.len() as f64;
    let width = if iqr > 0.0 { 2.0 * iqr / nf.cbrt() } else { range / nf.sqrt() };
    let bins = ((range / width).ceil() as usize).clamp(1, MAX_BINS);
    let bin = |v: f64| (((v - lo) / range * bins as f64) as usize).min(bins - 1);
    let mut h = vec![0.0; bins];
    for (&v, &w) in xs.iter().zip(wx) {
        h[bin(v)] += w;
    }
    for (&v, &w) in ys.iter().zip(wy) {
        h[bin(v)] -= w;
    }
    (0.5 * h.iter().map(|d| d.abs()).sum::<f64>()).min(1.0)
}

/// `tv_lower_proxy` with a bootstrap standard error over `reps` resamples.
pub fn tv_lower_proxy_bootstrap(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    stat: impl Fn(&[f64]) -> f64 + Sync,
    reps: usize,
    seed: u64,
) -> (f64, f64) {
    let xs: Vec<f64> = (0..p.len()).map(|k| stat(p.point(k))).collect();
    let ys: Vec<f64> = (0..q.len()).map(|k| stat(q.point(k))).collect();
    let value = tv_histogram(&xs, &p.weights, &ys, &q.weights);
    let draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, Domain::Bootstrap, b as u64);
            let rs = |v: &[f64], w: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                // weighted resample by inversion on the cumulative weights
                let cum: Vec<f64> = w
                    .iter()
                    .scan(0.0, |s, &x| {
                        *s += x;
                        Some(*s)
                    })
                    .collect();
                (0..v.len())
                    .map(|_| {
                        let u: f64 = rng.random();
                        v[cum.partition_point(|&c| c < u).min(v.len() - 1)]
                    })
                    .collect()
            };
            let bx = rs(&xs, &p.weights, &mut rng);
            let by = rs(&ys, &q.weights, &mut rng);
            let ux = vec![1.0 / bx.len() as f64; bx.len()];
            let uy = vec![1.0 / by.len() as f64; by.len()];
            tv_histogram(&bx, &ux, &by, &uy)
        })
        .collect();
    (value, stats::variance(&draws).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(v: &[f64]) -> Configuration {
        Configuration::new(v.to_vec()).unwrap()
    }

    fn random_measure(rng: &mut impl Rng, n: usize, m: usize) -> EmpiricalMeasure {
        let mut pts = Vec::with_capacity(n * m);
        for _ in 0..m {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            x.sort_by(f64::total_cmp);
            pts.extend(x);
        }
        EmpiricalMeasure::uniform(n, pts).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(intrinsic_distance(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((intrinsic_distance(&[0.0], &[1.0]) - PI).abs() < 1e-15);
        assert!((intrinsic_distance(&[0.0], &[0.5]) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn geodesic_examples() {
        let g = geodesic(&cfg(&[0.0]), &cfg(&[1.0]), 0.5).unwrap();
        assert!((g.as_slice()[0] - 0.5).abs() < 1e-15);
        let x = cfg(&[0.1, 0.4]);
        let y = cfg(&[0.3, 0.9]);
        assert_eq!(geodesic(&x, &y, 0.0).unwrap(), x);
        assert_eq!(geodesic(&x, &y, 1.0).unwrap(), y);
        assert!(geodesic(&x, &y, 1.5).is_err());
    }

    #[test]
    fn exact_trivial_cases() {
        let mut rng = stream(30, Domain::Test, 0);
        let p = random_measure(&mut rng, 3, 10);
        let same = wasserstein_exact(&p, &p, 2).unwrap();
        assert!(same.distance.abs() < 1e-12);

        let x = cfg(&[0.1, 0.5]);
        let y = cfg(&[0.2, 0.9]);
        let w = wasserstein_exact(&EmpiricalMeasure::dirac(&x), &EmpiricalMeasure::dirac(&y), 2).unwrap();
        assert!((w.distance - intrinsic_distance(x.as_slice(), y.as_slice())).abs() < 1e-14);
        let w1 = wasserstein_exact(&EmpiricalMeasure::dirac(&x), &EmpiricalMeasure::dirac(&y), 1).unwrap();
        assert!((w1.distance - w.distance).abs() < 1e-14);
        assert!(wasserstein_exact(&p, &p, 3).is_err());
    }

    #[test]
    fn exact_beats_independent_and_identity_couplings() {
        let mut rng = stream(31, Domain::Test, 0);
        for _ in 0..20 {
            let p = random_measure(&mut rng, 2, 16);
            let q = random_measure(&mut rng, 2, 16);
            let w = wasserstein_exact(&p, &q, 2).unwrap();
            let c = cost_matrix(&p, &q, 2);
            let indep = c.iter().sum::<f64>() / c.len() as f64;
            let ident = (0..16).map(|i| c[i * 16 + i]).sum::<f64>() / 16.0;
            assert!(w.cost <= indep + 1e-12 && w.cost <= ident + 1e-12);
            let rm = w.plan.row_marginal();
            assert!(rm.iter().all(|&m| (m - 1.0 / 16.0).abs() < 1e-12));
        }
    }

    #[test]
    fn general_weights_path_matches_assignment() {
        let mut rng = stream(32, Domain::Test, 0);
        let p = random_measure(&mut rng, 2, 12);
        let q = random_measure(&mut rng, 2, 12);
        let a = wasserstein_exact(&p, &q, 2).unwrap();
        let c = cost_matrix(&p, &q, 2);
        let w = vec![1.0 / 12.0; 12];
        let plan = solve_transport(&c, &w, &w).unwrap();
        let cost: f64 = plan.iter().map(|&(i, j, m)| m * c[i * 12 + j]).sum();
        assert!((a.cost - cost).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let big = EmpiricalMeasure::uniform(1, vec![0.5; 1001]).unwrap();
        let other = EmpiricalMeasure::uniform(1, vec![0.5; 1000]).unwrap();
        assert!(matches!(wasserstein_exact(&big, &other, 2), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn entropic_matches_exact() {
        let mut rng = stream(33, Domain::Test, 0);
        let p = random_measure(&mut rng, 3, 64);
        let q = random_measure(&mut rng, 3, 64);
        let exact = wasserstein_exact(&p, &q, 2).unwrap();
        let ent =
            wasserstein_entropic(&p, &q, Epsilon::RelativeToMeanCost(1e-3), 2, &SinkhornControl::default()).unwrap();
        assert!(
            (ent.distance - exact.distance).abs() <= 0.02 * exact.distance,
            "{} vs {}",
            ent.distance,
            exact.distance
        );
        let rm = ent.plan.row_marginal();
        let cm = ent.plan.col_marginal();
        let err: f64 = rm.iter().chain(&cm).map(|m| (m - 1.0 / 64.0).abs()).sum();
        assert!(err < 2e-9);

        let zero =
            wasserstein_entropic(&p, &p, Epsilon::RelativeToMeanCost(1e-2), 2, &SinkhornControl::default()).unwrap();
        assert!(zero.cost.abs() < 1e-9);
    }

    #[test]
    fn sorted_stat_is_one_dimensional_exact() {
        let mut rng = stream(34, Domain::Test, 0);
        let p = random_measure(&mut rng, 1, 30);
        let q = random_measure(&mut rng, 1, 30);
        let s = wasserstein_statistic(&p, &q, |x| flatten_coord(x[0]), 2).unwrap();
        let e = wasserstein_exact(&p, &q, 2).unwrap();
        assert!((s.cost - e.cost).abs() < 1e-12);
        let sl = wasserstein_sliced(&p, &q, 8, 1, 2).unwrap();
        assert!((sl.cost - e.cost).abs() < 1e-12);
    }

    #[test]
    fn tv_proxy_edges() {
        let mut rng = stream(35, Domain::Test, 0);
        let p = random_measure(&mut rng, 2, 500);
        let sum = |x: &[f64]| x.iter().sum::<f64>();
        assert!(tv_lower_proxy(&p, &p, sum) < 1e-12);

        let lo = EmpiricalMeasure::uniform(1, (0..200).map(|k| 0.1 + 0.1 * k as f64 / 200.0).collect()).unwrap();
        let hi = EmpiricalMeasure::uniform(1, (0..200).map(|k| 0.8 + 0.1 * k as f64 / 200.0).collect()).unwrap();
        assert!((tv_lower_proxy(&lo, &hi, sum) - 1.0).abs() < 1e-12);

        let flat = EmpiricalMeasure::uniform(1, vec![0.4; 20]).unwrap();
        assert!(tv_lower_proxy(&flat, &flat, sum) < 1e-12);

        let (v, se) = tv_lower_proxy_bootstrap(&lo, &hi, sum, 50, 3);
        assert!((v - 1.0).abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn tv_proxy_invariant_under_monotone_maps() {
        let mut rng = stream(36, Domain::Test, 0);
        let p = random_measure(&mut rng, 3, 10_000);
        let mut pts = Vec::new();
        for _ in 0..10_000 {
            let mut x: Vec<f64> = (0..3).map(|_| rng.random::<f64>().powf(0.8)).collect();
            x.sort_by(f64::total_cmp);
            pts.extend(x);
        }
        let q = EmpiricalMeasure::uniform(3, pts).unwrap();
        let sum = |x: &[f64]| x.iter().sum::<f64>();
        let base = tv_lower_proxy(&p, &q, sum);
        assert!(base > 0.05 && base <= 1.0);
        for g in [|s: f64| s.exp(), |s: f64| s * s * s + s, |s: f64| -(1.0 + s).ln()] {
            let v = tv_lower_proxy(&p, &q, |x| g(sum(x)));
            assert!((v - base).abs() <= 0.02, "{v} vs {base}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn config(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0.0..=1.0f64, n).prop_map(|mut v| {
                v.sort_by(f64::total_cmp);
                v
            })
        }

        proptest! {
            #[test]
            fn distance_is_a_metric((x, y, z) in (1usize..6).prop_flat_map(|n| (config(n), config(n), config(n)))) {
                let dxy = intrinsic_distance(&x, &y);
                prop_assert_eq!(dxy, intrinsic_distance(&y, &x));
                prop_assert!(dxy >= 0.0);
                prop_assert!(dxy <= intrinsic_distance(&x, &z) + intrinsic_distance(&z, &y) + 1e-12);
                prop_assert_eq!(intrinsic_distance(&x, &x), 0.0);
            }

            #[test]
            fn geodesic_has_constant_speed((x, y) in (1usize..6).prop_flat_map(|n| (config(n), config(n))), s in 0.0..=1.0f64, t in 0.0..=1.0f64) {
                let gx = Configuration::new(x.clone()).unwrap();
                let gy = Configuration::new(y.clone()).unwrap();
                let a = geodesic(&gx, &gy, s).unwrap();
                let b = geodesic(&gx, &gy, t).unwrap();
                let d = intrinsic_distance(&x, &y);
                let got = intrinsic_distance(a.as_slice(), b.as_slice());
                prop_assert!((got - (t - s).abs() * d).abs() <= 1e-12 * d.max(1e-3), "{} vs {}", got, (t - s).abs() * d);
            }
        }
    }
}
