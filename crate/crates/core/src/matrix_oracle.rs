//! Matrix model for `beta = 1`: the squared singular values of an
//! `n x p` corner of an `m x m` orthogonal Brownian motion form a
//! Dyson-Jacobi system with `b = p/2`, `a = (m-p)/2` and `lambda = m/2`.
//!
//! Only the leading `n` rows of the frame are tracked, since the corner
//! depends on nothing else. Increments are right multiplications by a
//! product of plane rotations, one per coordinate pair, each in Cayley
//! form so the frame stays orthogonal to rounding.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{decay_fit_samples, DecayFit, Eigenfunction};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{stream, Domain};

/// Largest tolerated `max |U U^T - I|` at a reported time.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Frame size `m` and corner width `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleDims {
    pub m: usize,
    pub p: usize,
}

impl OracleDims {
    /// `m = 2(a+b)`, `p = 2b`. Needs `beta = 1`, half-integer `a, b` and
    /// `a, b >= n+1`.
    pub fn for_params(par: &ModelParams) -> Result<Self> {
        if par.beta() != 1.0 {
            return Err(Error::InvalidArgument(format!("matrix oracle needs beta = 1, got {}", par.beta())));
        }
        let (a2, b2) = (2.0 * par.a(), 2.0 * par.b());
        if a2.fract() != 0.0 || b2.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!("2a and 2b must be integers, got a={} b={}", par.a(), par.b())));
        }
        let need = (par.n() + 1) as f64;
        if par.a() < need || par.b() < need {
            return Err(Error::InvalidArgument(format!("matrix oracle needs a, b >= n+1 = {need}")));
        }
        Ok(Self { m: (a2 + b2) as usize, p: b2 as usize })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleControl {
    pub dt: f64,
    /// Steps between row re-orthonormalizations.
    pub reorth_every: usize,
    /// Variance per unit time of each rotation angle. `1/2` matches the
    /// generator normalization `x(1-x) d^2`.
    pub variance: f64,
}

impl OracleControl {
    pub fn default_for(par: &ModelParams) -> Self {
        Self { dt: 0.02 / par.lambda(), reorth_every: 50, variance: 0.5 }
    }
}

/// Leading `n` rows (row-major, `n x m`) of the frame for every path at
/// every grid time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalPath {
    pub m: usize,
    pub rows: usize,
    pub t_grid: Vec<f64>,
    pub paths: usize,
    frames: Vec<f64>,
    pub max_defect: f64,
}

impl OrthogonalPath {
    pub fn frame(&self, k: usize, ti: usize) -> &[f64] {
        let sz = self.rows * self.m;
        let off = (k * self.t_grid.len() + ti) * sz;
        &self.frames[off..off + sz]
    }
}

/// Rows `e_0, .., e_{n-1}`.
pub fn identity_rows(n: usize, m: usize) -> Vec<f64> {
    let mut u = vec![0.0; n * m];
    for i in 0..n {
        u[i * m + i] = 1.0;
    }
    u
}

/// Orthonormal rows whose `p`-column corner has Gram matrix `diag(x0)`:
/// row `i` is `sqrt(x_i) e_i + sqrt(1-x_i) e_{p+i}`.
pub fn rows_for(x0: &[f64], dims: OracleDims) -> Result<Vec<f64>> {
    let n = x0.len();
    if n > dims.p || n > dims.m - dims.p {
        return Err(Error::InvalidArgument(format!(
            "{n} rows do not fit a {}-column corner of size {}",
            dims.p, dims.m
        )));
    }
    let mut u = vec![0.0; n * dims.m];
    for (i, &x) in x0.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange { index: i, value: x, lo: 0.0, hi: 1.0 });
        }
        u[i * dims.m + i] = x.sqrt();
        u[i * dims.m + dims.p + i] = (1.0 - x).sqrt();
    }
    Ok(u)
}

fn orthonormalize(u: &mut [f64], n: usize, m: usize) {
    // modified Gram-Schmidt, two passes
    for _ in 0..2 {
        for i in 0..n {
            for k in 0..i {
                let dot: f64 = (0..m).map(|j| u[i * m + j] * u[k * m + j]).sum();
                for j in 0..m {
                    u[i * m + j] -= dot * u[k * m + j];
                }
            }
            let norm = (0..m).map(|j| u[i * m + j].powi(2)).sum::<f64>().sqrt();
            for j in 0..m {
                u[i * m + j] /= norm;
            }
        }
    }
}

fn defect(u: &[f64], n: usize, m: usize) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..n {
        for k in 0..=i {
            let dot: f64 = (0..m).map(|j| u[i * m + j] * u[k * m + j]).sum();
            d = d.max((dot - if i == k { 1.0 } else { 0.0 }).abs());
        }
    }
    d
}

/// One increment of length `h`: a rotation in every coordinate plane with
/// angle `2 atan(theta/2)`, `theta ~ N(0, variance h)`.
fn increment(u: &mut [f64], n: usize, m: usize, sd: f64, rng: &mut impl Rng) {
    for i in 0..m {
        for j in i + 1..m {
            let th: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            let t = 0.5 * th;
            let d = 1.0 / (1.0 + t * t);
            let (c, s) = ((1.0 - t * t) * d, 2.0 * t * d);
            for r in 0..n {
                let (a, b) = (u[r * m + i], u[r * m + j]);
                u[r * m + i] = c * a - s * b;
                u[r * m + j] = s * a + c * b;
            }
        }
    }
}

/// Simulate `paths` independent frames from the initial rows `u0`
/// (`n x m`), recording them on `t_grid`.
pub fn simulate_orthogonal_bm(
    m: usize,
    u0: &[f64],
    t_grid: &[f64],
    paths: usize,
    seed: u64,
    control: &OracleControl,
) -> Result<OrthogonalPath> {
    if m < 2 || u0.is_empty() || !u0.len().is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!("need m >= 2 and whole rows, got m={m}, {} entries", u0.len())));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("time grid must be non-negative and non-decreasing".into()));
    }
    let n = u0.len() / m;
    let sz = n * m;
    let nt = t_grid.len();
    let mut frames = vec![0.0; paths * nt * sz];
    let defects: Vec<f64> = frames
        .par_chunks_mut(nt * sz)
        .enumerate()
        .map(|(k, out)| {
            let mut rng = stream(seed, Domain::Matrix, k as u64);
            let mut u = u0.to_vec();
            let mut t = 0.0;
            let mut since = 0;
            let mut worst: f64 = 0.0;
            for (ti, &target) in t_grid.iter().enumerate() {
                let span = target - t;
                if span > 0.0 {
                    let steps = (span / control.dt).ceil().max(1.0) as usize;
                    let sd = (control.variance * span / steps as f64).sqrt();
                    for _ in 0..steps {
                        increment(&mut u, n, m, sd, &mut rng);
                        since += 1;
                        if since == control.reorth_every {
                            orthonormalize(&mut u, n, m);
                            since = 0;
                        }
                    }
                    t = target;
                }
                worst = worst.max(defect(&u, n, m));
                out[ti * sz..(ti + 1) * sz].copy_from_slice(&u);
            }
            worst
        })
        .collect();
    let max_defect = defects.into_iter().fold(0.0, f64::max);
    if max_defect > ORTHOGONALITY_TOL {
        return Err(Error::Numerical(format!("frame orthogonality defect {max_defect:e}")));
    }
    Ok(OrthogonalPath { m, rows: n, t_grid: t_grid.to_vec(), paths, frames, max_defect })
}

/// Sorted eigenvalues of `M M^T` for the first `n` rows and `p` columns of
/// every frame, indexed `[time][path * n + i]`.
pub fn corner_eigenvalues(path: &OrthogonalPath, n: usize, p: usize) -> Result<Vec<Vec<f64>>> {
    if n > path.rows || p > path.m {
        return Err(Error::InvalidArgument(format!("corner {n}x{p} exceeds tracked {}x{}", path.rows, path.m)));
    }
    (0..path.t_grid.len())
        .map(|ti| {
            let per: Vec<Vec<f64>> = (0..path.paths)
                .into_par_iter()
                .map(|k| {
                    let u = path.frame(k, ti);
                    let mm = DMatrix::from_fn(n, p, |i, j| u[i * path.m + j]);
                    let mut ev: Vec<f64> = SymmetricEigen::new(&mm * mm.transpose())
                        .eigenvalues
                        .iter()
                        .map(|v| v.clamp(0.0, 1.0))
                        .collect();
                    ev.sort_by(f64::total_cmp);
                    ev
                })
                .collect();
            Ok(per.concat())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub fit: f64,
    pub fit_se: f64,
    pub target: f64,
    /// `fit / target`; the calibrated variance is the pilot one divided by it.
    pub factor: f64,
    pub control: OracleControl,
}

/// Pilot run from a start near 1: fit the decay rate of `phi` and rescale
/// the increment variance so it equals `lambda`.
pub fn calibrate(par: &ModelParams, control: &OracleControl, paths: usize, seed: u64) -> Result<Calibration> {
    let dims = OracleDims::for_params(par)?;
    let n = par.n();
    let x0: Vec<f64> = (0..n).map(|i| 0.99 - 0.01 * i as f64 / n as f64).collect();
    let u0 = rows_for(&x0, dims)?;
    let lambda = par.lambda();
    let grid: Vec<f64> = (0..9).map(|k| 0.25 * k as f64 / lambda).collect();
    let path = simulate_orthogonal_bm(dims.m, &u0, &grid, paths, seed, control)?;
    let ev = corner_eigenvalues(&path, n, dims.p)?;
    let ef = Eigenfunction::new(par);
    let values: Vec<Vec<f64>> = ev.iter().map(|snap| snap.chunks(n).map(|x| ef.eval(x)).collect()).collect();
    let DecayFit { rate, se, .. } = decay_fit_samples(&grid, &values)?;
    let factor = rate / lambda;
    Ok(Calibration {
        fit: rate,
        fit_se: se,
        target: lambda,
        factor,
        control: OracleControl { variance: control.variance / factor, ..*control },
    })
}
