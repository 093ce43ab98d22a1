//! Log-domain Sinkhorn with epsilon scaling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornControl {
    /// Marginal violation (L1 on the rows) accepted at the final epsilon.
    pub tol: f64,
    /// Looser tolerance for intermediate stages of the schedule.
    pub stage_tol: f64,
    pub max_iter: usize,
    /// Ratio between consecutive epsilons of the schedule.
    pub scaling: f64,
    /// Largest `rows + cols` for which Newton polishing is attempted.
    pub newton_limit: usize,
}

impl Default for SinkhornControl {
    fn default() -> Self {
        Self { tol: 1e-9, stage_tol: 1e-6, max_iter: 50_000, scaling: 0.5, newton_limit: 2048 }
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornOutput {
    /// `sum_ij pi_ij c_ij` for the final plan.
    pub cost: f64,
    pub plan: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
    /// `(epsilon, transport cost)` after each converged stage, largest
    /// epsilon first.
    pub trace: Vec<(f64, f64)>,
}

struct Problem<'a> {
    cost: &'a [f64],
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    r: usize,
    c: usize,
}

/// `-eps * ln sum_k exp(t_k)` with `t_k = w_k + (h_k - c_k)/eps`, stable.
#[inline]
fn soft_min(eps: f64, len: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for k in 0..len {
        m = m.max(term(k));
    }
    if !m.is_finite() {
        return -eps * m;
    }
    let s: f64 = (0..len).map(|k| (term(k) - m).exp()).sum();
    -eps * (m + s.ln())
}

impl Problem<'_> {
    fn update_f(&self, f: &mut [f64], g: &[f64], eps: f64) {
        let inv = 1.0 / eps;
        f.par_iter_mut().enumerate().for_each(|(i, fi)| {
            let row = &self.cost[i * self.c..(i + 1) * self.c];
            *fi = soft_min(eps, self.c, |j| self.log_b[j] + (g[j] - row[j]) * inv);
        });
    }

    fn update_g(&self, f: &[f64], g: &mut [f64], eps: f64) {
        let inv = 1.0 / eps;
        g.par_iter_mut().enumerate().for_each(|(j, gj)| {
            *gj = soft_min(eps, self.r, |i| self.log_a[i] + (f[i] - self.cost[i * self.c + j]) * inv);
        });
    }

    fn plan_entry(&self, f: &[f64], g: &[f64], eps: f64, i: usize, j: usize) -> f64 {
        (self.log_a[i] + self.log_b[j] + (f[i] + g[j] - self.cost[i * self.c + j]) / eps).exp()
    }

    /// L1 violation of both marginals.
    fn marginal_error(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        let mut cols = vec![0.0; self.c];
        let mut err = 0.0;
        for i in 0..self.r {
            let mut s = 0.0;
            for (j, col) in cols.iter_mut().enumerate() {
                let p = self.plan_entry(f, g, eps, i, j);
                s += p;
                *col += p;
            }
            err += (s - self.log_a[i].exp()).abs();
        }
        err + cols.iter().zip(&self.log_b).map(|(s, lb)| (s - lb.exp()).abs()).sum::<f64>()
    }

    fn sums(&self, f: &[f64], g: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let plan: Vec<f64> =
            (0..self.r * self.c).into_par_iter().map(|k| self.plan_entry(f, g, eps, k / self.c, k % self.c)).collect();
        let mut rows = vec![0.0; self.r];
        let mut cols = vec![0.0; self.c];
        for i in 0..self.r {
            for j in 0..self.c {
                rows[i] += plan[i * self.c + j];
                cols[j] += plan[i * self.c + j];
            }
        }
        (plan, rows, cols)
    }

    fn error_of(&self, rows: &[f64], cols: &[f64]) -> f64 {
        let e1: f64 = rows.iter().zip(&self.log_a).map(|(s, la)| (s - la.exp()).abs()).sum();
        let e2: f64 = cols.iter().zip(&self.log_b).map(|(s, lb)| (s - lb.exp()).abs()).sum();
        e1 + e2
    }

    /// One damped Newton step on the dual with the last column potential
    /// pinned. Returns the new error, or `None` if no step size helped.
    fn newton(&self, f: &mut [f64], g: &mut [f64], eps: f64) -> Option<f64> {
        let (r, c) = (self.r, self.c);
        let (plan, rows, cols) = self.sums(f, g, eps);
        let err0 = self.error_of(&rows, &cols);
        let dim = r + c - 1;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..r {
            h[(i, i)] = rows[i];
            rhs[i] = self.log_a[i].exp() - rows[i];
            for j in 0..c - 1 {
                h[(i, r + j)] = plan[i * c + j];
                h[(r + j, i)] = plan[i * c + j];
            }
        }
        for j in 0..c - 1 {
            h[(r + j, r + j)] = cols[j];
            rhs[r + j] = self.log_b[j].exp() - cols[j];
        }
        let ridge = 1e-14 * h.diagonal().max();
        for k in 0..dim {
            h[(k, k)] += ridge;
        }
        let step = h.cholesky()?.solve(&rhs) * eps;
        let mut t = 1.0;
        for _ in 0..12 {
            let nf: Vec<f64> = f.iter().enumerate().map(|(i, x)| x + t * step[i]).collect();
            let ng: Vec<f64> =
                g.iter().enumerate().map(|(j, x)| if j + 1 < c { x + t * step[r + j] } else { *x }).collect();
            let (_, nr, nc) = self.sums(&nf, &ng, eps);
            let e = self.error_of(&nr, &nc);
            if e < err0 {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                return Some(e);
            }
            t *= 0.5;
        }
        None
    }

    fn transport_cost(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        // row sums in parallel, total in a fixed order so results do not
        // depend on the thread count
        let rows: Vec<f64> = (0..self.r)
            .into_par_iter()
            .map(|i| (0..self.c).map(|j| self.plan_entry(f, g, eps, i, j) * self.cost[i * self.c + j]).sum::<f64>())
            .collect();
        rows.iter().sum()
    }
}

/// Sweeps between marginal checks.
const CHECK_EVERY: usize = 10;
/// Plain sweeps in a stage before Newton steps are interleaved.
const NEWTON_AFTER: usize = 20;

/// Entropic transport between weights `a` and `b` for the row-major
/// `cost`, annealing epsilon geometrically from the largest cost down to
/// `eps`. Plain sweeps are slow once the plan is nearly sparse, so on small
/// problems each stage is finished with damped Newton steps on the dual.
pub fn sinkhorn(cost: &[f64], a: &[f64], b: &[f64], eps: f64, control: &SinkhornControl) -> Result<SinkhornOutput> {
    let (r, c) = (a.len(), b.len());
    if cost.len() != r * c {
        return Err(Error::Dimension { expected: r * c, got: cost.len() });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let pb =
        Problem { cost, log_a: a.iter().map(|x| x.ln()).collect(), log_b: b.iter().map(|x| x.ln()).collect(), r, c };
    let cmax = cost.iter().copied().fold(0.0, f64::max);
    let mut schedule = Vec::new();
    let mut e = cmax.max(eps);
    while e > eps {
        schedule.push(e);
        e *= control.scaling;
    }
    schedule.push(eps);

    let use_newton = r > 0 && c > 0 && r + c <= control.newton_limit;
    let mut f = vec![0.0; r];
    let mut g = vec![0.0; c];
    let mut iterations = 0;
    let mut trace = Vec::with_capacity(schedule.len());
    let mut err = f64::INFINITY;
    for (k, &e) in schedule.iter().enumerate() {
        let tol = if k + 1 == schedule.len() { control.tol } else { control.stage_tol };
        let mut it = 0;
        loop {
            pb.update_f(&mut f, &g, e);
            pb.update_g(&f, &mut g, e);
            it += 1;
            if it % CHECK_EVERY == 0 || it == 1 {
                err = pb.marginal_error(&f, &g, e);
                if use_newton && err > tol && it >= NEWTON_AFTER {
                    if let Some(ne) = pb.newton(&mut f, &mut g, e) {
                        err = ne;
                    }
                }
                log::trace!("sinkhorn eps={e:.3e} it={it} err={err:.3e}");
                if err <= tol {
                    break;
                }
            }
            if it >= control.max_iter {
                return Err(Error::NonConvergence { solver: "sinkhorn", iterations: iterations + it, residual: err });
            }
        }
        iterations += it;
        trace.push((e, pb.transport_cost(&f, &g, e)));
    }
    let plan: Vec<f64> = (0..r * c).map(|k| pb.plan_entry(&f, &g, eps, k / c, k % c)).collect();
    let cost_final = trace.last().map_or(0.0, |t| t.1);
    Ok(SinkhornOutput { cost: cost_final, plan, f, g, iterations, marginal_error: err, trace })
}
