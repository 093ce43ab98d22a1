//! Exact discrete transport with arbitrary weights by successive shortest
//! paths on the dense bipartite residual graph, plus the monotone 1D
//! coupling used as its oracle.

use crate::error::{Error, Result};

/// Residual capacities below this are treated as empty.
const CAP_EPS: f64 = 1e-15;

/// Optimal plan between weights `a` (rows) and `b` (columns) for the
/// row-major `cost`. Returns the nonzero entries `(i, j, mass)`.
pub fn solve_transport(cost: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
    let (r, c) = (a.len(), b.len());
    if cost.len() != r * c {
        return Err(Error::Dimension { expected: r * c, got: cost.len() });
    }
    // nodes: rows 0..r, columns r..r+c, sink r+c; the source is implicit
    let nv = r + c + 1;
    let sink = r + c;
    let mut flow = vec![0.0; r * c];
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut pot = vec![0.0; nv];
    let mut dist = vec![0.0; nv];
    let mut prev = vec![usize::MAX; nv];
    let mut done = vec![false; nv];

    let total: f64 = a.iter().sum();
    let mut remaining = total;
    let max_rounds = 20 * (r + c) + 100;
    let mut rounds = 0;
    while remaining > 1e-13 * total.max(1.0) {
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::NonConvergence {
                solver: "successive shortest paths",
                iterations: rounds,
                residual: remaining,
            });
        }
        // Dijkstra on reduced costs from the implicit source
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..r {
            if supply[i] > CAP_EPS {
                dist[i] = -pot[i];
                prev[i] = usize::MAX;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (v, &d) in dist.iter().enumerate() {
                if !done[v] && d < best {
                    best = d;
                    u = v;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            if u < r {
                let row = &cost[u * c..(u + 1) * c];
                for j in 0..c {
                    let v = r + j;
                    let nd = best + row[j] + pot[u] - pot[v];
                    if !done[v] && nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - r;
                for i in 0..r {
                    if !done[i] && flow[i * c + j] > CAP_EPS {
                        let nd = best - cost[i * c + j] + pot[u] - pot[i];
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
                if demand[j] > CAP_EPS {
                    let nd = best + pot[u] - pot[sink];
                    if nd < dist[sink] {
                        dist[sink] = nd;
                        prev[sink] = u;
                    }
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Numerical("transport residual graph disconnected".into()));
        }
        let dt = dist[sink];
        for v in 0..nv {
            pot[v] += dist[v].min(dt);
        }

        // bottleneck along the path
        let last_col = prev[sink];
        let mut push = demand[last_col - r];
        let mut v = last_col;
        let mut first_row = usize::MAX;
        while v != usize::MAX {
            let p = prev[v];
            if v < r {
                if p == usize::MAX {
                    first_row = v;
                } else {
                    push = push.min(flow[v * c + (p - r)]);
                }
            }
            v = p;
        }
        push = push.min(supply[first_row]);

        let mut v = last_col;
        while v != usize::MAX {
            let p = prev[v];
            if v >= r && v < sink {
                flow[p * c + (v - r)] += push;
            } else if v < r && p != usize::MAX {
                flow[v * c + (p - r)] -= push;
            }
            v = p;
        }
        supply[first_row] -= push;
        demand[last_col - r] -= push;
        remaining -= push;
    }

    Ok(flow.iter().enumerate().filter(|(_, &f)| f > CAP_EPS).map(|(k, &f)| (k / c, k % c, f)).collect())
}

/// North-west-corner coupling of two sorted 1D samples, optimal for any
/// convex cost of the difference.
pub fn quantile_coupling_1d(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut ix: Vec<usize> = (0..xs.len()).collect();
    let mut iy: Vec<usize> = (0..ys.len()).collect();
    ix.sort_by(|&p, &q| xs[p].total_cmp(&xs[q]));
    iy.sort_by(|&p, &q| ys[p].total_cmp(&ys[q]));
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut ra = ix.first().map_or(0.0, |&k| a[k]);
    let mut rb = iy.first().map_or(0.0, |&k| b[k]);
    while i < ix.len() && j < iy.len() {
        let m = ra.min(rb);
        if m > 0.0 {
            out.push((ix[i], iy[j], m));
        }
        ra -= m;
        rb -= m;
        if ra <= CAP_EPS {
            i += 1;
            ra = ix.get(i).map_or(0.0, |&k| a[k]);
        }
        if rb <= CAP_EPS {
            j += 1;
            rb = iy.get(j).map_or(0.0, |&k| b[k]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::assignment::solve_assignment;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn plan_cost(plan: &[(usize, usize, f64)], cost: &[f64], c: usize) -> f64 {
        plan.iter().map(|&(i, j, m)| m * cost[i * c + j]).sum()
    }

    fn normalized(rng: &mut impl Rng, k: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    #[test]
    fn agrees_with_assignment_on_uniform_weights() {
        let mut rng = stream(4, Domain::Test, 0);
        for n in [1, 3, 7, 12] {
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..2.0)).collect();
            let w = vec![1.0 / n as f64; n];
            let plan = solve_transport(&cost, &w, &w).unwrap();
            let (_, total) = solve_assignment(&cost, n);
            assert!((plan_cost(&plan, &cost, n) - total / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_quantile_coupling_in_1d() {
        let mut rng = stream(5, Domain::Test, 0);
        for (r, c) in [(1, 5), (4, 9), (13, 6), (20, 20)] {
            let xs: Vec<f64> = (0..r).map(|_| rng.random()).collect();
            let ys: Vec<f64> = (0..c).map(|_| rng.random()).collect();
            let a = normalized(&mut rng, r);
            let b = normalized(&mut rng, c);
            let cost: Vec<f64> = xs.iter().flat_map(|x| ys.iter().map(move |y| (x - y) * (x - y))).collect();
            let plan = solve_transport(&cost, &a, &b).unwrap();
            let oracle = quantile_coupling_1d(&xs, &a, &ys, &b);
            let got = plan_cost(&plan, &cost, c);
            let want = plan_cost(&oracle, &cost, c);
            assert!((got - want).abs() < 1e-12, "{r}x{c}: {got} vs {want}");
            for i in 0..r {
                let row: f64 = plan.iter().filter(|e| e.0 == i).map(|e| e.2).sum();
                assert!((row - a[i]).abs() < 1e-9);
            }
            for j in 0..c {
                let col: f64 = plan.iter().filter(|e| e.1 == j).map(|e| e.2).sum();
                assert!((col - b[j]).abs() < 1e-9);
            }
        }
    }
}
