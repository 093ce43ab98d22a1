//! Mixing-time estimates from a sampled distance curve.

use serde::{Deserialize, Serialize};

/// Weighted least-squares non-increasing fit (pool adjacent violators).
pub fn antitonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let k = blocks.len();
            let (m2, w2, l2) = blocks[k - 1];
            let (m1, w1, l1) = blocks[k - 2];
            if m1 >= m2 {
                break;
            }
            let w = w1 + w2;
            let m = if w > 0.0 { (m1 * w1 + m2 * w2) / w } else { 0.5 * (m1 + m2) };
            blocks.truncate(k - 2);
            blocks.push((m, w, l1 + l2));
        }
    }
    blocks.iter().flat_map(|&(m, _, l)| std::iter::repeat_n(m, l)).collect()
}

/// First time a non-increasing curve reaches `level`, interpolating
/// linearly between grid points. `Some(t0)` if it starts at or below the
/// level, `None` if it never gets there.
pub fn first_crossing(times: &[f64], curve: &[f64], level: f64) -> Option<f64> {
    let k = curve.iter().position(|&v| v <= level)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (t0, t1, v0, v1) = (times[k - 1], times[k], curve[k - 1], curve[k]);
    if v0 == v1 {
        return Some(t1);
    }
    Some(t0 + (v0 - level) / (v0 - v1) * (t1 - t0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmixEstimate {
    pub epsilon: f64,
    /// `None` when the fitted curve stays above `epsilon` on the grid.
    pub t_mix: Option<f64>,
}

/// `t_mix(eps)` for each level from the monotone fit of `(times, w)`,
/// weighting points by inverse squared standard error.
pub fn estimate_tmix(times: &[f64], w: &[f64], se: &[f64], levels: &[f64]) -> Vec<TmixEstimate> {
    let fit = antitonic_fit(w, &inverse_variance(se));
    levels.iter().map(|&epsilon| TmixEstimate { epsilon, t_mix: first_crossing(times, &fit, epsilon) }).collect()
}

/// `1/se^2`, with zero errors given the weight of the smallest positive one
/// (or unit weight when all are zero).
pub fn inverse_variance(se: &[f64]) -> Vec<f64> {
    let floor = se.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    se.iter().map(|&s| 1.0 / s.max(floor).powi(2)).collect()
}
