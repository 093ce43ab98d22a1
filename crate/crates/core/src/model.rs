//! Parameter bookkeeping: well-posedness and convexity checks, derived
//! rates, regime presets for growing `n`, initial-condition builders and the
//! predicted cutoff window.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::Configuration;
use crate::error::{Error, Result};

/// Unvalidated `(n, beta, a, b)` as read from a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub n: usize,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `n >= 1`
    ParticleCount,
    /// `beta >= 1`
    BetaAtLeastOne,
    /// `min(a, b) > (2/beta)(n-1)`: global strong solution without collisions.
    WellPosed,
    /// `min(a, b) > (beta/2)(n-1) + 1`: strictly convex energy.
    Convexity,
}

/// One failed inequality `lhs > rhs` (or `>=` for `BetaAtLeastOne`).
/// `margin = lhs - rhs`, so a violation has `margin <= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.condition {
            Condition::ParticleCount => "n >= 1",
            Condition::BetaAtLeastOne => "beta >= 1",
            Condition::WellPosed => "min(a,b) > (2/beta)(n-1)",
            Condition::Convexity => "min(a,b) > (beta/2)(n-1) + 1",
        };
        write!(f, "{what} fails: {} vs {} (margin {})", self.lhs, self.rhs, self.margin)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every standing inequality. Strict inequalities get zero tolerance.
pub fn validate_params(p: &RawParams) -> Validation {
    let mut violations = Vec::new();
    let mut push = |condition, lhs: f64, rhs: f64, ok: bool| {
        if !ok {
            violations.push(Violation { condition, lhs, rhs, margin: lhs - rhs });
        }
    };
    push(Condition::ParticleCount, p.n as f64, 1.0, p.n >= 1);
    push(Condition::BetaAtLeastOne, p.beta, 1.0, p.beta >= 1.0);
    let low = p.a.min(p.b);
    let nm1 = p.n.saturating_sub(1) as f64;
    let well = 2.0 / p.beta * nm1;
    push(Condition::WellPosed, low, well, low > well);
    let conv = p.beta / 2.0 * nm1 + 1.0;
    push(Condition::Convexity, low, conv, low > conv);
    Validation { violations }
}

/// Rates and exponents derived from validated parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Spectral gap `a + b`.
    pub lambda: f64,
    /// Curvature `(a + b - beta(n-1) - 1) / 2`.
    pub rho: f64,
    /// Exponent of `cos(y/2)` in the flattened density, `2a - beta(n-1) - 1`.
    pub flat_exp_a: f64,
    /// Exponent of `sin(y/2)` in the flattened density, `2b - beta(n-1) - 1`.
    pub flat_exp_b: f64,
    /// Exponent of `(1 - x)` in the equilibrium density, `a - (beta/2)(n-1) - 1`.
    pub energy_exp_a: f64,
    /// Exponent of `x` in the equilibrium density, `b - (beta/2)(n-1) - 1`.
    pub energy_exp_b: f64,
    /// Equilibrium mean of one particle, `b / (a + b)`.
    pub mean_per_particle: f64,
}

/// Validated model parameters. Construction enforces both standing
/// inequalities, so every method on this type may assume them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    raw: RawParams,
    constants: DerivedConstants,
}

impl ModelParams {
    pub fn new(n: usize, beta: f64, a: f64, b: f64) -> Result<Self> {
        Self::try_from(RawParams { n, beta, a, b })
    }

    pub fn n(&self) -> usize {
        self.raw.n
    }
    pub fn beta(&self) -> f64 {
        self.raw.beta
    }
    pub fn a(&self) -> f64 {
        self.raw.a
    }
    pub fn b(&self) -> f64 {
        self.raw.b
    }
    pub fn raw(&self) -> RawParams {
        self.raw
    }
    pub fn constants(&self) -> &DerivedConstants {
        &self.constants
    }
    pub fn lambda(&self) -> f64 {
        self.constants.lambda
    }
    pub fn rho(&self) -> f64 {
        self.constants.rho
    }

    /// Equilibrium mean of the coordinate sum, `n b / lambda`.
    pub fn equilibrium_sum_mean(&self) -> f64 {
        self.n() as f64 * self.constants.mean_per_particle
    }
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        if !(raw.beta.is_finite() && raw.a.is_finite() && raw.b.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite parameters {raw:?}")));
        }
        let v = validate_params(&raw);
        if !v.is_ok() {
            return Err(Error::InvalidParams(v.violations));
        }
        Ok(Self { raw, constants: derive_constants(&raw) })
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        p.raw
    }
}

fn derive_constants(p: &RawParams) -> DerivedConstants {
    let nm1 = (p.n - 1) as f64;
    let lambda = p.a + p.b;
    DerivedConstants {
        lambda,
        rho: 0.5 * (lambda - p.beta * nm1 - 1.0),
        flat_exp_a: 2.0 * p.a - p.beta * nm1 - 1.0,
        flat_exp_b: 2.0 * p.b - p.beta * nm1 - 1.0,
        energy_exp_a: p.a - 0.5 * p.beta * nm1 - 1.0,
        energy_exp_b: p.b - 0.5 * p.beta * nm1 - 1.0,
        mean_per_particle: p.b / lambda,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffWindow {
    pub c_minus: f64,
    pub c_plus: f64,
    /// `c_minus > 0 && c_minus <= c_plus`.
    pub informative: bool,
}

/// Predicted bracket for the mixing time from a start with empirical mean
/// `xbar`. The lower end is clamped at 0 when its logarithm is non-positive.
pub fn cutoff_window(p: &ModelParams, xbar: f64) -> Result<CutoffWindow> {
    if !(0.0..=1.0).contains(&xbar) {
        return Err(Error::OutOfRange { index: 0, value: xbar, lo: 0.0, hi: 1.0 });
    }
    let n = p.n() as f64;
    let lambda = p.lambda();
    let m = p.constants().mean_per_particle;
    let arg = (n * lambda / p.b()).sqrt() * (xbar - m).abs();
    let c_minus = if arg > 1.0 { arg.ln() / lambda } else { 0.0 };
    let denom = lambda - p.beta() * (n - 1.0);
    assert!(denom > 0.0, "lambda - beta(n-1) must be positive for valid params");
    let c_plus = n.ln().max((xbar + m).abs().ln()) / denom;
    Ok(CutoffWindow { c_minus, c_plus, informative: c_minus > 0.0 && c_minus <= c_plus })
}

/// Asymptotic regime of `a_n / b_n -> r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RegimeKind {
    /// `r = +inf` with `a = n^alpha b`, `alpha in (0, 1]`.
    Infinite { alpha: f64 },
    /// `r = 0` with `b = n^2`.
    Zero,
    /// `0 < r < inf` with `a = r b` and `rho / lambda = alpha in (0, 1/2)`.
    Mid { alpha: f64, ratio: f64 },
}

/// A parameter sequence `n -> ModelParams` plus its predicted window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimePreset {
    pub kind: RegimeKind,
    pub beta: f64,
}

/// Smallest slope `k` so that `k (n-1) + 2` clears both standing bounds.
fn base_slope(beta: f64) -> f64 {
    (2.0 / beta).max(beta / 2.0)
}

impl RegimePreset {
    pub fn params(&self, n: usize) -> Result<ModelParams> {
        let nm1 = n.saturating_sub(1) as f64;
        let nf = n as f64;
        let (a, b) = match self.kind {
            RegimeKind::Infinite { alpha } => {
                let b = base_slope(self.beta) * nm1 + 2.0;
                (nf.powf(alpha) * b, b)
            }
            RegimeKind::Zero => (base_slope(self.beta) * nm1 + 2.0, nf * nf),
            RegimeKind::Mid { alpha, ratio } => {
                let lambda = (self.beta * nm1 + 1.0) / (1.0 - 2.0 * alpha);
                (ratio * lambda / (ratio + 1.0), lambda / (ratio + 1.0))
            }
        };
        ModelParams::new(n, self.beta, a, b)
    }

    /// Predicted `(c-, c+)` for the regime at size `n`.
    pub fn window(&self, n: usize) -> Result<(f64, f64)> {
        let p = self.params(n)?;
        let log_n = (n as f64).ln();
        let lambda = p.lambda();
        Ok(match self.kind {
            RegimeKind::Infinite { alpha } => ((1.0 + alpha) / 2.0 * log_n / lambda, log_n / lambda),
            RegimeKind::Zero => (log_n / (2.0 * lambda), log_n / lambda),
            RegimeKind::Mid { alpha, .. } => (log_n / (2.0 * lambda), log_n / (2.0 * alpha * lambda)),
        })
    }
}

/// Build a preset and check that it generates valid parameters on every `n`
/// in `ns`.
pub fn regime_preset(kind: RegimeKind, beta: f64, ns: impl IntoIterator<Item = usize>) -> Result<RegimePreset> {
    match kind {
        RegimeKind::Infinite { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
            return Err(Error::InvalidArgument(format!("r=inf preset needs alpha in (0,1], got {alpha}")));
        }
        RegimeKind::Mid { alpha, ratio } if !(alpha > 0.0 && alpha < 0.5) || !(ratio > 0.0) => {
            return Err(Error::InvalidArgument(format!(
                "mid preset needs alpha in (0,1/2) and ratio > 0, got alpha={alpha} ratio={ratio}"
            )));
        }
        _ => {}
    }
    let preset = RegimePreset { kind, beta };
    for n in ns {
        preset
            .params(n)
            .map_err(|e| Error::InvalidArgument(format!("preset {kind:?} (beta={beta}) inadmissible at n={n}: {e}")))?;
    }
    Ok(preset)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum X0Builder {
    /// `i / (n+1)`.
    Equispaced,
    /// `1 - eps + eps i/(n+1)`, packed into `(1-eps, 1)`.
    NearOne(f64),
    /// `eps i/(n+1)`, packed into `(0, eps)`.
    NearZero(f64),
    /// Equispaced around `mean`, spacing shrunk to stay inside `(0,1)`.
    Centered(f64),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub x0: Configuration,
    /// Empirical mean of `x0`.
    pub xbar: f64,
}

pub fn initial_condition(builder: &X0Builder, n: usize) -> Result<InitialCondition> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let grid = |i: usize| (i + 1) as f64 / (n + 1) as f64;
    let check_eps = |eps: f64| {
        if eps > 0.0 && eps <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("epsilon must be in (0,1], got {eps}")))
        }
    };
    let values: Vec<f64> = match builder {
        X0Builder::Equispaced => (0..n).map(grid).collect(),
        X0Builder::NearOne(eps) => {
            check_eps(*eps)?;
            (0..n).map(|i| 1.0 - eps + eps * grid(i)).collect()
        }
        X0Builder::NearZero(eps) => {
            check_eps(*eps)?;
            (0..n).map(|i| eps * grid(i)).collect()
        }
        X0Builder::Centered(mean) => {
            if !(*mean > 0.0 && *mean < 1.0) {
                return Err(Error::InvalidArgument(format!("centered mean must be in (0,1), got {mean}")));
            }
            let h = (1.0 / (n + 1) as f64).min(2.0 * mean.min(1.0 - mean) / (n + 1) as f64);
            let mid = (n as f64 - 1.0) / 2.0;
            (0..n).map(|i| mean + (i as f64 - mid) * h).collect()
        }
        X0Builder::Explicit(v) => {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, got: v.len() });
            }
            v.clone()
        }
    };
    let x0 = Configuration::new(values)?;
    let xbar = x0.as_slice().iter().sum::<f64>() / n as f64;
    Ok(InitialCondition { x0, xbar })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(n: usize, beta: f64, a: f64, b: f64) -> RawParams {
        RawParams { n, beta, a, b }
    }

    #[test]
    fn validation_examples() {
        assert!(validate_params(&raw(4, 1.0, 8.0, 8.0)).is_ok());
        assert!(validate_params(&raw(1, 1.0, 1.5, 1.5)).is_ok());

        let v = validate_params(&raw(4, 1.0, 6.0, 8.0));
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].condition, Condition::WellPosed);
        assert_eq!(v.violations[0].margin, 0.0);
    }

    #[test]
    fn validation_reports_every_failure() {
        let v = validate_params(&raw(3, 0.5, 1.0, 1.0));
        let conds: Vec<_> = v.violations.iter().map(|v| v.condition).collect();
        assert_eq!(conds, vec![Condition::BetaAtLeastOne, Condition::WellPosed, Condition::Convexity]);
        assert!(matches!(ModelParams::new(3, 0.5, 1.0, 1.0), Err(Error::InvalidParams(_))));
        assert!(!validate_params(&raw(0, 1.0, 2.0, 2.0)).is_ok());
    }

    #[test]
    fn derived_constants_examples() {
        let c = *ModelParams::new(4, 1.0, 8.0, 8.0).unwrap().constants();
        assert_eq!(c.lambda, 16.0);
        assert_eq!(c.rho, 6.0);
        assert_eq!((c.flat_exp_a, c.flat_exp_b), (12.0, 12.0));
        assert_eq!((c.energy_exp_a, c.energy_exp_b), (5.5, 5.5));
        assert_eq!(c.mean_per_particle, 0.5);

        let c = *ModelParams::new(2, 1.0, 8.0, 8.0).unwrap().constants();
        assert_eq!((c.lambda, c.rho, c.flat_exp_a, c.flat_exp_b), (16.0, 7.0, 14.0, 14.0));

        let c = *ModelParams::new(1, 2.5, 3.0, 5.0).unwrap().constants();
        assert_eq!(c.rho, 3.5);
        assert_eq!((c.flat_exp_a, c.flat_exp_b), (5.0, 9.0));
    }

    #[test]
    fn window_example() {
        let p = ModelParams::new(4, 1.0, 8.0, 8.0).unwrap();
        let w = cutoff_window(&p, 0.9).unwrap();
        // ln(sqrt(8) * 0.4) / 16 and ln 4 / 13
        let want_minus = (8f64.sqrt() * 0.4).ln() / 16.0;
        assert!((w.c_minus - want_minus).abs() < 1e-15);
        assert!((w.c_minus - 0.0077144).abs() < 1e-6);
        assert!((w.c_plus - 4f64.ln() / 13.0).abs() < 1e-15);
        assert!(w.informative);

        let w = cutoff_window(&p, 0.5).unwrap();
        assert_eq!(w.c_minus, 0.0);
        assert!(!w.informative);
        assert!(cutoff_window(&p, 1.5).is_err());
    }

    #[test]
    fn presets_match_examples() {
        let inf = regime_preset(RegimeKind::Infinite { alpha: 1.0 }, 1.0, [16]).unwrap();
        let p = inf.params(16).unwrap();
        assert_eq!((p.a(), p.b()), (512.0, 32.0));
        let (lo, hi) = inf.window(16).unwrap();
        assert!((hi - 16f64.ln() / 544.0).abs() < 1e-15);
        assert!((lo - hi).abs() < 1e-15);

        let zero = regime_preset(RegimeKind::Zero, 1.0, [16]).unwrap();
        let p = zero.params(16).unwrap();
        assert_eq!((p.a(), p.b()), (32.0, 256.0));
        let (lo, hi) = zero.window(16).unwrap();
        assert!((lo - 16f64.ln() / 576.0).abs() < 1e-15);
        assert!((hi - 16f64.ln() / 288.0).abs() < 1e-15);

        let mid = regime_preset(RegimeKind::Mid { alpha: 0.25, ratio: 1.0 }, 2.0, [8]).unwrap();
        let p = mid.params(8).unwrap();
        assert_eq!((p.a(), p.b()), (15.0, 15.0));
        assert!((p.rho() / p.lambda() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn preset_admissibility_errors() {
        assert!(regime_preset(RegimeKind::Infinite { alpha: 1.5 }, 1.0, [4]).is_err());
        assert!(regime_preset(RegimeKind::Mid { alpha: 0.5, ratio: 1.0 }, 1.0, [4]).is_err());
        // exact rho/lambda = 1/4 at beta = 1, r = 1 forces a = b = n, too small
        assert!(regime_preset(RegimeKind::Mid { alpha: 0.25, ratio: 1.0 }, 1.0, [8]).is_err());
    }

    #[test]
    fn builders() {
        let ic = initial_condition(&X0Builder::Equispaced, 4).unwrap();
        let want = [0.2, 0.4, 0.6, 0.8];
        for (x, w) in ic.x0.as_slice().iter().zip(want) {
            assert!((x - w).abs() < 1e-15);
        }
        assert!((ic.xbar - 0.5).abs() < 1e-15);

        let ic = initial_condition(&X0Builder::NearOne(0.1), 2).unwrap();
        assert!((ic.x0.as_slice()[0] - (0.9 + 0.1 / 3.0)).abs() < 1e-15);
        assert!((ic.x0.as_slice()[1] - (0.9 + 0.2 / 3.0)).abs() < 1e-15);
        assert!((ic.xbar - 0.95).abs() < 1e-12);

        let ic = initial_condition(&X0Builder::Centered(0.95), 4).unwrap();
        let phi = ic.x0.as_slice().iter().sum::<f64>() - 2.0;
        assert!((phi - 1.8).abs() < 1e-12);
        assert!(ic.x0.as_slice().iter().all(|&x| x > 0.0 && x < 1.0));

        assert!(matches!(initial_condition(&X0Builder::Explicit(vec![0.5, 0.2]), 2), Err(Error::Ordering { .. })));
        assert!(initial_condition(&X0Builder::Explicit(vec![0.0, 1.0]), 2).is_ok());
    }
}
