//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, lists are comma separated. Every
//! key can also be given on the command line as `--key=value`, which wins
//! over the file. `to_text` writes every key, so a written config parses
//! back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use dyson_jacobi::model::{initial_condition, regime_preset, InitialCondition, RegimeKind, RegimePreset, X0Builder};
use dyson_jacobi::{ModelParams, Scheme, StepControl};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetName {
    RInf,
    RZero,
    RMid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Geometric,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OtKind {
    Exact,
    Entropic,
    Sliced,
    Sorted,
}

/// Deliberate defects for mutation checks of the verification suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    None,
    DriftSign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub n: usize,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub preset: Option<PresetName>,
    pub alpha: f64,
    pub ratio: f64,
    pub ns: Vec<usize>,
    pub x0: X0Builder,
    pub grid: GridKind,
    /// Grid start in units of `1/lambda`.
    pub t_start: f64,
    /// Grid end in units of `1/lambda`; `None` means `3 c+`.
    pub t_end: Option<f64>,
    pub points: usize,
    pub m: usize,
    pub reference_m: usize,
    /// Step in units of `1/lambda`.
    pub dt: f64,
    pub max_halvings: u32,
    pub scheme: Scheme,
    pub ot: OtKind,
    pub ot_atoms: usize,
    pub replicates: usize,
    /// Entropic regularization relative to the mean ground cost.
    pub epsilon: f64,
    pub projections: usize,
    pub order: u32,
    pub tv_bootstrap: usize,
    /// KL regularization scale; `None` means `1/(2 rho)`.
    pub eta: Option<f64>,
    /// Absolute levels for `t_mix`.
    pub levels: Vec<f64>,
    pub delta: f64,
    pub chains: usize,
    pub verify_ns: Vec<usize>,
    pub verify_betas: Vec<f64>,
    pub verify_ab: Vec<f64>,
    pub verify_points: usize,
    pub verify_gibbs: usize,
    pub fault: Fault,
    pub oracle_paths: usize,
    pub out: PathBuf,
    pub svg: bool,
    pub seed: Option<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n: 4,
            beta: 1.0,
            a: 8.0,
            b: 8.0,
            preset: None,
            alpha: 1.0,
            ratio: 1.0,
            ns: vec![4, 8, 16, 32],
            x0: X0Builder::Equispaced,
            grid: GridKind::Geometric,
            t_start: 0.01,
            t_end: None,
            points: 24,
            m: 4096,
            reference_m: 4096,
            dt: 0.01,
            max_halvings: 0,
            scheme: Scheme::EdjEuler,
            ot: OtKind::Exact,
            ot_atoms: 512,
            replicates: 8,
            epsilon: 0.01,
            projections: 64,
            order: 2,
            tv_bootstrap: 200,
            eta: None,
            levels: vec![0.5],
            delta: 0.2,
            chains: 4,
            verify_ns: vec![1, 2, 4, 8],
            verify_betas: vec![1.0, 2.0],
            verify_ab: vec![8.0, 16.0],
            verify_points: 1000,
            verify_gibbs: 10_000,
            fault: Fault::None,
            oracle_paths: 20_000,
            out: PathBuf::from("out"),
            svg: true,
            seed: None,
        }
    }
}

/// Keys in file order.
pub const KEYS: &[&str] = &[
    "n",
    "beta",
    "a",
    "b",
    "preset",
    "alpha",
    "ratio",
    "ns",
    "x0",
    "grid",
    "t_start",
    "t_end",
    "points",
    "m",
    "reference_m",
    "dt",
    "max_halvings",
    "scheme",
    "ot",
    "ot_atoms",
    "replicates",
    "epsilon",
    "projections",
    "order",
    "tv_bootstrap",
    "eta",
    "levels",
    "delta",
    "chains",
    "verify_ns",
    "verify_betas",
    "verify_ab",
    "verify_points",
    "verify_gibbs",
    "fault",
    "oracle_paths",
    "out",
    "svg",
    "seed",
];

fn bad(key: &str, value: &str, what: &str) -> HarnessError {
    HarnessError::Config(format!("{key} = {value:?}: {what}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "not a number"))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn auto<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_x0(v: &str) -> Result<X0Builder> {
    let (kind, arg) = v.split_once(':').unwrap_or((v, ""));
    Ok(match kind {
        "equispaced" if arg.is_empty() => X0Builder::Equispaced,
        "near_one" => X0Builder::NearOne(num("x0", arg)?),
        "near_zero" => X0Builder::NearZero(num("x0", arg)?),
        "centered" => X0Builder::Centered(num("x0", arg)?),
        "explicit" => X0Builder::Explicit(list("x0", arg)?),
        _ => {
            return Err(bad("x0", v, "expected equispaced, near_one:E, near_zero:E, centered:M or explicit:v1,v2,..."))
        }
    })
}

fn x0_text(b: &X0Builder) -> String {
    match b {
        X0Builder::Equispaced => "equispaced".into(),
        X0Builder::NearOne(e) => format!("near_one:{e}"),
        X0Builder::NearZero(e) => format!("near_zero:{e}"),
        X0Builder::Centered(m) => format!("centered:{m}"),
        X0Builder::Explicit(v) => format!("explicit:{}", join(v)),
    }
}

impl Config {
    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let k = k.trim();
            if seen.insert(k.to_string(), lineno + 1).is_some() {
                return Err(HarnessError::Config(format!("line {}: duplicate key {k}", lineno + 1)));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n" => self.n = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "a" => self.a = num(key, v)?,
            "b" => self.b = num(key, v)?,
            "preset" => {
                self.preset = match v {
                    "none" => None,
                    "r_inf" => Some(PresetName::RInf),
                    "r_zero" => Some(PresetName::RZero),
                    "r_mid" => Some(PresetName::RMid),
                    _ => return Err(bad(key, v, "expected none, r_inf, r_zero or r_mid")),
                }
            }
            "alpha" => self.alpha = num(key, v)?,
            "ratio" => self.ratio = num(key, v)?,
            "ns" => self.ns = list(key, v)?,
            "x0" => self.x0 = parse_x0(v)?,
            "grid" => {
                self.grid = match v {
                    "geometric" => GridKind::Geometric,
                    "linear" => GridKind::Linear,
                    _ => return Err(bad(key, v, "expected geometric or linear")),
                }
            }
            "t_start" => self.t_start = num(key, v)?,
            "t_end" => self.t_end = auto(key, v)?,
            "points" => self.points = num(key, v)?,
            "m" => self.m = num(key, v)?,
            "reference_m" => self.reference_m = num(key, v)?,
            "dt" => self.dt = num(key, v)?,
            "max_halvings" => self.max_halvings = num(key, v)?,
            "scheme" => {
                self.scheme = match v {
                    "edj" => Scheme::EdjEuler,
                    "dj" => Scheme::DjEuler,
                    _ => return Err(bad(key, v, "expected edj or dj")),
                }
            }
            "ot" => {
                self.ot = match v {
                    "exact" => OtKind::Exact,
                    "entropic" => OtKind::Entropic,
                    "sliced" => OtKind::Sliced,
                    "sorted" => OtKind::Sorted,
                    _ => return Err(bad(key, v, "expected exact, entropic, sliced or sorted")),
                }
            }
            "ot_atoms" => self.ot_atoms = num(key, v)?,
            "replicates" => self.replicates = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "projections" => self.projections = num(key, v)?,
            "order" => self.order = num(key, v)?,
            "tv_bootstrap" => self.tv_bootstrap = num(key, v)?,
            "eta" => self.eta = auto(key, v)?,
            "levels" => self.levels = list(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "chains" => self.chains = num(key, v)?,
            "verify_ns" => self.verify_ns = list(key, v)?,
            "verify_betas" => self.verify_betas = list(key, v)?,
            "verify_ab" => self.verify_ab = list(key, v)?,
            "verify_points" => self.verify_points = num(key, v)?,
            "verify_gibbs" => self.verify_gibbs = num(key, v)?,
            "fault" => {
                self.fault = match v {
                    "none" => Fault::None,
                    "drift_sign" => Fault::DriftSign,
                    _ => return Err(bad(key, v, "expected none or drift_sign")),
                }
            }
            "oracle_paths" => self.oracle_paths = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "svg" => self.svg = v.parse().map_err(|_| bad(key, v, "expected true or false"))?,
            "seed" => self.seed = auto(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key in [`KEYS`] order. Floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let opt = |o: Option<f64>| o.map_or("auto".to_string(), |v| v.to_string());
        let mut s = String::new();
        for &k in KEYS {
            let v = match k {
                "n" => self.n.to_string(),
                "beta" => self.beta.to_string(),
                "a" => self.a.to_string(),
                "b" => self.b.to_string(),
                "preset" => match self.preset {
                    None => "none",
                    Some(PresetName::RInf) => "r_inf",
                    Some(PresetName::RZero) => "r_zero",
                    Some(PresetName::RMid) => "r_mid",
                }
                .into(),
                "alpha" => self.alpha.to_string(),
                "ratio" => self.ratio.to_string(),
                "ns" => join(&self.ns),
                "x0" => x0_text(&self.x0),
                "grid" => match self.grid {
                    GridKind::Geometric => "geometric",
                    GridKind::Linear => "linear",
                }
                .into(),
                "t_start" => self.t_start.to_string(),
                "t_end" => opt(self.t_end),
                "points" => self.points.to_string(),
                "m" => self.m.to_string(),
                "reference_m" => self.reference_m.to_string(),
                "dt" => self.dt.to_string(),
                "max_halvings" => self.max_halvings.to_string(),
                "scheme" => match self.scheme {
                    Scheme::EdjEuler => "edj",
                    Scheme::DjEuler => "dj",
                }
                .into(),
                "ot" => match self.ot {
                    OtKind::Exact => "exact",
                    OtKind::Entropic => "entropic",
                    OtKind::Sliced => "sliced",
                    OtKind::Sorted => "sorted",
                }
                .into(),
                "ot_atoms" => self.ot_atoms.to_string(),
                "replicates" => self.replicates.to_string(),
                "epsilon" => self.epsilon.to_string(),
                "projections" => self.projections.to_string(),
                "order" => self.order.to_string(),
                "tv_bootstrap" => self.tv_bootstrap.to_string(),
                "eta" => opt(self.eta),
                "levels" => join(&self.levels),
                "delta" => self.delta.to_string(),
                "chains" => self.chains.to_string(),
                "verify_ns" => join(&self.verify_ns),
                "verify_betas" => join(&self.verify_betas),
                "verify_ab" => join(&self.verify_ab),
                "verify_points" => self.verify_points.to_string(),
                "verify_gibbs" => self.verify_gibbs.to_string(),
                "fault" => match self.fault {
                    Fault::None => "none",
                    Fault::DriftSign => "drift_sign",
                }
                .into(),
                "oracle_paths" => self.oracle_paths.to_string(),
                "out" => self.out.display().to_string(),
                "svg" => self.svg.to_string(),
                "seed" => self.seed.map_or("auto".to_string(), |v| v.to_string()),
                _ => unreachable!("key list and writer disagree on {k}"),
            };
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Apply `--key=value` arguments. Returns the arguments that are not
    /// config overrides, in order.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<Vec<String>> {
        let mut rest = Vec::new();
        for a in args {
            match a.strip_prefix("--").and_then(|s| s.split_once('=')) {
                Some((k, v)) if KEYS.contains(&k) => self.set(k, v)?,
                _ => rest.push(a.clone()),
            }
        }
        Ok(rest)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| HarnessError::Config("--seed is required for this command".into()))
    }

    pub fn regime(&self) -> Result<Option<RegimePreset>> {
        let kind = match self.preset {
            None => return Ok(None),
            Some(PresetName::RInf) => RegimeKind::Infinite { alpha: self.alpha },
            Some(PresetName::RZero) => RegimeKind::Zero,
            Some(PresetName::RMid) => RegimeKind::Mid { alpha: self.alpha, ratio: self.ratio },
        };
        Ok(Some(regime_preset(kind, self.beta, self.sizes())?))
    }

    /// Sizes a preset is evaluated on: `ns` for presets, `n` otherwise.
    pub fn sizes(&self) -> Vec<usize> {
        if self.preset.is_some() {
            self.ns.clone()
        } else {
            vec![self.n]
        }
    }

    /// Parameters at size `n` (ignored without a preset).
    pub fn params_at(&self, n: usize) -> Result<ModelParams> {
        match self.regime()? {
            Some(r) => Ok(r.params(n)?),
            None => Ok(ModelParams::new(self.n, self.beta, self.a, self.b)?),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        self.params_at(self.n)
    }

    pub fn initial(&self, n: usize) -> Result<InitialCondition> {
        Ok(initial_condition(&self.x0, n)?)
    }

    pub fn step_control(&self, p: &ModelParams) -> StepControl {
        StepControl { dt: self.dt / p.lambda(), max_halvings: self.max_halvings, scheme: self.scheme }
    }

    /// Range checks that do not depend on the model.
    pub fn check(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::Config(m.into()));
        if self.points < 2 {
            return fail("points must be at least 2");
        }
        if !(self.t_start > 0.0) || self.t_end.is_some_and(|e| !(e > self.t_start)) {
            return fail("need 0 < t_start < t_end");
        }
        if !(self.dt > 0.0) {
            return fail("dt must be positive");
        }
        if self.m == 0 || self.reference_m == 0 || self.ot_atoms == 0 || self.replicates == 0 {
            return fail("m, reference_m, ot_atoms and replicates must be positive");
        }
        if self.order != 1 && self.order != 2 {
            return fail("order must be 1 or 2");
        }
        if !(self.epsilon > 0.0) || !(self.delta >= 0.0) {
            return fail("epsilon must be positive and delta non-negative");
        }
        if self.levels.iter().any(|l| !(*l > 0.0)) {
            return fail("levels must be positive");
        }
        if self.preset.is_some() && self.ns.is_empty() {
            return fail("a preset needs at least one size in ns");
        }
        Ok(())
    }

    /// Text of the config as written to disk, then overrides.
    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<(Self, Vec<String>)> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        let rest = cfg.apply_overrides(overrides)?;
        cfg.check()?;
        Ok((cfg, rest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn every_key_round_trips() {
        let mut c = Config::default();
        for (k, v) in [
            ("preset", "r_zero"),
            ("x0", "explicit:0.1,0.25,0.3333333333333333,0.9"),
            ("t_end", "7.5"),
            ("eta", "0.125"),
            ("levels", "0.25,0.5,1"),
            ("beta", "0.1"),
            ("scheme", "dj"),
            ("ot", "sliced"),
            ("fault", "drift_sign"),
            ("seed", "18446744073709551615"),
            ("svg", "false"),
            ("verify_ab", ""),
        ] {
            c.set(k, v).unwrap();
        }
        let text = c.to_text();
        assert_eq!(Config::parse(&text).unwrap(), c);
        assert_eq!(Config::parse(&text).unwrap().to_text(), text);
    }

    #[test]
    fn comments_and_errors() {
        let c = Config::parse("# header\nn = 8   # trailing\n\nbeta=2\n").unwrap();
        assert_eq!((c.n, c.beta), (8, 2.0));
        assert!(matches!(Config::parse("n = 8\nn = 4"), Err(HarnessError::Config(_))));
        assert!(matches!(Config::parse("nn = 8"), Err(HarnessError::Config(_))));
        assert!(matches!(Config::parse("n 8"), Err(HarnessError::Config(_))));
        assert!(matches!(Config::parse("x0 = lopsided"), Err(HarnessError::Config(_))));
    }

    #[test]
    fn overrides_win_and_pass_through_the_rest() {
        let mut c = Config::parse("n = 8\nseed = 3").unwrap();
        let rest =
            c.apply_overrides(&["--n=2".into(), "--out-format=x".into(), "--seed=9".into(), "file".into()]).unwrap();
        assert_eq!((c.n, c.seed), (2, Some(9)));
        assert_eq!(rest, vec!["--out-format=x".to_string(), "file".to_string()]);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(Config::default().seed().is_err());
    }
}
