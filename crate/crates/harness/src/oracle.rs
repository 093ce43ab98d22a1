//! Matrix-model comparison for `beta = 1`: the eigenvalues of the corner of
//! an orthogonal Brownian motion against the Gibbs sampler (late time) and
//! the SDE ensemble (transient), both on the statistic `phi`.

use dyson_jacobi::analysis::phi;
use dyson_jacobi::dynamics::simulate_ensemble;
use dyson_jacobi::equilibrium::{sample_gibbs, McmcControl};
use dyson_jacobi::matrix_oracle::{
    calibrate, corner_eigenvalues, rows_for, simulate_orthogonal_bm, Calibration, OracleControl, OracleDims,
};
use dyson_jacobi::{stats, ModelParams};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::Result;
use crate::experiment::Verdict;

/// Largest accepted two-sample KS distance on `phi`.
pub const KS_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub params: ModelParams,
    pub dims: OracleDims,
    pub x0: Vec<f64>,
    pub paths: usize,
    pub calibration: Calibration,
    /// `lambda t` of the late and transient comparisons.
    pub late_time: f64,
    pub transient_time: f64,
    pub stationary_ks: f64,
    pub transient_ks: f64,
    pub max_defect: f64,
    pub verdicts: Vec<Verdict>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

pub fn run(cfg: &Config, seed: u64) -> Result<OracleReport> {
    let p = cfg.params()?;
    let dims = OracleDims::for_params(&p)?;
    let n = p.n();
    let lambda = p.lambda();
    let x0 = cfg.initial(n)?.x0;
    let paths = cfg.oracle_paths;

    let cal = calibrate(&p, &OracleControl::default_for(&p), (paths / 4).max(500), seed)?;
    log::info!("oracle calibration: fitted rate {:.4} vs {lambda}, factor {:.4}", cal.fit, cal.factor);
    let control = cal.control;

    let (late, transient) = (6.0, 0.5);
    let grid = [transient / lambda, late / lambda];
    let u0 = rows_for(x0.as_slice(), dims)?;
    let path = simulate_orthogonal_bm(dims.m, &u0, &grid, paths, seed.wrapping_add(1), &control)?;
    let ev = corner_eigenvalues(&path, n, dims.p)?;
    let oracle_phi = |ti: usize| -> Vec<f64> { ev[ti].chunks(n).map(|x| phi(&p, x)).collect() };

    let gibbs =
        sample_gibbs(&p, paths, seed.wrapping_add(2), &McmcControl { chains: cfg.chains, ..McmcControl::default() })?;
    let gibbs_phi: Vec<f64> = gibbs.iter().map(|x| phi(&p, x)).collect();
    let stationary_ks = stats::ks_two_sample(&oracle_phi(1), &gibbs_phi);

    let ens = simulate_ensemble(&p, &x0, &[0.0, grid[0]], paths, seed.wrapping_add(3), &cfg.step_control(&p))?;
    let sde_phi = ens.statistic(1, |x| phi(&p, x));
    let transient_ks = stats::ks_two_sample(&oracle_phi(0), &sde_phi);

    let verdicts = vec![
        Verdict::new(
            "oracle_stationary_ks",
            stationary_ks <= KS_TOLERANCE,
            format!("KS {stationary_ks:.4} at lambda t = {late} against {paths} Gibbs states"),
        ),
        Verdict::new(
            "oracle_transient_ks",
            transient_ks <= KS_TOLERANCE,
            format!("KS {transient_ks:.4} at lambda t = {transient} against the SDE ensemble"),
        ),
        Verdict::new(
            "oracle_calibration",
            (cal.factor - 1.0).abs() <= 0.1,
            format!("pilot rate {:.4} +- {:.4} vs lambda = {lambda}", cal.fit, cal.fit_se),
        ),
    ];
    Ok(OracleReport {
        params: p,
        dims,
        x0: x0.as_slice().to_vec(),
        paths,
        calibration: cal,
        late_time: late,
        transient_time: transient,
        stationary_ks,
        transient_ks,
        max_defect: path.max_defect,
        verdicts,
    })
}
