use dyson_jacobi::analysis::{cd_verify, flat_point};
use dyson_jacobi::equilibrium::{moment_report, sample_gibbs, McmcControl};
use dyson_jacobi::ModelParams;

#[test]
fn integration_by_parts_identity_at_one_particle() {
    let p = ModelParams::new(1, 1.0, 8.0, 8.0).unwrap();
    let s = sample_gibbs(&p, 20_000, 3, &McmcControl::default()).unwrap();
    let r = moment_report(&p, &s);
    // Beta(8, 8): lambda Var = E[x(1-x)] = 4/17
    let exact = 4.0 / 17.0;
    assert!((r.lambda_var_sum.value - exact).abs() <= 3.0 * r.lambda_var_sum.se, "{:?}", r.lambda_var_sum);
    assert!((r.mean_gamma.value - exact).abs() <= 3.0 * r.mean_gamma.se, "{:?}", r.mean_gamma);
    assert!(r.identity_gap.value.abs() <= 3.0 * r.identity_gap.se, "{:?}", r.identity_gap);
}

#[test]
fn integration_by_parts_identity_with_interaction() {
    for (beta, a, b) in [(1.0, 8.0, 8.0), (2.0, 16.0, 8.0)] {
        let p = ModelParams::new(4, beta, a, b).unwrap();
        let s = sample_gibbs(&p, 10_000, 4, &McmcControl::default()).unwrap();
        let r = moment_report(&p, &s);
        assert!((r.mean_sum.value - r.target_mean_sum).abs() <= 3.0 * r.mean_sum.se, "{:?}", r.mean_sum);
        assert!(r.identity_gap.value.abs() <= 3.0 * r.identity_gap.se, "beta {beta}: {:?}", r.identity_gap);
    }
}

#[test]
fn curvature_bound_holds_on_equilibrium_points() {
    let p = ModelParams::new(8, 1.0, 16.0, 16.0).unwrap();
    let s = sample_gibbs(&p, 2000, 5, &McmcControl::default()).unwrap();
    let pts: Vec<Vec<f64>> = s.iter().map(flat_point).collect();
    let r = cd_verify(&p, &pts, 50).unwrap();
    assert!(r.holds(1e-8), "min margin {}", r.min_margin);
    assert!(r.fd_max_residual <= 1e-5, "{}", r.fd_max_residual);
    assert!(r.min_margin >= 0.0);
}
