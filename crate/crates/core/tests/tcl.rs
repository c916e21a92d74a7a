mod common;

use proptest::prelude::*;
use tcl_elim::liouvillian::vectorize;
use tcl_elim::models::*;
use tcl_elim::numerics::*;
use tcl_elim::spectral::analyze;
use tcl_elim::tcl::*;

fn three_level_ctx(g: f64) -> TclContext {
    let sys = three_level(&ThreeLevelParams::default().with_coupling(g)).unwrap();
    TclContext::new(&sys, None).unwrap()
}

/// `[I - Sigma(t)]^-1` from the projection-operator definition, by expm.
fn resolvent_oracle(ctx: &TclContext, t: f64) -> CMatrix {
    let n = ctx.super_dim();
    let q = ctx.q_inv();
    let qlq = q.dot(&ctx.l).dot(&q);
    let sigma = &q
        - &expm_pade(&qlq.mapv(|z| z * t))
            .unwrap()
            .dot(&q)
            .dot(&expm_pade(&ctx.l.mapv(|z| -z * t)).unwrap());
    inverse(&(identity(n) - sigma)).unwrap()
}

#[test]
fn projector_and_inhomogeneity_match_definitions() {
    let ctx = three_level_ctx(0.1);
    let q = ctx.q_inv();
    let p = ctx.basis.projector();
    let qlq = q.dot(&ctx.l).dot(&q);
    for t in [0.3, 1.0, 4.0] {
        let res = resolvent_oracle(&ctx, t);
        assert!(
            max_abs_diff(&ctx.p_inv_t(t).unwrap(), &res.dot(&p)) < 1e-10,
            "P at t={t}"
        );
        let j_def = res.dot(&expm_pade(&qlq.mapv(|z| z * t)).unwrap()).dot(&q);
        assert!(
            max_abs_diff(&ctx.j_inv_t(t).unwrap(), &j_def) < 1e-10,
            "J at t={t}"
        );
        let sigma = ctx.sigma_inv(t).unwrap();
        assert!(max_abs_diff(&inverse(&(identity(9) - sigma)).unwrap(), &res) < 1e-10);
    }
}

#[test]
fn projector_converges_to_asymptotic_limit() {
    let ctx = three_level_ctx(0.1);
    let p_inf = ctx.p_inv_asymptotic();
    let d1 = frobenius(&(ctx.p_inv_t(10.0).unwrap() - &p_inf));
    let d2 = frobenius(&(ctx.p_inv_t(20.0).unwrap() - &p_inf));
    assert!(d2 < 1e-7 && d2 < d1);
    let f_t = ctx.f_tcl_t(40.0).unwrap();
    assert!(max_abs_diff(&f_t, &ctx.reduce().f) < 1e-12);
    // F(t) = chi_L^dag L P(t) chi_R.
    let t = 1.7;
    let want = ctx
        .basis
        .chi_l_dag
        .dot(&ctx.l)
        .dot(&ctx.p_inv_t(t).unwrap())
        .dot(&ctx.basis.chi_r);
    assert!(max_abs_diff(&ctx.f_tcl_t(t).unwrap(), &want) < 1e-12);
}

#[test]
fn norm_series_matches_dense_norms() {
    let ctx = three_level_ctx(0.1);
    let ts = [0.0, 0.5, 2.0, 6.0];
    let rho0 = vectorize(&tcl_elim::liouvillian::matrix_unit(3, 2, 2));
    let s = ctx.norm_series(&ts, Some(&rho0)).unwrap();
    let p_inf = ctx.p_inv_asymptotic();
    for sample in &s {
        let t = sample.t;
        let pt = ctx.p_inv_t(t).unwrap();
        assert!((sample.dp - frobenius(&(&pt - &p_inf))).abs() < 1e-11);
        assert!((sample.j - frobenius(&ctx.j_inv_t(t).unwrap())).abs() < 1e-10);
        let rho_t = expm(&ctx.l, t).dot(&rho0);
        let sd = vec_norm(&(&pt - &p_inf).dot(&rho_t));
        assert!((sample.state_dp.unwrap() - sd).abs() < 1e-11);
    }
}

#[test]
fn zero_coupling_projector_is_static() {
    let ctx = three_level_ctx(0.0);
    let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
    for s in ctx.norm_series(&ts, None).unwrap() {
        assert!(s.dp < 1e-12);
    }
}

#[test]
fn backends_agree_on_rabi() {
    let p = RabiParams::default().with_n_tr(5);
    let sys = rabi(&p).unwrap();
    let basis = rabi_reduced_basis(&p).unwrap();
    let spec0 = analyze(&sys.l0, None)
        .unwrap()
        .with_surviving_basis(&sys.l0, &basis.chi_r)
        .unwrap();
    let spectral = TclContext::with_spectral(&sys, spec0).unwrap();
    let prop = TclContext::propagator(&sys, basis, rabi_gap(&p).unwrap()).unwrap();
    assert!(spectral.spectral_parts().is_some() && prop.spectral_parts().is_none());
    assert!(max_abs_diff(&spectral.k, &prop.k) < 1e-10);
    assert!(max_abs_diff(&spectral.reduce().f, &prop.reduce().f) < 1e-10);
    assert!(max_abs_diff(&spectral.p_inv_t(3.0).unwrap(), &prop.p_inv_t(3.0).unwrap()) < 1e-10);
    let ts: Vec<f64> = (0..=12).map(|k| k as f64 * 0.5).collect();
    let rho0 = vectorize(&tcl_elim::liouvillian::matrix_unit(p.dim(), 1, 1));
    let a = spectral.norm_series(&ts, Some(&rho0)).unwrap();
    let b = prop.norm_series(&ts, Some(&rho0)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.dp - y.dp).abs() < 1e-9 * (1.0 + x.dp));
        assert!((x.j - y.j).abs() < 1e-8 * (1.0 + x.j));
        assert!((x.state_dp.unwrap() - y.state_dp.unwrap()).abs() < 1e-10);
    }
    let uneven = [0.0, 0.5, 1.5];
    assert!(prop.norm_series(&uneven, None).is_err());
}

#[test]
fn reduced_evolution_matches_exponential() {
    let ctx = three_level_ctx(0.1);
    let f = ctx.reduce().f;
    let x0 = ndarray::Array1::from(vec![c(0.3, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.7, 0.0)]);
    let grid = [0.0, 1.0, 2.5];
    let xs = evolve_reduced(ReducedGenerator::Constant(&f), &x0, &grid, 1e-3);
    for (x, &t) in xs.iter().zip(&grid) {
        assert!(vec_norm(&(x - &expm(&f, t).dot(&x0))) < 1e-12);
    }
    let g = |_t: f64| f.clone();
    let ys = evolve_reduced(ReducedGenerator::TimeDependent(&g), &x0, &grid, 1e-3);
    assert!(vec_norm(&(&ys[2] - &xs[2])) < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_reduction_identities(
        w1 in 0.2f64..0.8, we in 0.9f64..2.0, g0r in 0.3f64..0.7, g1r in 0.3f64..0.7,
        c0 in 0.0f64..0.15, c1 in 0.0f64..0.15,
    ) {
        let p = ThreeLevelParams { omega1: w1, omega_e: we, gamma0: g0r, gamma1: g1r, g0: c0, g1: c1 };
        let sys = three_level(&p).unwrap();
        let ctx = TclContext::new(&sys, None).unwrap();
        let m = ctx.reduce();
        let scale = frobenius(&ctx.l);
        prop_assert!(m.invariance_residual(&ctx.l) < 1e-8);
        prop_assert!(m.gauge_residual(&ctx.basis) < 1e-8);
        prop_assert!(ctx.prop2_residual() < 1e-9 * scale);
        // P^(eps) is a projector whose range is L-invariant.
        let pe = ctx.p_inv_asymptotic();
        prop_assert!(max_abs_diff(&pe.dot(&pe), &pe) < 1e-9);
        let lp = ctx.l.dot(&pe);
        prop_assert!(max_abs_diff(&pe.dot(&lp), &lp) < 1e-9 * scale);
    }
}
