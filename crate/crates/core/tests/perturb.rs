mod common;

use tcl_elim::liouvillian::{vectorize, SplitLiouvillian};
use tcl_elim::models::*;
use tcl_elim::numerics::*;
use tcl_elim::perturb::*;
use tcl_elim::spectral::{analyze, SpectralData};
use tcl_elim::tcl::TclContext;
use tcl_elim::Error;

use common::{random_state, rng, simpson_weights};

fn three_level_sys(g: f64) -> SplitLiouvillian {
    three_level(&ThreeLevelParams::default().with_coupling(g)).unwrap()
}

fn setup(sys: &SplitLiouvillian) -> (SpectralData, EigenbasisOp, TclContext) {
    let spec0 = analyze(&sys.l0, None).unwrap();
    let ops = EigenbasisOp::new(&spec0, &sys.l1).unwrap();
    let ctx = TclContext::with_spectral(sys, spec0.clone()).unwrap();
    (spec0, ops, ctx)
}

/// Driven Rabi model at `omega_eg = 0`: `P L1 P != 0` while `lambda_s = 0`.
fn driven_rabi(g: f64) -> SplitLiouvillian {
    let p = RabiParams {
        omega_eg: 0.0,
        n_tr: 6,
        g,
        ..Default::default()
    };
    rabi_driven(&p, 1.0).unwrap()
}

#[test]
fn eigenbasis_round_trip() {
    let sys = three_level_sys(0.1);
    let (_, ops, _) = setup(&sys);
    assert!(roundtrip_error(&ops, &sys.l1) < 1e-12);
    assert!(max_abs_diff(&ops.from_super(&sys.l1), &ops.l1e) < 1e-12);
}

#[test]
fn projector_orders_map_surviving_into_fast() {
    let sys = three_level_sys(0.1);
    let (_, ops, ctx) = setup(&sys);
    let series = p_orders_asymptotic(&ops, 3).unwrap();
    let p = ctx.basis.projector();
    for term in &series.terms[1..] {
        assert!(frobenius(&p.dot(term)) < 1e-12);
        assert!(max_abs_diff(&term.dot(&p), term) < 1e-12);
    }
    assert!(max_abs_diff(&series.terms[0], &p) < 1e-12);
    assert!(p_orders_asymptotic(&ops, 4).is_err());
}

#[test]
fn asymptotic_orders_converge_at_expected_rates() {
    let eps = [0.02, 0.04, 0.08];
    for order in 1..=3 {
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| {
                let sys = three_level_sys(e);
                let (_, ops, ctx) = setup(&sys);
                let series = p_orders_asymptotic(&ops, 3).unwrap();
                (
                    e,
                    frobenius(&(ctx.p_inv_asymptotic() - series.sum(sys.eps, order))),
                )
            })
            .collect();
        let slope = loglog_slope(&pts).unwrap();
        assert!(
            (slope - (order + 1) as f64).abs() < 0.3,
            "order {order}: slope {slope}"
        );
    }
}

#[test]
fn first_order_rabi_projector_creates_one_photon() {
    let p = RabiParams::default().with_n_tr(5);
    let sys = rabi(&p).unwrap();
    let basis = rabi_reduced_basis(&p).unwrap();
    let spec0 = analyze(&sys.l0, None)
        .unwrap()
        .with_surviving_basis(&sys.l0, &basis.chi_r)
        .unwrap();
    let ops = EigenbasisOp::new(&spec0, &sys.l1).unwrap();
    let p1 = &p_orders_asymptotic(&ops, 1).unwrap().terms[1];
    let mut r = rng(31);
    let rho_b = random_state(&mut r, 2);
    let mut vac = zeros(p.n_tr, p.n_tr);
    vac[[0, 0]] = ONE;
    let mut up = zeros(p.n_tr, p.n_tr);
    up[[1, 0]] = ONE;
    let sg = sigma_gamma(&p, None);
    let term = kron(&up, &sg.dot(&rho_b)).mapv(|z| -I * p.g * z);
    let want = &term + &dagger(&term);
    let got = p1.dot(&vectorize(&kron(&vac, &rho_b))).mapv(|z| z * p.g);
    assert!(vec_norm(&(got - vectorize(&want))) < 1e-12);
}

/// `Sigma_2(t) P` from its double-integral definition by 2-D Simpson quadrature.
fn sigma2_quadrature(sys: &SplitLiouvillian, spec0: &SpectralData, t: f64, n: usize) -> CMatrix {
    let p = tcl_elim::spectral::projector_pinv(spec0);
    let q = identity(p.nrows()) - &p;
    let e = |tau: f64| spec0.eig.reconstruct(|z| (z * tau).exp());
    let l1 = &sys.l1;
    let qlp = q.dot(l1).dot(&p);
    let w1 = simpson_weights(n, t / n as f64);
    let mut acc = zeros(p.nrows(), p.ncols());
    for (i, wi) in w1.iter().enumerate() {
        let t1 = i as f64 * t / n as f64;
        if t1 == 0.0 {
            continue;
        }
        let w2 = simpson_weights(n, t1 / n as f64);
        for (k, wk) in w2.iter().enumerate() {
            let t2 = k as f64 * t1 / n as f64;
            let a = e(t1 - t2)
                .dot(&q)
                .dot(l1)
                .dot(&e(t2))
                .dot(&qlp)
                .dot(&e(-t1));
            let b = e(t1).dot(&qlp).dot(&e(-t2)).dot(l1).dot(&e(-(t1 - t2)));
            acc.scaled_add(c(wi * wk, 0.0), &(a - b));
        }
    }
    acc.dot(&p)
}

#[test]
fn time_dependent_orders_match_integral_definitions() {
    let sys = three_level_sys(0.1);
    let (spec0, ops, _) = setup(&sys);
    let t = 1.5;
    let series = p_orders_timedep(&ops, t, 2).unwrap();
    // First order: int_0^t exp(L0 tau) Q L1 P exp(-L0 tau) dtau.
    let p = tcl_elim::spectral::projector_pinv(&spec0);
    let q = identity(9) - &p;
    let n = 40;
    let w = simpson_weights(n, t / n as f64);
    let mut s1 = zeros(9, 9);
    for (k, wk) in w.iter().enumerate() {
        let tau = k as f64 * t / n as f64;
        let m = spec0
            .eig
            .reconstruct(|z| (z * tau).exp())
            .dot(&q)
            .dot(&sys.l1)
            .dot(&p)
            .dot(&spec0.eig.reconstruct(|z| (-z * tau).exp()));
        s1.scaled_add(c(*wk, 0.0), &m);
    }
    assert!(max_abs_diff(&series.terms[1], &s1) < 1e-7);
    let s2 = sigma2_quadrature(&sys, &spec0, t, 40);
    assert!(
        max_abs_diff(&series.terms[2], &s2) < 1e-6,
        "{}",
        max_abs_diff(&series.terms[2], &s2)
    );
    assert!(p_orders_timedep(&ops, t, 3).is_err());
}

#[test]
fn time_dependent_orders_expand_exact_projector() {
    let t = 2.0;
    for (order, want) in [(1usize, 2.0), (2, 3.0)] {
        let pts: Vec<(f64, f64)> = [0.02, 0.04, 0.08]
            .iter()
            .map(|&e| {
                let sys = three_level_sys(e);
                let (_, ops, ctx) = setup(&sys);
                let series = p_orders_timedep(&ops, t, 2).unwrap();
                (
                    e,
                    frobenius(&(ctx.p_inv_t(t).unwrap() - series.sum(e, order))),
                )
            })
            .collect();
        let slope = loglog_slope(&pts).unwrap();
        assert!((slope - want).abs() < 0.3, "order {order}: slope {slope}");
    }
    // Long times reproduce the asymptotic orders.
    let sys = three_level_sys(0.1);
    let (_, ops, _) = setup(&sys);
    let late = p_orders_timedep(&ops, 60.0, 2).unwrap();
    let asym = p_orders_asymptotic(&ops, 2).unwrap();
    for k in 1..=2 {
        assert!(max_abs_diff(&late.terms[k], &asym.terms[k]) < 1e-12);
    }
}

#[test]
fn geometric_recursion_reproduces_projector_orders() {
    let sys = driven_rabi(0.05);
    let (_, ops, ctx) = setup(&sys);
    let (ks, fs) = geometric_recursion(&ops, 3).unwrap();
    let series = p_orders_asymptotic(&ops, 3).unwrap();
    let scale = frobenius(&ctx.basis.chi_r);
    for (n, k) in ks.iter().enumerate().skip(1) {
        let from_p = series.terms[n].dot(&ctx.basis.chi_r);
        assert!(frobenius(&(k - &from_p)) < 1e-9 * scale, "order {n}");
    }
    assert!(max_abs_diff(&ks[0], &ctx.basis.chi_r) < 1e-12);
    assert_eq!(frobenius(&fs[0]), 0.0);
}

#[test]
fn geometric_recursion_converges_to_exact_maps() {
    let gs = [0.02, 0.04, 0.08];
    let mut k_pts = Vec::new();
    for &g in &gs {
        let sys = driven_rabi(g);
        let (_, ops, ctx) = setup(&sys);
        let (ks, fs) = geometric_recursion(&ops, 3).unwrap();
        let m = ctx.reduce();
        let mut k_sum = ks[0].clone();
        for (n, k) in ks.iter().enumerate().skip(1) {
            k_sum.scaled_add(c(g.powi(n as i32), 0.0), k);
        }
        k_pts.push((g, frobenius(&(&m.k - &k_sum))));
        // Linear coupling of a static qubit to a damped mode is Gaussian, so
        // the generator series stops at second order.
        let f2 = &fs[0] + &fs[1].mapv(|z| z * g) + fs[2].mapv(|z| z * g * g);
        assert!(frobenius(&(&m.f - &f2)) < 1e-12, "g={g}");
        assert!(frobenius(&fs[3]) < 1e-12);
    }
    let sk = loglog_slope(&k_pts).unwrap();
    assert!(sk > 3.7, "K residual exponent {sk}");
}

#[test]
fn geometric_recursion_needs_zero_surviving_eigenvalues() {
    let sys = three_level_sys(0.1);
    let (_, ops, _) = setup(&sys);
    assert!(matches!(
        geometric_recursion(&ops, 2),
        Err(Error::NonzeroSurvivingEigenvalue { .. })
    ));
}

#[test]
fn laplace_generator_limits_and_scaling() {
    let sys = three_level_sys(0.1);
    let (spec0, ops, _) = setup(&sys);
    let free = laplace_generator(&ops, 0.0, true).unwrap();
    let want = diag(&ndarray::Array1::from(spec0.surviving_values()));
    assert!(max_abs_diff(&free, &want) < 1e-12);
    // With P L1 P != 0 and lambda_s = 0 the mismatch starts at fourth order.
    let pts: Vec<(f64, f64)> = [0.02, 0.04, 0.08]
        .iter()
        .map(|&g| {
            let sys = driven_rabi(g);
            (g, tcl_elim::experiments::laplace_difference(&sys).unwrap())
        })
        .collect();
    let slope = loglog_slope(&pts).unwrap();
    assert!((slope - 4.0).abs() < 0.3, "driven Rabi exponent {slope}");
    // Without M1 the second-order terms already disagree when lambda_s = 0.
    let m0_only = laplace_generator(&ops, sys.eps, false).unwrap();
    let with_m1 = laplace_generator(&ops, sys.eps, true).unwrap();
    assert!(frobenius(&(m0_only - with_m1)) > 0.0);
}
