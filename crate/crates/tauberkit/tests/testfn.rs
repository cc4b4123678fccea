use proptest::prelude::*;
use tauberkit::numerics::{gl_panels, linspace};
use tauberkit::testfn::{build_box_chain, build_even_phi, build_phi_n, verify_testfn, EPSILON};

/// CDF of the triangular density `max(0, w - |y|)/w²`.
fn triangle_cdf(y: f64, w: f64) -> f64 {
    if y <= -w {
        0.0
    } else if y <= 0.0 {
        (y + w) * (y + w) / (2.0 * w * w)
    } else if y <= w {
        1.0 - (w - y) * (w - y) / (2.0 * w * w)
    } else {
        1.0
    }
}

/// `u_2` in space: two boxes of half-width ε/4 give a triangle of half-width
/// ε/2, and the third box of half-width ε/2 averages it.
fn u2_density(x: f64, eps: f64) -> f64 {
    let (w, c) = (eps / 2.0, eps / 2.0);
    (triangle_cdf(x + c, w) - triangle_cdf(x - c, w)) / (2.0 * c)
}

#[test]
fn box_chain_two_matches_its_space_density() {
    let chain = build_box_chain(2, EPSILON).unwrap();
    assert_eq!(chain.widths, vec![EPSILON / 4.0, EPSILON / 4.0, EPSILON / 2.0]);
    let edges = linspace(-EPSILON, EPSILON, 65);
    let mass = gl_panels(|x| u2_density(x, EPSILON), &edges);
    assert!((mass - 1.0).abs() < 1e-13);
    for t in [0.0, 1.0, 17.0, 100.0, 480.0, 1500.0] {
        let direct = gl_panels(|x| u2_density(x, EPSILON) * (t * x).cos(), &edges);
        assert!((chain.hat(t) - direct).abs() < 1e-12, "t = {t}: {} vs {direct}", chain.hat(t));
    }
}

#[test]
fn spectral_derivative_respects_the_chain_bound() {
    let chain = build_box_chain(6, EPSILON).unwrap();
    for j in 1..5 {
        let sup = chain.derivative_sup(j, 40_000.0, 0.5).unwrap();
        assert!(sup <= chain.derivative_bound(j) * (1.0 + 1e-6), "j = {j}: {sup}");
        assert!(sup <= chain.product_bound(j) * (1.0 + 1e-3), "j = {j}: {sup}");
    }
}

#[test]
fn phi_n_properties_and_reflection() {
    let tf = build_phi_n(3, 0.5).unwrap();
    let report = verify_testfn(&tf);
    assert!(report.all_passed(), "{report:?}");
    let refl = tf.reflected();
    assert!((refl.integral() - 1.0).abs() < 1e-9);
    assert!(!verify_testfn(&refl).get("one_sided_sign").unwrap().passed);
}

#[test]
fn even_companion_is_nonnegative_and_even() {
    let tf = build_even_phi(4, 0.5).unwrap();
    let peak = tf.phi_vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(tf.phi_vals.iter().all(|v| *v >= -1e-12 * peak));
    assert!((tf.integral() - 1.0).abs() < 1e-9);
    for y in [0.5, 3.0, 40.0] {
        assert!((tf.eval(y) - tf.eval(-y)).abs() <= 1e-9 * peak);
    }
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(build_box_chain(0, EPSILON).is_err());
    assert!(build_box_chain(3, 0.0).is_err());
    assert!(build_phi_n(0, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_transform_is_even_and_bounded(n in 1usize..40, t in -5e4f64..5e4) {
        let chain = build_box_chain(n, EPSILON).unwrap();
        let h = chain.hat(t);
        prop_assert!(h.abs() <= 1.0);
        prop_assert_eq!(h, chain.hat(-t));
        prop_assert!((chain.support() - EPSILON).abs() < 1e-15 || n == 1);
        prop_assert!(h.abs().ln() <= chain.ln_envelope(t) + 1e-12);
    }
}
