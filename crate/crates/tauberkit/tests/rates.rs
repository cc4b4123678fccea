use proptest::prelude::*;
use std::f64::consts::{E, SQRT_2};
use tauberkit::growth::{associated_function, inverse_monotone, CompositeWeight, GrowthSequence};
use tauberkit::numerics::{fit_line, geomspace, linspace};
use tauberkit::rates::*;
use tauberkit::rule::{CompositeKind, WeightRule};
use tauberkit::Error;

fn log_e() -> WeightRule {
    WeightRule::Log { shift: E, exp: 1.0 }
}

fn one_over_1pt() -> WeightRule {
    WeightRule::Power { exp: -1.0, shift: 1.0, scale: 1.0 }
}

/// `ln(E + f/λ^m)` evaluated directly from the class.
fn objective(cls: &BoundaryClass, f: f64, x: f64, m: u32, lambda: f64) -> f64 {
    let e = error_term(cls, x, lambda).unwrap();
    e + f / lambda.powi(m as i32)
}

#[test]
fn dif_constant_weight_optimum_sits_at_x_over_root_two() {
    let cls = BoundaryClass::dif(2, WeightRule::constant(1.0), None);
    for x in [1e2, 1e3, 1e4] {
        let r = optimize_rate(&cls, 1.0, x, 1).unwrap();
        let expect = x / SQRT_2;
        assert!((r.lambda_star / expect - 1.0).abs() < 1e-3, "{x}: {}", r.lambda_star);
        let closed = (1.0 + 2.0 * expect) / (x * x) + 1.0 / expect;
        assert!((r.bound / closed - 1.0).abs() < 1e-6);
        assert!(!r.flat);
    }
    let xs = geomspace(1e3, 1e6, 10);
    let rs = optimize_on_grid(&cls, 1.0, &xs, 1).unwrap();
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let lb: Vec<f64> = rs.iter().map(|r| r.ln_bound).collect();
    assert!((fit_line(&lx, &lb).slope + 1.0).abs() < 0.02);
}

#[test]
fn zero_penalty_pushes_lambda_to_the_top() {
    let cls = BoundaryClass::dif(2, WeightRule::constant(0.0), None);
    let r = optimize_rate_with(&cls, 0.0, 10.0, 1, 30.0).unwrap();
    assert!((r.ln_lambda_star - 30.0).abs() < 1e-12);
    assert!((r.bound - 0.01).abs() < 1e-15);
    assert!(!r.flat);
}

#[test]
fn analytic_constant_weight_decays_like_exp_minus_x() {
    let cls = BoundaryClass::an(WeightRule::constant(1.0), one_over_1pt());
    let xs = linspace(50.0, 200.0, 16);
    let rs = optimize_on_grid(&cls, 1.0, &xs, 1).unwrap();
    let lb: Vec<f64> = rs.iter().map(|r| r.ln_bound).collect();
    let slope = fit_line(&xs, &lb).slope;
    assert!((slope + 1.0).abs() < 0.02, "{slope}");
}

#[test]
fn subanalytic_limit_matches_associated_function() {
    let mn = GrowthSequence::power_n(1.0);
    let cls = BoundaryClass::sa(mn.clone(), 1.0, WeightRule::constant(1.0), WeightRule::constant(1.0));
    let engine = RateEngine::new(&cls, 40.0).unwrap();
    for x in geomspace(10.0, 1e5, 12) {
        let ln_e = engine.ln_error_term(x, 1e15f64.ln()).unwrap();
        let m = associated_function(&mn, x).unwrap();
        assert!((ln_e + m).abs() < 1e-9 * m.max(1.0), "{x}: {ln_e} {m}");
        assert!((m - x / E).abs() <= 1.0 + x.ln(), "{x}: {m}");
    }
}

#[test]
fn error_terms_do_not_increase_in_x() {
    let classes = vec![
        BoundaryClass::dif(2, WeightRule::power(1.0), None),
        BoundaryClass::hc(1, WeightRule::constant(1.0), None, WeightRule::power(0.5), 1.0),
        BoundaryClass::sa(GrowthSequence::power_n(1.0), 1.0, WeightRule::constant(1.0), WeightRule::constant(1.0)),
        BoundaryClass::an(WeightRule::constant(1.0), WeightRule::constant(1.0)),
    ];
    for cls in &classes {
        for lambda in [3.0, 50.0, 1e4] {
            let vals: Vec<f64> = geomspace(10.0, 1e4, 30).iter().map(|x| error_term(cls, *x, lambda).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{:?} λ={lambda}", cls.tag);
        }
    }
}

#[test]
fn saa_optimization_agrees_with_subanalytic_class() {
    let mn = GrowthSequence::power_n(1.0);
    let g = WeightRule::constant(1.0);
    let h = WeightRule::power(1.0);
    let saa = SaaClass::geometric(mn.clone(), 1.0, 124.0, 1.0, &g, &h, 200);
    let sa = BoundaryClass::sa(mn, 1.0, g, h);
    for x in [50.0, 150.0, 400.0] {
        let a = optimize_saa(&saa, 1.0, x, 1, 60.0).unwrap();
        let b = optimize_rate_with(&sa, 1.0, x, 1, 60.0).unwrap();
        assert!((a.ln_bound - b.ln_bound).abs() < 1e-6 * b.ln_bound.abs().max(1.0), "{x}: {} {}", a.ln_bound, b.ln_bound);
    }
}

#[test]
fn non_monotone_weight_is_rejected_for_the_analytic_class() {
    let g = WeightRule::power(-1.0);
    let cls = BoundaryClass::an(g, WeightRule::constant(1.0));
    assert!(matches!(optimize_rate(&cls, 1.0, 100.0, 1), Err(Error::InvalidInput(_))));
}

#[test]
fn rate_csv_has_the_documented_header() {
    let cls = BoundaryClass::dif(1, WeightRule::constant(1.0), None);
    let rs = optimize_on_grid(&cls, 1.0, &[10.0, 100.0], 1).unwrap();
    let mut buf = Vec::new();
    write_rate_csv(&mut buf, &rs).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x,lambda_star,E,penalty,bound,"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn class_json_round_trip() {
    let cls = BoundaryClass::sa(
        GrowthSequence::power_n(1.0),
        2.0,
        WeightRule::constant(1.0),
        WeightRule::Integral { rule: Box::new(WeightRule::constant(1.0)), symmetric: true },
    );
    let text = serde_json::to_string(&cls).unwrap();
    let back: BoundaryClass = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cls);
    assert!((back.kappa().unwrap() - 124.0).abs() < 1e-12);
}

#[test]
fn constant_pair_rate_solves_log_plus_log_log() {
    let one = WeightRule::constant(1.0);
    let r = theorem_1_4_rate(&one, &one, 1.0, 100.0).unwrap();
    let t = 1.0 / r.rate;
    assert!((t.ln() + t.ln().ln() - 100.0).abs() < 1e-8);
    assert!(r.rate_c1.is_some());
    assert!(matches!(theorem_1_4_rate(&one, &one, 1.0, 0.5), Err(Error::OutOfRange { .. })));
}

#[test]
fn log_pair_takes_the_log_beta_branch() {
    let m = log_e();
    let pair = RatePair::new(&m, &m);
    assert!(!pair.positive_increase);
    assert!(pair.log_beta.is_some());
    let t0 = pair.regular_growth_from.unwrap();
    assert!(t0 > 100.0 && t0 < 1000.0, "{t0}");
    let r = pair.rate(1.0, 1e3).unwrap();
    let t = 1.0 / r.rate_mk.unwrap();
    let mk = t.ln().max(0.0) + (t + E).ln().ln();
    assert!(((t + E).ln() * mk - 1e3).abs() < 1e-6);
    let direct = inverse_monotone(&pair.mk, 1e3).unwrap();
    assert!((direct * r.rate_mk.unwrap() - 1.0).abs() < 1e-12);
    for x in [1e2, 1e3, 1e4] {
        let lb = log_beta_rate(&m, &m, pair.log_beta.unwrap(), x).unwrap();
        let mk_rate = pair.rate(1.0, x).unwrap().rate_mk.unwrap();
        assert!(lb.bound <= 10.0 * mk_rate, "{x}: {} {mk_rate}", lb.bound);
    }
}

#[test]
fn wiener_ikehara_envelope() {
    let one = WeightRule::constant(1.0);
    let env = wiener_ikehara_rate(&one, &one, 1.0, 0.9, 50.0).unwrap();
    let w = CompositeWeight::new(one.clone(), one.clone(), CompositeKind::MkLog).weight();
    let expect = 50f64.exp() / inverse_monotone(&w, 45.0).unwrap();
    assert!((env / expect - 1.0).abs() < 1e-10);
    let ratios: Vec<f64> = linspace(5.0, 60.0, 23)
        .iter()
        .map(|x| wiener_ikehara_rate(&one, &one, 2.0, 0.9, *x).unwrap() / x.exp())
        .collect();
    assert!(ratios.windows(2).all(|p| p[1] <= p[0]));
    for x in [10.0, 30.0] {
        let weak = wiener_ikehara_rate(&one, &one, 1.0, 0.45, x).unwrap();
        let strong = wiener_ikehara_rate(&one, &one, 1.0, 0.9, x).unwrap();
        assert!(strong < weak);
    }
}

#[test]
fn table_regenerates_every_row() {
    let rows = table_rows();
    assert_eq!(rows.len(), 16);
    for row in &rows {
        let out = appendix_table(row).unwrap();
        assert!(out.pass, "row {}: fitted {} vs {}", row.id, out.fitted, row.reference);
        assert_eq!(out.flat_points, 0, "row {}", row.id);
    }
}

fn sample_class(k: usize) -> BoundaryClass {
    match k {
        0 => BoundaryClass::dif(2, WeightRule::power(1.0), None),
        1 => BoundaryClass::hc(1, one_over_1pt(), None, WeightRule::power(0.5), 1.0),
        2 => BoundaryClass::sa(GrowthSequence::power_n(1.0), 1.0, WeightRule::constant(1.0), WeightRule::constant(1.0)),
        _ => BoundaryClass::an(WeightRule::Log { shift: E, exp: 1.0 }, WeightRule::constant(1.0)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimum_is_a_local_minimum(k in 0usize..4, x in 10.0f64..400.0, f in 0.1f64..10.0) {
        let cls = sample_class(k);
        let r = optimize_rate(&cls, f, x, 1).unwrap();
        prop_assume!(!r.flat);
        let at = objective(&cls, f, x, 1, r.lambda_star);
        prop_assert!((at.ln() - r.ln_bound).abs() < 1e-9 * r.ln_bound.abs().max(1.0));
        for s in [1.0 / 1.05, 1.05] {
            let lam = r.lambda_star * s;
            if lam >= 1.0 {
                let other = objective(&cls, f, x, 1, lam);
                prop_assert!(other >= at * (1.0 - 1e-9), "{other} < {at}");
            }
        }
        let min_probe = r.min_probe();
        prop_assert!(r.ln_bound <= min_probe + 0.01f64.ln_1p());
    }

    #[test]
    fn bound_is_monotone_in_f(k in 0usize..4, x in 10.0f64..400.0, f in 0.1f64..10.0, s in 1.0f64..20.0) {
        let cls = sample_class(k);
        let a = optimize_rate(&cls, f, x, 1).unwrap();
        let b = optimize_rate(&cls, f * s, x, 1).unwrap();
        prop_assert!(b.ln_bound >= a.ln_bound - 1e-9 * a.ln_bound.abs().max(1.0));
        prop_assert!(b.ln_lambda_star >= a.ln_lambda_star - 1e-6);
        prop_assert!(b.penalty <= s * a.penalty * (1.0 + 1e-6));
    }
}
