//! End-to-end acceptance suite. Each criterion prints one `PASS`/`FAIL` line
//! to stdout (bypassing the test harness capture) and the test fails if any
//! criterion does.

use num_complex::Complex64;
use std::f64::consts::E;
use std::io::Write;
use std::time::{Duration, Instant};
use tauberkit::berry_esseen::{corpus, kernel_constants, verify_be};
use tauberkit::growth::{associated_function, check_regular_growth, GrowthSequence, WeightFunction};
use tauberkit::numerics::{geomspace, linspace};
use tauberkit::rates::{appendix_table, optimize_rate, table_rows, BoundaryClass, RatePair};
use tauberkit::rule::WeightRule;
use tauberkit::tauber::{fourier_pairing, sandwich_bounds, sandwich_bounds_m, HigherOrderData, RealFn, TauberianData};
use tauberkit::testfn::{build_even_phi, build_phi_n, verify_testfn};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn associated_functions() -> Outcome {
    let nn = GrowthSequence::power_n(1.0);
    let worst_nn = geomspace(10.0, 1e6, 200)
        .iter()
        .map(|x| (associated_function(&nn, *x).unwrap() - x / E).abs())
        .fold(0.0, f64::max);
    let gevrey = GrowthSequence::gevrey(2.0);
    let worst_gevrey = linspace(10.0, 1e3, 200)
        .iter()
        .map(|x| (associated_function(&gevrey, *x).unwrap() - (x * x / 2.0 - x.ln() / 2.0)).abs())
        .fold(0.0, f64::max);
    outcome(
        worst_nn <= 1.0 && worst_gevrey <= 2.0,
        format!("max |M - x/e| = {worst_nn:.4} (n^n), max |M - x^2/2 + log(x)/2| = {worst_gevrey:.4} (Gevrey 2)"),
    )
}

fn test_function_suite() -> Outcome {
    let mut pass = true;
    let mut constants = Vec::new();
    let mut higher = Vec::new();
    for n in [2, 4, 8, 16, 32] {
        let tf = build_phi_n(n, 0.5).unwrap();
        let report = verify_testfn(&tf);
        let mass = (tf.integral() - 1.0).abs();
        let oob = tf.out_of_band_mass(1.0);
        let peak = tf.phi_vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let sign = tf.min_moment_sign();
        let dc = tf.meta.derivative_constant.unwrap();
        pass &= report.all_passed() && mass <= 1e-6 && oob <= 1e-6 && sign >= -1e-9 * peak && dc.is_finite();
        constants.push(dc);
        let base = 124.0 * n as f64;
        let above_zero = tf.derivative_maxima(n, 1.0)[1..]
            .iter()
            .enumerate()
            .map(|(j, v)| v / base.powi(j as i32 + 1))
            .fold(0.0, f64::max);
        higher.push(above_zero);
    }
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(*c), b.max(*c)));
    pass &= hi <= 2.0 * lo;
    let higher: Vec<String> = higher.iter().map(|v| format!("{v:.2e}")).collect();
    outcome(
        pass,
        format!("derivative constants {constants:.4?} (spread x{:.3}); largest ratio over j >= 1: {higher:?}", hi / lo),
    )
}

fn sandwich_lemma() -> Outcome {
    let phi = build_phi_n(4, 0.5).unwrap();
    let data = TauberianData {
        s: RealFn::expr("sin(x)").unwrap(),
        x0: 0.0,
        big_f: RealFn::expr("x").unwrap(),
        f: RealFn::expr("1").unwrap(),
        alpha: 0.0,
    };
    let xs = linspace(5.0, 100.0, 100);
    let (mut violations, mut worst_q) = (0, 0.0f64);
    for lambda in [1.0, 2.0, 10.0] {
        for x in &xs {
            let sw = sandwich_bounds(&data, &phi, lambda, *x).unwrap();
            worst_q = worst_q.max(sw.qtol);
            violations += usize::from(!sw.contains(x.sin()));
        }
    }
    let even = build_even_phi(4, 0.5).unwrap();
    let data_m = HigherOrderData {
        s: RealFn::expr("cos(x)").unwrap(),
        x0: 0.0,
        big_f: RealFn::expr("x^2/2").unwrap(),
        f_m: RealFn::expr("1").unwrap(),
        alpha: 0.0,
        m: 2,
    };
    let mut violations_m = 0;
    for lambda in [1.0, 2.0, 10.0] {
        for x in &xs {
            match sandwich_bounds_m(&data_m, &even, lambda, *x) {
                Ok(sw) => worst_q = worst_q.max(sw.qtol),
                Err(_) => violations_m += 1,
            }
        }
    }
    outcome(
        violations == 0 && violations_m == 0 && worst_q <= 1e-6,
        format!("violations {violations} (m = 1), {violations_m} (m = 2) over 300 points each; max qtol {worst_q:.2e}"),
    )
}

fn fourier_pairing_cases() -> Outcome {
    let phi = build_phi_n(4, 0.5).unwrap();
    let decay = RealFn::expr("exp(-x)").unwrap();
    let g_decay = |t: f64| Complex64::new(1.0, 0.0) / Complex64::new(1.0, t);
    let unit = RealFn::expr("ind(x, 0, 1)").unwrap().with_breaks(vec![1.0]);
    let g_unit = |t: f64| {
        if t.abs() < 1e-12 {
            Complex64::new(1.0, 0.0)
        } else {
            (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -t)) / Complex64::new(0.0, t)
        }
    };
    let (mut ok, mut worst) = (0, 0.0f64);
    for lambda in [1.0, 2.0, 5.0, 20.0] {
        for x in [1.0, 3.0, 10.0] {
            for r in [fourier_pairing(&decay, g_decay, &phi, lambda, x), fourier_pairing(&unit, g_unit, &phi, lambda, x)] {
                if let Ok(p) = r {
                    let rel = (p.space - p.freq).abs() / (1.0 + p.space.abs());
                    worst = worst.max(rel);
                    ok += usize::from(rel <= 1e-6);
                }
            }
        }
    }
    outcome(ok == 24, format!("{ok}/24 cases agree; worst relative gap {worst:.2e}"))
}

fn berry_esseen_constants() -> Outcome {
    let k = kernel_constants();
    let mut pass = (k.max_hat - 1.22).abs() <= 0.01 && (k.first_moment - 8.19).abs() <= 0.01 && (k.l1 - 1.61).abs() <= 0.01;
    let pairs = corpus();
    let failures = pairs
        .iter()
        .filter(|p| verify_be(p, &[1.0, 5.0, 10.0], &p.default_grid()).is_err())
        .count();
    pass &= failures == 0 && pairs.len() == 20;
    outcome(
        pass,
        format!(
            "max|phi hat| = {:.5}, int y phi = {:.5}, int |phi| = {:.5}; {failures} violations over {} pairs",
            k.max_hat,
            k.first_moment,
            k.l1,
            pairs.len()
        ),
    )
}

fn decay_table() -> Outcome {
    let rows = table_rows();
    let mut failed = Vec::new();
    for row in &rows {
        match appendix_table(row) {
            Ok(o) if o.pass => {}
            Ok(o) => failed.push(format!("row {} fitted {:.4} vs {:.4}", o.id, o.fitted, o.reference)),
            Err(e) => failed.push(format!("row {}: {e}", row.id)),
        }
    }
    let tols_ok = rows.iter().all(|r| [0.02, 0.05, 0.1].contains(&r.tol));
    outcome(
        failed.is_empty() && tols_ok,
        format!("{} of {} rows within tolerance {failed:?}", rows.len() - failed.len(), rows.len()),
    )
}

fn theorem_rate_coherence() -> Outcome {
    let m = WeightRule::Log { shift: E, exp: 1.0 };
    let h = WeightRule::product(vec![m.clone(), WeightRule::Power { exp: -1.0, shift: 1.0, scale: 1.0 }]);
    let cls = BoundaryClass::an(m.clone(), h);
    let pair = RatePair::new(&m, &m);
    let mut worst = 0.0f64;
    let mut pass = true;
    for x in geomspace(1e2, 1e5, 13) {
        let bound = optimize_rate(&cls, 1.0, x, 1).unwrap().bound;
        match pair.rate(1.0, x).unwrap().rate_mk {
            Some(closed) => worst = worst.max(bound / closed),
            None => pass = false,
        }
    }
    let eta = WeightFunction::non_decreasing(WeightRule::product(vec![
        WeightRule::power(1.0),
        m.clone(),
        WeightRule::constant(1.0 / 675.0),
    ]));
    let regular = match pair.regular_growth_from {
        Some(t0) => check_regular_growth(&pair.mk_log, &eta, E, t0),
        None => false,
    };
    pass &= worst <= 50.0 && regular;
    outcome(
        pass,
        format!("max bound / closed form = {worst:.2}; regular growth from t = {:?}: {regular}", pair.regular_growth_from),
    )
}

#[test]
fn acceptance_criteria() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, u64); 7] = [
        ("associated function", associated_functions, 5),
        ("test function suite", test_function_suite, 60),
        ("sandwich lemma", sandwich_lemma, 30),
        ("Fourier pairing", fourier_pairing_cases, 10),
        ("Berry-Esseen constants and corpus", berry_esseen_constants, 20),
        ("decay-rate table", decay_table, 300),
        ("rate-pair coherence", theorem_rate_coherence, 30),
    ];
    let mut all = true;
    let mut out = std::io::stdout().lock();
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= Duration::from_secs(*budget);
        all &= pass;
        let verdict = if pass { "PASS" } else { "FAIL" };
        writeln!(
            out,
            "criterion {} [{verdict}] {name}: {} ({:.1}s of {budget}s)",
            k + 1,
            o.detail,
            elapsed.as_secs_f64()
        )
        .unwrap();
    }
    assert!(all, "at least one acceptance criterion failed");
}
