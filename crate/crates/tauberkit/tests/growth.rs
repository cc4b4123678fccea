use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;
use tauberkit::growth::{
    associated_function, check_log_convex, inverse_monotone, log_convex_minorant, GrowthSequence, WeightFunction,
};
use tauberkit::rule::WeightRule;

/// `sup_n (n ln x - ln(n!)/α)` by exhaustive scan over `n ≤ limit`.
fn gevrey_brute_force(alpha: f64, x: f64, limit: usize) -> f64 {
    (0..=limit)
        .map(|n| n as f64 * x.ln() - ln_gamma(n as f64 + 1.0) / alpha)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn gevrey_matches_exhaustive_scan() {
    for alpha in [0.5, 1.0, 2.0, 3.0] {
        let seq = GrowthSequence::gevrey(alpha);
        for x in [2.0f64, 10.0, 75.0, 400.0] {
            let limit = (3.0 * x.powf(alpha)).ceil() as usize + 10;
            let m = associated_function(&seq, x).unwrap();
            let oracle = gevrey_brute_force(alpha, x, limit);
            assert!((m - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "α = {alpha}, x = {x}: {m} vs {oracle}");
        }
    }
}

#[test]
fn sequence_json_round_trip() {
    let seq: GrowthSequence = serde_json::from_str(
        r#"{"rule": {"kind": "values", "M": [1, 2, 8, 48]}, "max_index": 3}"#,
    )
    .unwrap();
    assert!((seq.ln_m(3).unwrap() - 48f64.ln()).abs() < 1e-12);
    let back: GrowthSequence = serde_json::from_str(&serde_json::to_string(&seq).unwrap()).unwrap();
    assert_eq!(back, seq);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn associated_function_is_convex_and_non_decreasing_in_log_x(
        alpha in 0.4f64..3.0,
        s in 0.5f64..5.0,
        h in 0.01f64..0.5,
    ) {
        let seq = GrowthSequence::gevrey(alpha);
        let m = |s: f64| associated_function(&seq, s.exp()).unwrap();
        let (a, b, c) = (m(s - h), m(s), m(s + h));
        let tol = 1e-9 * c.abs().max(1.0);
        prop_assert!(a <= b + tol && b <= c + tol);
        prop_assert!(2.0 * b <= a + c + tol);
    }

    #[test]
    fn minorant_keeps_the_associated_function(values in prop::collection::vec(0.0f64..6.0, 3..12), x in 1.0f64..50.0) {
        // Increments are cumulative so that the table grows fast enough for the supremum to settle.
        let mut ln = 0.0;
        let ms: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(n, v)| {
                ln += v + 4.0 * n as f64;
                ln.exp()
            })
            .collect();
        let mut table = vec![1.0];
        table.extend(ms);
        let seq = GrowthSequence::from_values(table);
        let minorant = log_convex_minorant(&seq);
        let upto = seq.tabulate(usize::MAX).len() - 1;
        prop_assert!(check_log_convex(&minorant, upto));
        for n in 0..=upto {
            prop_assert!(minorant.ln_m(n).unwrap() <= seq.ln_m(n).unwrap() + 1e-12);
        }
        if let (Ok(a), Ok(b)) = (associated_function(&seq, x), associated_function(&minorant, x)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn inverse_round_trips(exp in 0.2f64..4.0, y in 0.01f64..1e6) {
        let v = WeightFunction::non_decreasing(WeightRule::power(exp));
        let t = inverse_monotone(&v, y).unwrap();
        prop_assert!((v.eval(t) / y - 1.0).abs() < 1e-9);
    }
}
