use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use tauberkit::berry_esseen::*;
use tauberkit::numerics::linspace;
use tauberkit::Error;

fn std_normal() -> Distribution {
    Distribution::Normal { mean: 0.0, sd: 1.0 }
}

fn binomial_pair() -> DistributionPair {
    DistributionPair::new(Distribution::Binomial { n: 50, p: 0.3, standardized: true }, std_normal())
}

fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

#[test]
fn identical_laws_have_zero_distance() {
    let pair = DistributionPair::new(std_normal(), std_normal());
    let grid = pair.default_grid();
    assert_eq!(sup_diff(&pair, &grid), 0.0);
    let report = verify_be(&pair, &[1.0, 5.0], &grid).unwrap();
    for row in &report.rows {
        assert_eq!(row.integral, 0.0);
        assert!((row.margin - 10.0 * row.modulus).abs() < 1e-15);
    }
}

#[test]
fn separated_point_masses_are_at_distance_one() {
    let pair = DistributionPair::new(Distribution::PointMass { at: 0.0 }, Distribution::PointMass { at: 1.0 });
    let grid = linspace(-3.0, 3.0, 601);
    assert!((sup_diff(&pair, &grid) - 1.0).abs() < 1e-15);
    assert!(modulus_term(&pair, 10.0, &grid).unwrap() >= 1.0);
    assert!(verify_be(&pair, &[0.5, 2.0], &grid).is_ok());
}

#[test]
fn binomial_distance_is_stable_under_grid_refinement() {
    let pair = binomial_pair();
    let coarse = linspace(-8.0, 8.0, 2001);
    let fine = linspace(-8.0, 8.0, 20001);
    let a = sup_diff(&pair, &coarse);
    let b = sup_diff(&pair, &fine);
    assert!((a - b).abs() < 1e-6, "{a} {b}");
    assert!(a > 0.01 && a < 0.1);
}

#[test]
fn normal_modulus_at_t_ten() {
    let pair = binomial_pair();
    let grid = pair.default_grid();
    let m = modulus_term(&pair, 10.0, &grid).unwrap();
    let expect = 2.0 * phi(0.05) - 1.0;
    assert!((m - expect).abs() < 1e-4, "{m} {expect}");
    assert!((expect - 0.0399).abs() < 1e-4);
    assert!(modulus_term(&pair, 1e6, &grid).unwrap() < 1e-6);
}

#[test]
fn atoms_bound_the_modulus_from_below() {
    let pair = DistributionPair::new(std_normal(), Distribution::Binomial { n: 10, p: 0.5, standardized: false });
    let grid = linspace(-5.0, 15.0, 2001);
    let atom = 252.0 / 1024.0;
    for t in [0.5, 10.0, 1e4] {
        assert!(modulus_term(&pair, t, &grid).unwrap() >= atom - 1e-12);
    }
}

#[test]
fn binomial_rhs_dominates_and_moves_monotonically_in_t() {
    let pair = binomial_pair();
    let grid = pair.default_grid();
    let lhs = sup_diff(&pair, &grid);
    let r5 = be_rhs(&pair, 5.0, &grid).unwrap();
    assert!(r5.is_finite() && r5 >= lhs);
    let (m5, m10) = (modulus_term(&pair, 5.0, &grid).unwrap(), modulus_term(&pair, 10.0, &grid).unwrap());
    let (i5, i10) = (cf_integral(&pair, 5.0).unwrap(), cf_integral(&pair, 10.0).unwrap());
    assert!(m10 <= m5 && i10 >= i5);
    let report = verify_be(&pair, &[1.0, 5.0, 10.0], &grid).unwrap();
    assert!(report.rows.iter().all(|r| r.margin >= 0.0));
}

#[test]
fn poisson_against_matching_normal() {
    let pair = DistributionPair::new(
        Distribution::Poisson { lambda: 4.0, standardized: false },
        Distribution::Normal { mean: 4.0, sd: 2.0 },
    );
    let grid = pair.default_grid();
    assert!(verify_be(&pair, &[0.5, 1.0, 3.0, 10.0], &grid).is_ok());
}

#[test]
fn mean_shift_keeps_the_integrand_bounded() {
    let pair = DistributionPair::new(Distribution::Normal { mean: 0.5, sd: 1.0 }, std_normal());
    let v = cf_integral(&pair, 1e-3).unwrap();
    assert!((v - 2e-3 * 0.5).abs() < 1e-8, "{v}");
}

#[test]
fn law_without_mean_is_singular_at_zero() {
    let pair = DistributionPair::new(Distribution::Levy { c: 1.0 }, std_normal());
    assert!(matches!(cf_integral(&pair, 1.0), Err(Error::SingularAtZero(_))));
    assert!(matches!(be_rhs(&pair, 1.0, &pair.default_grid()), Err(Error::SingularAtZero(_))));
}

#[test]
fn whole_corpus_satisfies_both_forms() {
    let pairs = corpus();
    assert_eq!(pairs.len(), 20);
    for pair in &pairs {
        let grid = pair.default_grid();
        let report = verify_be(pair, &[0.5, 1.0, 2.0, 5.0, 10.0, 20.0], &grid).unwrap();
        for row in &report.rows {
            assert!(row.kernel_rhs >= row.sup_diff, "{}", pair.label);
        }
    }
}

#[test]
fn kernel_constants_fit_inside_ten_and_one_fifth() {
    let k = kernel_constants();
    assert!((k.max_hat - 1.22).abs() < 0.005, "{}", k.max_hat);
    assert!((k.first_moment - 8.19).abs() < 0.005, "{}", k.first_moment);
    assert!((k.l1 - 1.61).abs() < 0.005, "{}", k.l1);
    assert!(k.first_moment + k.l1 <= 10.0);
    assert!(k.max_hat / (2.0 * std::f64::consts::PI) <= 0.2);
    // ∫ yφ(y) dy = 4(π/2 + b²·2π/3) with b = 3/(2π).
    let b = 3.0 / (2.0 * std::f64::consts::PI);
    let exact = 4.0 * (std::f64::consts::FRAC_PI_2 + b * b * 2.0 * std::f64::consts::PI / 3.0);
    assert!((k.first_moment - exact).abs() < 1e-3, "{} {exact}", k.first_moment);
}

#[test]
fn pair_json_round_trip() {
    let text = r#"{"F":{"kind":"binomial","n":50,"p":0.3,"standardized":true}, "G":{"kind":"normal"}}"#;
    let pair: DistributionPair = serde_json::from_str(text).unwrap();
    assert_eq!(pair.f, Distribution::Binomial { n: 50, p: 0.3, standardized: true });
    assert_eq!(pair.g, std_normal());
}

#[test]
fn rhs_is_continuous_in_t() {
    let pair = binomial_pair();
    let grid = pair.default_grid();
    let ts = linspace(1.0, 3.0, 401);
    let vals: Vec<f64> = ts.iter().map(|t| be_rhs(&pair, *t, &grid).unwrap()).collect();
    for w in vals.windows(2) {
        assert!((w[1] - w[0]).abs() < 0.05, "{w:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn random_binomials_never_violate(n in 1u64..300, p in 0.02f64..0.98, t in 0.2f64..30.0) {
        let pair = DistributionPair::new(Distribution::Binomial { n, p, standardized: true }, std_normal());
        let grid = linspace(-15.0, 15.0, 3001);
        prop_assert!(verify_be(&pair, &[t], &grid).is_ok());
    }

    #[test]
    fn shifted_normals_never_violate(mu in -2.0f64..2.0, sd in 0.3f64..3.0, t in 0.2f64..30.0) {
        let pair = DistributionPair::new(Distribution::Normal { mean: mu, sd }, std_normal());
        let grid = linspace(-20.0, 20.0, 4001);
        prop_assert!(verify_be(&pair, &[t], &grid).is_ok());
    }
}
