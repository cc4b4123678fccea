//! Weight sequences, their structural predicates, associated functions,
//! composite weights and monotone inversion.

use crate::error::{Error, Result};
use crate::numerics::{bisect, fit_line, geometric_grid};
use crate::rule::{CompositeKind, SequenceRule, WeightRule};
use serde::{Deserialize, Serialize};

/// Ratio of the default geometric grids.
pub const GRID_RATIO: f64 = 1.02;
/// Point cap of the default geometric grids.
pub const GRID_POINTS: usize = 20_000;
/// Default tabulation cap for sequences given by a formula.
pub const DEFAULT_MAX_INDEX: usize = 1_000_000_000;

/// Cached structural facts about a sequence. `None` means "not known".
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceFlags {
    pub log_convex: Option<bool>,
    pub non_quasianalytic: Option<bool>,
    pub subanalytic: Option<bool>,
}

/// A positive sequence `M_n` handled through `ln M_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSequence {
    pub rule: SequenceRule,
    pub max_index: usize,
    #[serde(default)]
    pub flags: SequenceFlags,
    /// Subanalyticity witness: `M_n ≥ c_sa·L^n·n^n`.
    #[serde(rename = "L", default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub c_sa: Option<f64>,
}

impl GrowthSequence {
    pub fn new(rule: SequenceRule) -> Self {
        let max_index = rule
            .table_len()
            .map(|n| n.saturating_sub(1))
            .unwrap_or(DEFAULT_MAX_INDEX);
        GrowthSequence { rule, max_index, flags: SequenceFlags::default(), l: None, c_sa: None }
    }

    /// `M_n = (n!)^{1/α}`. Log-convex for every α > 0; subanalytic for α ≤ 1.
    pub fn gevrey(alpha: f64) -> Self {
        let mut s = Self::new(SequenceRule::Gevrey { alpha });
        s.flags.log_convex = Some(true);
        s.flags.non_quasianalytic = Some(alpha < 1.0);
        if alpha <= 1.0 {
            s.flags.subanalytic = Some(true);
            s.l = Some((-1.0f64).exp());
            s.c_sa = Some(1.0);
        }
        s
    }

    /// `M_n = n^{αn}`. Log-convex for α ≥ 0; subanalytic for α ≥ 1 with L = 1.
    pub fn power_n(alpha: f64) -> Self {
        let mut s = Self::new(SequenceRule::PowerN { alpha });
        s.flags.log_convex = Some(alpha >= 0.0);
        if alpha >= 1.0 {
            s.flags.subanalytic = Some(true);
            s.l = Some(1.0);
            s.c_sa = Some(1.0);
        }
        s.flags.non_quasianalytic = Some(alpha > 1.0);
        s
    }

    /// `M_n = (n log(n+1))^n`: quasianalytic and strictly subanalytic.
    pub fn n_log() -> Self {
        let mut s = Self::new(SequenceRule::NLog);
        s.flags.log_convex = Some(true);
        s.flags.non_quasianalytic = Some(false);
        s.flags.subanalytic = Some(true);
        s.l = Some(std::f64::consts::LN_2);
        s.c_sa = Some(1.0);
        s
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self::new(SequenceRule::Values { m: values })
    }

    /// `ln M_n` when `n` lies within the tabulation.
    pub fn ln_m(&self, n: usize) -> Option<f64> {
        if n > self.max_index {
            return None;
        }
        self.rule.ln_m(n)
    }

    /// `ln M_0, ..., ln M_upto` (clipped to the tabulation).
    pub fn tabulate(&self, upto: usize) -> Vec<f64> {
        (0..=upto.min(self.max_index)).map_while(|n| self.ln_m(n)).collect()
    }

    /// Checks `M_n ≥ c_sa·L^n·n^n` on `1 ≤ n ≤ upto` with the stored witnesses.
    pub fn check_subanalytic(&self, upto: usize) -> bool {
        let (Some(l), Some(c)) = (self.l, self.c_sa) else { return false };
        (1..=upto.min(self.max_index)).all(|n| {
            let nf = n as f64;
            match self.ln_m(n) {
                Some(v) => v >= c.ln() + nf * l.ln() + nf * nf.ln() - 1e-12 * (1.0 + v.abs()),
                None => true,
            }
        })
    }

    /// Check log-convexity, subanalyticity and non-quasianalyticity on the
    /// first `upto` terms and cache the answers.
    pub fn with_checked_flags(mut self, upto: usize) -> Self {
        self.flags.log_convex = Some(check_log_convex(&self, upto));
        if self.l.is_some() {
            self.flags.subanalytic = Some(self.check_subanalytic(upto));
        }
        self.flags.non_quasianalytic = check_non_quasianalytic(&self, 1e-3).ok();
        self
    }
}

/// `M(x) = sup_n log(x^n / M_n)`.
///
/// For sequences flagged log-convex the terms are concave in `n` and the
/// maximizer is located by bisection on the first differences of `ln M_n`.
/// Otherwise the terms are scanned until they fall `20` below the running
/// supremum.
pub fn associated_function(seq: &GrowthSequence, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::InvalidInput(format!("associated function needs x > 0, got {x}")));
    }
    let lx = x.ln();
    let lm0 = seq
        .ln_m(0)
        .ok_or_else(|| Error::InvalidInput("empty sequence".into()))?;
    let term = |n: usize, l: f64| n as f64 * lx - l;
    if seq.flags.log_convex == Some(true) {
        // Smallest n with ln M_{n+1} - ln M_n ≥ ln x: past it the terms decrease.
        let diff = |n: usize| -> Option<f64> { Some(seq.ln_m(n + 1)? - seq.ln_m(n)?) };
        let cap = seq.max_index;
        let rising = |n: usize| diff(n).map(|d| d < lx);
        let (mut lo, mut hi) = (0usize, 1usize);
        if rising(0) == Some(true) {
            loop {
                match rising(hi) {
                    Some(true) if hi < cap => {
                        lo = hi;
                        hi = (hi * 2).min(cap);
                    }
                    Some(false) => break,
                    _ => return Err(Error::NonConvergent { x, max_index: cap }),
                }
            }
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if rising(mid) == Some(true) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        } else {
            hi = 0;
        }
        let mut best = f64::NEG_INFINITY;
        for n in hi.saturating_sub(2)..=(hi + 2).min(cap) {
            if let Some(l) = seq.ln_m(n) {
                best = best.max(term(n, l));
            }
        }
        return Ok(best);
    }
    let mut sup = term(0, lm0);
    let mut last = sup;
    let mut n = 1;
    loop {
        let Some(l) = seq.ln_m(n) else {
            // End of a finite table: the supremum is exact unless it sits on the last entry.
            if last < sup {
                return Ok(sup);
            }
            return Err(Error::NonConvergent { x, max_index: seq.max_index });
        };
        let v = term(n, l);
        sup = sup.max(v);
        last = v;
        if v < sup - 20.0 {
            return Ok(sup);
        }
        if n >= seq.max_index {
            if v < sup && seq.rule.table_len().is_some() {
                return Ok(sup);
            }
            return Err(Error::NonConvergent { x, max_index: seq.max_index });
        }
        n += 1;
    }
}

/// `M_n² ≤ M_{n-1} M_{n+1}` for `1 ≤ n < upto`, compared in the log domain
/// with `1e-12` relative slack.
pub fn check_log_convex(seq: &GrowthSequence, upto: usize) -> bool {
    let v = seq.tabulate(upto);
    v.windows(3).all(|w| {
        let scale = 1.0f64.max(w[0].abs()).max(w[1].abs()).max(w[2].abs());
        2.0 * w[1] <= w[0] + w[2] + 1e-12 * scale
    })
}

/// Decide `Σ M_n/M_{n+1} < ∞` from a finite tabulation.
///
/// With `r_n = M_n/M_{n+1}` (non-increasing for log-convex input) the last
/// quarter of the tabulation is used twice:
/// * a power law `r_n ≈ C n^{-p}` is fitted; if `p > 1` and the extrapolated
///   tail `C N^{1-p}/(p-1)` is below `tail_tol`, the series converges;
/// * if `n·log n·r_n` does not decrease, the series dominates a multiple of
///   `Σ 1/(n log n)`, whose partial sums grow like `log log N`, and diverges.
///
/// Anything else is reported as [`Error::Inconclusive`].
pub fn check_non_quasianalytic(seq: &GrowthSequence, tail_tol: f64) -> Result<bool> {
    let n_max = seq.max_index.min(1 << 20);
    if n_max < 16 {
        return Err(Error::Inconclusive { max_index: n_max });
    }
    let start = (3 * n_max) / 4;
    let idx: Vec<usize> = {
        let mut v: Vec<usize> = geometric_grid(start as f64, 1.001, 400)
            .into_iter()
            .map(|t| t as usize)
            .filter(|&k| k >= start && k < n_max)
            .collect();
        v.dedup();
        v
    };
    let mut ln_r = Vec::new();
    let mut ln_n = Vec::new();
    for &k in &idx {
        let (Some(a), Some(b)) = (seq.ln_m(k), seq.ln_m(k + 1)) else {
            return Err(Error::Inconclusive { max_index: n_max });
        };
        ln_r.push(a - b);
        ln_n.push((k as f64).ln());
    }
    let fit = fit_line(&ln_n, &ln_r);
    let p = -fit.slope;
    if p > 1.0 + 1e-3 {
        let tail = (fit.intercept + (1.0 - p) * (n_max as f64).ln()).exp() / (p - 1.0);
        if tail < tail_tol {
            return Ok(true);
        }
    }
    let ln_z: Vec<f64> = ln_r
        .iter()
        .zip(&ln_n)
        .map(|(lr, ln)| lr + ln + ln.ln())
        .collect();
    let ln_ln_n: Vec<f64> = ln_n.iter().map(|v| v.ln()).collect();
    let zfit = fit_line(&ln_ln_n, &ln_z);
    if zfit.slope >= -0.05 {
        return Ok(false);
    }
    Err(Error::Inconclusive { max_index: n_max })
}

/// Largest log-convex minorant: the lower convex hull of the points
/// `(n, ln M_n)`, evaluated back at every index.
pub fn log_convex_minorant(seq: &GrowthSequence) -> GrowthSequence {
    let v = seq.tabulate(seq.max_index.min(10_000_000));
    let scale = v.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let tol = 4.0 * f64::EPSILON * scale;
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..v.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b when it lies strictly above the chord from a to i.
            let chord = v[a] + (v[i] - v[a]) * (b - a) as f64 / (i - a) as f64;
            if v[b] > chord + tol {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = v.clone();
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let interp = v[a] + (v[b] - v[a]) * (k - a) as f64 / (b - a) as f64;
            *slot = v[k].min(interp);
        }
    }
    let n = out.len();
    let mut res = GrowthSequence::new(SequenceRule::Table { n: (0..n).collect(), log_m: out });
    res.flags.log_convex = Some(true);
    res
}

/// Monotonicity declared for a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    NonDecreasing,
    NonIncreasing,
    None,
}

/// A scalar function on a half-line, with its declared monotonicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub rule: WeightRule,
    pub monotone: Monotone,
    #[serde(default)]
    pub domain_min: f64,
}

impl WeightFunction {
    pub fn new(rule: WeightRule, monotone: Monotone, domain_min: f64) -> Self {
        WeightFunction { rule, monotone, domain_min }
    }

    pub fn non_decreasing(rule: WeightRule) -> Self {
        Self::new(rule, Monotone::NonDecreasing, 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.rule.eval(t)
    }

    pub fn ln_eval(&self, u: f64) -> f64 {
        self.rule.ln_eval(u)
    }

    /// Checks the declared monotonicity on `grid` with `1e-12` relative slack.
    pub fn check_monotone(&self, grid: &[f64]) -> bool {
        let vals: Vec<f64> = grid.iter().map(|t| self.eval(*t)).collect();
        let ok = |a: f64, b: f64| b >= a - 1e-12 * a.abs().max(b.abs());
        match self.monotone {
            Monotone::NonDecreasing => vals.windows(2).all(|w| ok(w[0], w[1])),
            Monotone::NonIncreasing => vals.windows(2).all(|w| ok(w[1], w[0])),
            Monotone::None => true,
        }
    }
}

/// `M_K`, `M_{K,log}` and their order-m variants as weight functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeight {
    pub base_m: WeightRule,
    pub base_k: WeightRule,
    pub kind: CompositeKind,
}

impl CompositeWeight {
    pub fn new(base_m: WeightRule, base_k: WeightRule, kind: CompositeKind) -> Self {
        CompositeWeight { base_m, base_k, kind }
    }

    /// The composite as a non-decreasing weight, defined from `t = e`
    /// (where `log log t` turns non-negative).
    pub fn weight(&self) -> WeightFunction {
        WeightFunction::new(
            WeightRule::Composite {
                of: self.kind,
                m: Box::new(self.base_m.clone()),
                k: Box::new(self.base_k.clone()),
            },
            Monotone::NonDecreasing,
            std::f64::consts::E,
        )
    }
}

/// Default geometric grid `t0·1.02^k` capped at `2·10⁴` points and `1e300`.
pub fn default_grid(t0: f64) -> Vec<f64> {
    geometric_grid(t0, GRID_RATIO, GRID_POINTS)
        .into_iter()
        .take_while(|t| *t < 1e300)
        .collect()
}

/// Positive increase of `K`: `t^{-a}K(t) ≪ R^{-a}K(R)` for `t0 ≤ t ≤ R`.
///
/// On the default grid, `C(R) = sup_{t ≤ R} t^{-a}K(t) / (R^{-a}K(R))` is
/// tracked as `R` grows; the property is accepted when `C` at the end of the
/// grid exceeds `C` ten doublings earlier by less than 1%.
pub fn check_positive_increase(k: &WeightFunction, a: f64, t0: f64) -> bool {
    let grid = default_grid(t0);
    let mut run_max = f64::NEG_INFINITY;
    let mut c = Vec::with_capacity(grid.len());
    let mut c_max = f64::NEG_INFINITY;
    for t in &grid {
        let w = k.ln_eval(t.ln()) - a * t.ln();
        if !w.is_finite() {
            return false;
        }
        run_max = run_max.max(w);
        c_max = c_max.max(run_max - w);
        c.push(c_max);
    }
    let back = (1024f64.ln() / GRID_RATIO.ln()).round() as usize;
    if c.len() <= back {
        return false;
    }
    c[c.len() - 1] - c[c.len() - 1 - back] <= 1.01f64.ln()
}

/// η-regular growth: `V(C′t)/V(t) ≥ 1 + 1/η(t)` for all grid `t ≥ t0`.
pub fn check_regular_growth(v: &WeightFunction, eta: &WeightFunction, c_prime: f64, t0: f64) -> bool {
    default_grid(t0)
        .into_iter()
        .take_while(|t| t * c_prime < 1e300)
        .all(|t| regular_growth_holds(v, eta, c_prime, t))
}

fn regular_growth_holds(v: &WeightFunction, eta: &WeightFunction, c_prime: f64, t: f64) -> bool {
    let (a, b) = (v.eval(t), v.eval(c_prime * t));
    a > 0.0 && b / a >= 1.0 + 1.0 / eta.eval(t)
}

/// Smallest grid point from which η-regular growth holds on the rest of the
/// default grid started at `t_start`.
pub fn regular_growth_threshold(
    v: &WeightFunction,
    eta: &WeightFunction,
    c_prime: f64,
    t_start: f64,
) -> Option<f64> {
    let grid: Vec<f64> = default_grid(t_start)
        .into_iter()
        .take_while(|t| t * c_prime < 1e300)
        .collect();
    let mut threshold = None;
    for t in grid.iter().rev() {
        if regular_growth_holds(v, eta, c_prime, *t) {
            threshold = Some(*t);
        } else {
            break;
        }
    }
    threshold
}

/// Inverse of a strictly increasing weight on `[domain_min, ∞)` by bisection.
pub fn inverse_monotone(v: &WeightFunction, y: f64) -> Result<f64> {
    let lo = v.domain_min;
    let v_lo = v.eval(lo);
    let mut hi = if lo > 0.0 { 2.0 * lo } else { 1.0 };
    while v.eval(hi) < y && hi < 1e300 {
        hi *= 16.0;
    }
    let hi = hi.min(1e300);
    inverse_monotone_on(v, y, lo, hi).map_err(|_| Error::OutOfRange { y, lo: v_lo, hi: v.eval(hi) })
}

/// Inverse of a strictly increasing weight on `[lo, hi]`, at most 200 bisections.
pub fn inverse_monotone_on(v: &WeightFunction, y: f64, lo: f64, hi: f64) -> Result<f64> {
    let (a, b) = (v.eval(lo), v.eval(hi));
    if !(a <= y && y <= b) {
        return Err(Error::OutOfRange { y, lo: a, hi: b });
    }
    if a == y {
        return Ok(lo);
    }
    if b == y {
        return Ok(hi);
    }
    Ok(bisect(|x| v.eval(x) - y, lo, hi, 200))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn associated_function_of_n_to_the_n() {
        let s = GrowthSequence::power_n(1.0);
        let m = associated_function(&s, 100.0).unwrap();
        assert!((m - 100.0 / std::f64::consts::E).abs() < 1.0, "{m}");
    }

    #[test]
    fn associated_function_is_zero_below_m1() {
        let s = GrowthSequence::from_values(vec![1.0, 5.0, 50.0, 1e4]);
        assert_eq!(associated_function(&s, 4.0).unwrap(), 0.0);
        assert_eq!(associated_function(&GrowthSequence::power_n(1.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn associated_function_of_gevrey_two() {
        let s = GrowthSequence::gevrey(2.0);
        let x: f64 = 50.0;
        let m = associated_function(&s, x).unwrap();
        assert!((m - (x * x / 2.0 - x.ln() / 2.0)).abs() < 2.0, "{m}");
    }

    #[test]
    fn bisection_path_agrees_with_scan() {
        let flagged = GrowthSequence::gevrey(0.7);
        let mut plain = flagged.clone();
        plain.flags.log_convex = None;
        for x in [0.5, 1.0, 3.0, 17.0, 250.0] {
            let a = associated_function(&flagged, x).unwrap();
            let b = associated_function(&plain, x).unwrap();
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn nonconvergent_on_short_table() {
        let s = GrowthSequence::from_values(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            associated_function(&s, 10.0),
            Err(Error::NonConvergent { .. })
        ));
    }

    #[test]
    fn log_convexity_examples() {
        assert!(check_log_convex(&GrowthSequence::new(SequenceRule::Const { value: 1.0 }), 100));
        assert!(!check_log_convex(&GrowthSequence::from_values(vec![1.0, 3.0, 2.0]), 2));
        assert!(check_log_convex(&GrowthSequence::power_n(1.0), 5000));
    }

    #[test]
    fn quasianalyticity_examples() {
        assert_eq!(check_non_quasianalytic(&GrowthSequence::gevrey(0.5), 1e-3), Ok(true));
        assert_eq!(check_non_quasianalytic(&GrowthSequence::power_n(1.0), 1e-3), Ok(false));
        assert_eq!(check_non_quasianalytic(&GrowthSequence::n_log(), 1e-3), Ok(false));
        assert_eq!(check_non_quasianalytic(&GrowthSequence::gevrey(1.0), 1e-3), Ok(false));
    }

    #[test]
    fn minorant_examples() {
        let spike = GrowthSequence::from_values(vec![1.0, 10.0, 1.0]);
        let m = log_convex_minorant(&spike);
        for n in 0..3 {
            assert!(m.ln_m(n).unwrap().abs() < 1e-15);
        }
        let convex = GrowthSequence::from_values(vec![1.0, 2.0, 5.0, 30.0]);
        let m = log_convex_minorant(&convex);
        for n in 0..4 {
            assert_eq!(m.ln_m(n), convex.ln_m(n));
        }
    }

    #[test]
    fn positive_increase_examples() {
        let k = WeightFunction::non_decreasing(WeightRule::power(1.0));
        assert!(check_positive_increase(&k, 1.0, 1.0));
        let log = WeightFunction::non_decreasing(WeightRule::Log { shift: std::f64::consts::E, exp: 1.0 });
        for a in [0.05, 0.1, 0.5, 1.0, 2.0] {
            assert!(!check_positive_increase(&log, a, 1.0), "a={a}");
        }
        let k = WeightFunction::non_decreasing(WeightRule::product(vec![
            WeightRule::power(0.5),
            WeightRule::Log { shift: std::f64::consts::E, exp: 1.0 },
        ]));
        assert!(check_positive_increase(&k, 0.5, 1.0));
    }

    #[test]
    fn regular_growth_examples() {
        let id = WeightFunction::non_decreasing(WeightRule::power(1.0));
        assert!(check_regular_growth(&id, &id, 2.0, 1.0));
        let one = WeightFunction::non_decreasing(WeightRule::constant(1.0));
        assert!(!check_regular_growth(&one, &id, 2.0, 1.0));
    }

    #[test]
    fn inverse_examples() {
        let id = WeightFunction::non_decreasing(WeightRule::power(1.0));
        assert!((inverse_monotone(&id, 7.0).unwrap() - 7.0).abs() < 1e-9);
        let sq = WeightFunction::non_decreasing(WeightRule::power(2.0));
        assert!((inverse_monotone(&sq, 9.0).unwrap() - 3.0).abs() < 1e-9);
        let lg = WeightRule::Log { shift: std::f64::consts::E, exp: 1.0 };
        let v = CompositeWeight::new(lg.clone(), lg, CompositeKind::MkLog).weight();
        let x = inverse_monotone(&v, 100.0).unwrap();
        assert!((v.eval(x) - 100.0).abs() < 1e-8);
        assert!(matches!(inverse_monotone(&v, -5.0), Err(Error::OutOfRange { .. })));
    }
}
