//! One-sided Tauberian conditions and the sandwich inequalities that turn a
//! test-function convolution into two-sided bounds for `S(x)`.

use crate::error::{Error, Result};
use crate::numerics::gl20;
use crate::rule::WeightRule;
use crate::testfn::TestFunction;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

type NativeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Rule(WeightRule),
    Native(NativeFn),
}

/// A real function on ℝ together with the points where it jumps or kinks.
///
/// When `causal` is set (the default) the function is taken to vanish on the
/// negative half-axis, and `0` is a break point.
#[derive(Clone)]
pub struct RealFn {
    source: Source,
    pub causal: bool,
    pub breaks: Vec<f64>,
}

impl fmt::Debug for RealFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Source::Rule(r) => write!(f, "RealFn({r:?}, causal={}, breaks={:?})", self.causal, self.breaks),
            Source::Native(_) => write!(f, "RealFn(<native>, causal={}, breaks={:?})", self.causal, self.breaks),
        }
    }
}

impl RealFn {
    pub fn from_rule(rule: WeightRule) -> Self {
        RealFn { source: Source::Rule(rule), causal: true, breaks: vec![0.0] }
    }

    /// A causal function given by an expression in `x`.
    pub fn expr(src: &str) -> Result<Self> {
        Ok(Self::from_rule(WeightRule::expr(src)?))
    }

    pub fn native<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        RealFn { source: Source::Native(Arc::new(f)), causal: true, breaks: vec![0.0] }
    }

    pub fn zero() -> Self {
        Self::native(|_| 0.0)
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        if self.causal && !self.breaks.contains(&0.0) {
            self.breaks.push(0.0);
        }
        self
    }

    /// Evaluate without the causal cut-off.
    pub fn eval_raw(&self, x: f64) -> f64 {
        match &self.source {
            Source::Rule(r) => r.eval(x),
            Source::Native(f) => f(x),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.causal && x < 0.0 {
            0.0
        } else {
            self.eval_raw(x)
        }
    }
}

#[derive(Deserialize)]
struct RealFnExtras {
    #[serde(default = "yes")]
    causal: bool,
    #[serde(default)]
    breaks: Vec<f64>,
}

fn yes() -> bool {
    true
}

impl<'de> Deserialize<'de> for RealFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let extras: RealFnExtras = serde_json::from_value(v.clone()).map_err(serde::de::Error::custom)?;
        let rule: WeightRule = serde_json::from_value(v).map_err(serde::de::Error::custom)?;
        let mut f = RealFn::from_rule(rule);
        f.causal = extras.causal;
        f.breaks.clear();
        Ok(f.with_breaks(extras.breaks))
    }
}

impl Serialize for RealFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let Source::Rule(rule) = &self.source else {
            return Err(serde::ser::Error::custom("native functions cannot be serialized"));
        };
        let mut v = serde_json::to_value(rule).map_err(serde::ser::Error::custom)?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("causal".into(), self.causal.into());
            obj.insert("breaks".into(), serde_json::to_value(&self.breaks).map_err(serde::ser::Error::custom)?);
        }
        v.serialize(s)
    }
}

/// The data `(S, X, F, f, α)` of the condition 𝔗.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauberianData {
    #[serde(rename = "S")]
    pub s: RealFn,
    #[serde(rename = "X")]
    pub x0: f64,
    #[serde(rename = "F")]
    pub big_f: RealFn,
    pub f: RealFn,
    pub alpha: f64,
}

/// The data `(S, X, F_m, f_m, α, m)` of the order-m condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HigherOrderData {
    #[serde(rename = "S")]
    pub s: RealFn,
    #[serde(rename = "X")]
    pub x0: f64,
    #[serde(rename = "F_m")]
    pub big_f: RealFn,
    pub f_m: RealFn,
    pub alpha: f64,
    pub m: usize,
}

/// One checked property with its worst slack (negative means violated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub passed: bool,
    pub worst_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Tracks the worst value of `rhs - lhs + tol` over a grid.
struct Slack {
    worst: f64,
}

impl Slack {
    fn new() -> Self {
        Slack { worst: f64::INFINITY }
    }

    /// Record `lhs ≤ rhs` with relative slack `1e-10·scale`.
    fn le(&mut self, lhs: f64, rhs: f64) {
        let scale = 1.0f64.max(lhs.abs()).max(rhs.abs());
        let s = rhs - lhs + 1e-10 * scale;
        self.worst = if s.is_nan() { f64::NEG_INFINITY } else { self.worst.min(s) };
    }

    fn entry(self, name: &str) -> ConditionEntry {
        ConditionEntry { name: name.into(), passed: self.worst >= 0.0, worst_slack: self.worst }
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Checks the four properties of 𝔗(X, F, f, α) on the supplied grids:
/// `S` vanishes on the negative axis, `S + F` is non-decreasing from `X` on,
/// `|F(x+y) - F(x)| ≤ f(x)|y|e^{|y|^α}` with `F, f ≥ 0` vanishing on the
/// negative axis, and `S + F` at `X` dominates its values to the left.
pub fn check_condition_t(data: &TauberianData, x_grid: &[f64], y_grid: &[f64]) -> ConditionReport {
    let tau = |x: f64| data.s.eval(x) + data.big_f.eval(x);
    let xs = sorted(x_grid);
    let negatives: Vec<f64> = xs
        .iter()
        .chain(y_grid)
        .filter(|v| **v != 0.0)
        .map(|v| -v.abs())
        .collect();

    let mut s1 = Slack::new();
    for v in &negatives {
        s1.le(data.s.eval(*v).abs(), 0.0);
    }

    let mut s2 = Slack::new();
    let right: Vec<f64> = xs.iter().copied().filter(|x| *x >= data.x0).collect();
    for w in right.windows(2) {
        s2.le(tau(w[0]), tau(w[1]));
    }

    let mut s3 = Slack::new();
    for v in &negatives {
        s3.le(data.big_f.eval(*v).abs(), 0.0);
        s3.le(data.f.eval(*v).abs(), 0.0);
    }
    for x in &xs {
        s3.le(0.0, data.big_f.eval(*x));
        s3.le(0.0, data.f.eval(*x));
    }
    for x in &right {
        for y in y_grid {
            let lhs = (data.big_f.eval(x + y) - data.big_f.eval(*x)).abs();
            let rhs = data.f.eval(*x) * y.abs() * y.abs().powf(data.alpha).exp();
            s3.le(lhs, rhs);
        }
    }

    let mut s4 = Slack::new();
    let top = tau(data.x0);
    let left = xs
        .iter()
        .copied()
        .filter(|x| *x <= data.x0)
        .chain(y_grid.iter().map(|y| data.x0 - y.abs()));
    for y in left {
        s4.le(tau(y), top);
    }

    ConditionReport {
        entries: vec![
            s1.entry("vanishes_on_negative_axis"),
            s2.entry("non_decreasing"),
            s3.entry("increment_bound"),
            s4.entry("dominates_left"),
        ],
    }
}

/// `f(x+y) ≤ C f(x) e^{|y|^α}` for grid `x ≥ X` and grid `y ≥ -x`.
pub fn regularity_check_f(f: &RealFn, alpha: f64, c: f64, x0: f64, x_grid: &[f64], y_grid: &[f64]) -> bool {
    let mut slack = Slack::new();
    for x in x_grid.iter().filter(|x| **x >= x0) {
        for y in y_grid.iter().filter(|y| **y >= -x) {
            slack.le(f.eval(x + y), c * f.eval(*x) * y.abs().powf(alpha).exp());
        }
    }
    slack.worst >= 0.0
}

/// `Σ_{j=0}^m (-1)^{m-j} C(m, j) τ(x + jy)`.
pub fn finite_difference_m<F: Fn(f64) -> f64>(tau: F, m: usize, x: f64, y: f64) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    for j in 0..=m {
        let sign = if (m - j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * tau(x + j as f64 * y);
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Checks the order-m condition on grids: the sign of `y^m Δ^m_y(S + F_m; x)`,
/// the increment bound for `F_m` and, for even `m`, its shifted variant.
pub fn check_higher_order(data: &HigherOrderData, x_grid: &[f64], y_grid: &[f64]) -> ConditionReport {
    let m = data.m;
    let tau = |v: f64| data.s.eval(v) + data.big_f.eval(v);
    let f = |v: f64| data.big_f.eval(v);
    let mut sign = Slack::new();
    let mut inc = Slack::new();
    let mut shifted = Slack::new();
    for x in x_grid.iter().filter(|x| **x >= data.x0) {
        for y in y_grid {
            let ym = y.powi(m as i32);
            sign.le(0.0, ym * finite_difference_m(tau, m, *x, *y));
            let rhs = y.abs().powi(m as i32) * data.f_m.eval(*x) * y.abs().powf(data.alpha).exp();
            inc.le(finite_difference_m(f, m, *x, *y).abs(), rhs);
            if m % 2 == 0 {
                shifted.le(finite_difference_m(f, m, x - y, *y).abs(), rhs);
            }
        }
    }
    let mut entries = vec![sign.entry("sign_condition"), inc.entry("increment_bound")];
    if m % 2 == 0 {
        entries.push(shifted.entry("shifted_increment_bound"));
    }
    ConditionReport { entries }
}

/// Output of [`sandwich_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: f64,
    pub upper: f64,
    /// `∫|y| e^{|y|^α} |φ(y)| dy`.
    pub c_phi: f64,
    /// `λ∫S(x+y)φ(λy)dy` and `λ∫S(x+y)φ(-λy)dy`.
    pub conv_plus: f64,
    pub conv_minus: f64,
    /// Quadrature and truncation budget.
    pub qtol: f64,
}

impl Sandwich {
    /// `lower - qtol ≤ s ≤ upper + qtol`.
    pub fn contains(&self, s: f64) -> bool {
        self.lower - self.qtol <= s && s <= self.upper + self.qtol
    }
}

/// `∫ S(x + j u/λ) φ(u) du` with panel splits at the breaks of `S`, and the
/// matching error budget.
fn scaled_pairing(s: &RealFn, phi: &TestFunction, lambda: f64, x: f64, j: f64) -> Result<(f64, f64)> {
    let g = |u: f64| s.eval(x + j * u / lambda);
    let breaks: Vec<f64> = s.breaks.iter().map(|b| lambda * (b - x) / j).collect();
    let value = phi.pair_integral(g, &breaks);
    let (lo, hi) = (phi.x_grid[0], phi.x_grid[phi.len() - 1]);
    let sup = crate::numerics::linspace(lo, hi, 401)
        .into_iter()
        .map(|u| g(u).abs())
        .fold(0.0, f64::max);
    if !sup.is_finite() {
        return Err(Error::TailUnbounded(format!("S is not finite on the window at x = {x}")));
    }
    let tail = sup * phi.meta.tail_bound;
    if tail > 1e-8 {
        return Err(Error::TailUnbounded(format!(
            "sup |S| = {sup:.3e} on the window times the tail bound {:.3e} of φ",
            phi.meta.tail_bound
        )));
    }
    let magnitude = phi.abs_integral(|u| g(u).abs());
    Ok((value, tail + 1e-13 * magnitude.max(1.0)))
}

fn check_unit_mass(phi: &TestFunction) -> Result<()> {
    let mass = phi.integral();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("test function has mass {mass}, not 1")));
    }
    Ok(())
}

/// Sandwich bounds: for `λ ≥ 1` and `x ≥ X`,
/// `λ∫S(x+y)φ(-λy)dy - C f(x)/λ ≤ S(x) ≤ λ∫S(x+y)φ(λy)dy + C f(x)/λ`.
pub fn sandwich_bounds(data: &TauberianData, phi: &TestFunction, lambda: f64, x: f64) -> Result<Sandwich> {
    if lambda < 1.0 || x < data.x0 {
        return Err(Error::InvalidInput(format!("need λ ≥ 1 and x ≥ X, got λ = {lambda}, x = {x}")));
    }
    check_unit_mass(phi)?;
    if phi.min_moment_sign() < -1e-9 {
        return Err(Error::SignPatternViolation { m: 1 });
    }
    let c_phi = phi.weighted_l1(1, data.alpha);
    if !c_phi.is_finite() {
        return Err(Error::TailUnbounded("∫|y|e^{|y|^α}|φ| is not finite".into()));
    }
    let (plus, q1) = scaled_pairing(&data.s, phi, lambda, x, 1.0)?;
    let (minus, q2) = scaled_pairing(&data.s, phi, lambda, x, -1.0)?;
    let pen = c_phi * data.f.eval(x) / lambda;
    Ok(Sandwich {
        lower: minus - pen,
        upper: plus + pen,
        c_phi,
        conv_plus: plus,
        conv_minus: minus,
        qtol: q1.max(q2),
    })
}

/// Output of [`sandwich_bounds_m`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichM {
    pub bound: f64,
    /// `λ∫S(x+jy)φ(λy)dy` for `j = -m..m`, `j ≠ 0`, in that order.
    pub integrals: Vec<f64>,
    pub c_m: f64,
    pub qtol: f64,
    pub s_value: f64,
}

/// `|S(x)| ≤ 2^m λ max_{0<|j|≤m} |∫S(x+jy)φ(λy)dy| + C_m f_m(x)/λ^m`; the
/// inequality itself is asserted.
pub fn sandwich_bounds_m(data: &HigherOrderData, phi: &TestFunction, lambda: f64, x: f64) -> Result<SandwichM> {
    let m = data.m;
    if m == 0 || lambda < 1.0 || x < data.x0 {
        return Err(Error::InvalidInput(format!("need m ≥ 1, λ ≥ 1, x ≥ X; got m = {m}, λ = {lambda}, x = {x}")));
    }
    check_unit_mass(phi)?;
    let peak = phi.phi_vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let ok = if m % 2 == 0 {
        phi.phi_vals.iter().all(|v| *v >= -1e-9 * peak)
    } else {
        phi.min_moment_sign() >= -1e-9
    };
    if !ok {
        return Err(Error::SignPatternViolation { m });
    }
    let c_m = phi.weighted_l1(m, data.alpha);
    let mut integrals = Vec::with_capacity(2 * m);
    let mut qtol: f64 = 0.0;
    for j in (-(m as i64)..=m as i64).filter(|j| *j != 0) {
        let (v, q) = scaled_pairing(&data.s, phi, lambda, x, j as f64)?;
        integrals.push(v);
        qtol = qtol.max(q);
    }
    let biggest = integrals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let scale = 2f64.powi(m as i32);
    let bound = scale * biggest + c_m * data.f_m.eval(x) / lambda.powi(m as i32);
    let qtol = scale * qtol;
    let s_value = data.s.eval(x);
    if s_value.abs() > bound + qtol {
        return Err(Error::InequalityViolated(format!("|S({x})| = {} exceeds {bound}", s_value.abs())));
    }
    Ok(SandwichM { bound, integrals, c_m, qtol, s_value })
}

/// Both sides of `λ∫S(x+y)φ(λy)dy = (2π)^{-1}∫ g(t) e^{ixt} φ̂(-t/λ) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub space: f64,
    pub freq: f64,
    pub freq_imag: f64,
}

/// Evaluates both sides of the convolution/Fourier pairing identity for a
/// boundary function `g` given in closed form and asserts agreement within
/// `1e-6·(1 + |space|)`.
pub fn fourier_pairing<G: Fn(f64) -> Complex64>(
    s: &RealFn,
    g: G,
    phi: &TestFunction,
    lambda: f64,
    x: f64,
) -> Result<Pairing> {
    if phi.bandwidth > 1.0 {
        return Err(Error::InvalidInput(format!("bandwidth {} exceeds 1", phi.bandwidth)));
    }
    let (space, _) = scaled_pairing(s, phi, lambda, x, 1.0)?;
    // With t = -λσ the right side is (λ/2π)∫_{|σ|≤b} g(-λσ) e^{-ixλσ} φ̂(σ) dσ.
    let b = phi.bandwidth;
    let panels = 16 + (x.abs() * lambda * b).ceil() as usize;
    let (gx, gw) = gl20();
    let width = 2.0 * b / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let c = -b + (p as f64 + 0.5) * width;
        for (xi, wi) in gx.iter().zip(gw) {
            let sigma = c + 0.5 * width * xi;
            let term = g(-lambda * sigma) * Complex64::from_polar(1.0, -x * lambda * sigma) * phi.phihat_at(sigma);
            acc += term * (wi * 0.5 * width);
        }
    }
    let freq = acc * (lambda / (2.0 * PI));
    let out = Pairing { space, freq: freq.re, freq_imag: freq.im };
    if (space - freq).norm() > 1e-6 * (1.0 + space.abs()) {
        return Err(Error::MismatchBeyondTolerance { space, freq: freq.re });
    }
    Ok(out)
}
