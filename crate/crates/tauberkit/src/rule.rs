//! JSON rule vocabulary for weight functions `t ↦ w(t)` and sequences
//! `n ↦ M_n`.
//!
//! Weights are evaluated both directly and in the log domain (`ln w(e^u)`),
//! which lets rate computations use λ far beyond the binary64 range.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numerics::{ln_integral_exp, log_add_exp};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Lower end (in `u = ln t`) of log-domain integrals; the piece on
/// `[0, e^{U_FLOOR}]` is added analytically from the local power at zero.
const U_FLOOR: f64 = -45.0;

fn one() -> f64 {
    1.0
}

fn euler() -> f64 {
    std::f64::consts::E
}

/// Composite weights built from a pair (M, K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeKind {
    /// `M(t)(log t + log K(t))`
    Mk,
    /// `M(t)(log t + log log t + log K(t))`
    MkLog,
    /// `M(t)(log K(t) + m log t)`
    MkM(u32),
    /// `M(t)(log K(t) + m log t + log log t)`
    MkMLog(u32),
}

/// A scalar weight on the half-line `t ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightRule {
    /// Constant `value`.
    Const { value: f64 },
    /// `scale·(t + shift)^exp`.
    Power {
        exp: f64,
        #[serde(default)]
        shift: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `(log(t + shift))^exp`.
    Log {
        #[serde(default = "euler")]
        shift: f64,
        #[serde(default = "one")]
        exp: f64,
    },
    /// `(log log(t + shift))^exp`.
    LogLog {
        #[serde(default = "euler")]
        shift: f64,
        #[serde(default = "one")]
        exp: f64,
    },
    /// `exp(coef·t^exp)`.
    ExpPower { coef: f64, exp: f64 },
    /// Pointwise product.
    Product { factors: Vec<WeightRule> },
    /// Pointwise maximum.
    Max { args: Vec<WeightRule> },
    /// `factor·rule(t)`.
    Scaled { factor: f64, rule: Box<WeightRule> },
    /// `∫_0^t rule`, doubled when `symmetric` (the integral over (-t, t) of an even extension).
    Integral {
        rule: Box<WeightRule>,
        #[serde(default)]
        symmetric: bool,
    },
    /// Expression in the variable `t`.
    Expr {
        #[serde(with = "expr_serde")]
        expr: Expr,
    },
    /// Piecewise-linear interpolation of a table, constant beyond its ends.
    Table { t: Vec<f64>, value: Vec<f64> },
    /// Composite weight of two rules.
    Composite {
        of: CompositeKind,
        m: Box<WeightRule>,
        k: Box<WeightRule>,
    },
}

mod expr_serde {
    use crate::expr::Expr;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(e.source())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl WeightRule {
    pub fn constant(value: f64) -> Self {
        WeightRule::Const { value }
    }

    pub fn power(exp: f64) -> Self {
        WeightRule::Power { exp, shift: 0.0, scale: 1.0 }
    }

    pub fn expr(src: &str) -> Result<Self> {
        Ok(WeightRule::Expr { expr: Expr::parse(src)? })
    }

    pub fn product(factors: Vec<WeightRule>) -> Self {
        WeightRule::Product { factors }
    }

    pub fn scaled(factor: f64, rule: WeightRule) -> Self {
        WeightRule::Scaled { factor, rule: Box::new(rule) }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Value at `t ≥ 0`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            WeightRule::Const { value } => *value,
            WeightRule::Power { exp, shift, scale } => {
                if *exp == 0.0 {
                    *scale
                } else {
                    scale * (t + shift).powf(*exp)
                }
            }
            WeightRule::Log { shift, exp } => (t + shift).ln().powf(*exp),
            WeightRule::LogLog { shift, exp } => (t + shift).ln().ln().powf(*exp),
            WeightRule::ExpPower { coef, exp } => (coef * t.powf(*exp)).exp(),
            WeightRule::Product { factors } => factors.iter().map(|f| f.eval(t)).product(),
            WeightRule::Max { args } => args
                .iter()
                .map(|f| f.eval(t))
                .fold(f64::NEG_INFINITY, f64::max),
            WeightRule::Scaled { factor, rule } => factor * rule.eval(t),
            WeightRule::Integral { .. } => self.ln_eval(t.ln()).exp(),
            WeightRule::Expr { expr } => expr.eval(t),
            WeightRule::Table { t: ts, value } => interpolate(ts, value, t),
            WeightRule::Composite { of, m, k } => {
                let mt = m.eval(t);
                let lk = k.eval(t).ln();
                let lt = t.ln();
                match of {
                    CompositeKind::Mk => mt * (lt + lk),
                    CompositeKind::MkLog => mt * (lt + lt.ln() + lk),
                    CompositeKind::MkM(mm) => mt * (lk + *mm as f64 * lt),
                    CompositeKind::MkMLog(mm) => mt * (lk + *mm as f64 * lt + lt.ln()),
                }
            }
        }
    }

    /// `ln w(e^u)`; `-inf` where the weight vanishes and NaN where it is negative.
    pub fn ln_eval(&self, u: f64) -> f64 {
        match self {
            WeightRule::Const { value } => value.ln(),
            WeightRule::Power { exp, shift, scale } => {
                if *exp == 0.0 {
                    return scale.ln();
                }
                let base = if *shift == 0.0 {
                    u
                } else if *shift > 0.0 {
                    log_add_exp(u, shift.ln())
                } else {
                    (u.exp() + shift).ln()
                };
                scale.ln() + exp * base
            }
            WeightRule::Log { shift, exp } => {
                let l = ln_t_plus(u, *shift);
                if *exp == 0.0 {
                    0.0
                } else {
                    exp * l.ln()
                }
            }
            WeightRule::LogLog { shift, exp } => {
                let ll = ln_t_plus(u, *shift).ln();
                if *exp == 0.0 {
                    0.0
                } else {
                    exp * ll.ln()
                }
            }
            WeightRule::ExpPower { coef, exp } => {
                if u == f64::NEG_INFINITY {
                    return if *exp > 0.0 { 0.0 } else { f64::NAN };
                }
                coef * (exp * u).exp()
            }
            WeightRule::Product { factors } => factors.iter().map(|f| f.ln_eval(u)).sum(),
            WeightRule::Max { args } => args
                .iter()
                .map(|f| f.ln_eval(u))
                .fold(f64::NEG_INFINITY, f64::max),
            WeightRule::Scaled { factor, rule } => factor.ln() + rule.ln_eval(u),
            WeightRule::Integral { rule, symmetric } => {
                let v = ln_integral_from_zero(rule, u);
                if *symmetric {
                    v + std::f64::consts::LN_2
                } else {
                    v
                }
            }
            _ => self.eval(u.exp()).ln(),
        }
    }

    /// Exponent `p` with `w(t) ≍ t^p` as `t → 0⁺`, when it can be read off the rule.
    pub fn power_at_zero(&self) -> f64 {
        match self {
            WeightRule::Power { exp, shift, .. } if *shift == 0.0 => *exp,
            WeightRule::Log { shift, exp } if *shift == 1.0 => *exp,
            WeightRule::Product { factors } => factors.iter().map(|f| f.power_at_zero()).sum(),
            WeightRule::Max { args } => args
                .iter()
                .map(|f| f.power_at_zero())
                .fold(f64::INFINITY, f64::min),
            WeightRule::Scaled { rule, .. } => rule.power_at_zero(),
            WeightRule::Integral { rule, .. } => rule.power_at_zero() + 1.0,
            _ => 0.0,
        }
    }
}

/// `ln(e^u + shift)` for `shift ≥ 0`, accurate for large `u`.
fn ln_t_plus(u: f64, shift: f64) -> f64 {
    if shift > 0.0 {
        log_add_exp(u, shift.ln())
    } else if shift == 0.0 {
        u
    } else {
        (u.exp() + shift).ln()
    }
}

fn interpolate(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if ts.is_empty() {
        return f64::NAN;
    }
    if t <= ts[0] {
        return vs[0];
    }
    if t >= ts[ts.len() - 1] {
        return vs[vs.len() - 1];
    }
    let i = ts.partition_point(|x| *x <= t);
    let (t0, t1) = (ts[i - 1], ts[i]);
    let w = (t - t0) / (t1 - t0);
    vs[i - 1] * (1.0 - w) + vs[i] * w
}

/// `ln ∫_0^{e^u} w(t) dt`, with the part below `e^{U_FLOOR}` integrated from
/// the local power law at zero.
pub fn ln_integral_from_zero(w: &WeightRule, u: f64) -> f64 {
    ln_integral_of_power(w, 1.0, u)
}

/// `ln ∫_0^{e^u} w(t)^q dt`; `+inf` when the power law of `w^q` at zero is
/// not integrable.
pub fn ln_integral_of_power(w: &WeightRule, q: f64, u: f64) -> f64 {
    let p = q * w.power_at_zero();
    let floor = U_FLOOR.min(u - 1.0);
    let head = if p > -1.0 {
        q * w.ln_eval(floor) + floor - (p + 1.0).ln()
    } else {
        f64::INFINITY
    };
    let body = ln_integral_exp(|v| q * w.ln_eval(v) + v, floor, u);
    log_add_exp(head, body)
}

/// A positive sequence `n ↦ M_n`, stored through `ln M_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceRule {
    /// `M_n = (n!)^{1/alpha}`.
    Gevrey { alpha: f64 },
    /// `M_n = n^{alpha·n}`, `M_0 = 1`.
    PowerN {
        #[serde(default = "one")]
        alpha: f64,
    },
    /// `M_n = (n log(n+1))^n`, `M_0 = 1`.
    NLog,
    /// `M_n = r^n`.
    Geometric { r: f64 },
    /// `M_n ≡ value`.
    Const { value: f64 },
    /// Tabulated `ln M_n` at the listed indices (must be 0, 1, 2, ... in order).
    Table {
        n: Vec<usize>,
        #[serde(rename = "logM")]
        log_m: Vec<f64>,
    },
    /// Explicit values `M_0, M_1, ...`.
    Values {
        #[serde(rename = "M")]
        m: Vec<f64>,
    },
    /// `ln M_n` given as an expression in `n`.
    LogExpr {
        #[serde(with = "expr_serde")]
        expr: Expr,
    },
}

impl SequenceRule {
    /// `ln M_n`, or `None` past the end of a finite table.
    pub fn ln_m(&self, n: usize) -> Option<f64> {
        let nf = n as f64;
        Some(match self {
            SequenceRule::Gevrey { alpha } => ln_gamma(nf + 1.0) / alpha,
            SequenceRule::PowerN { alpha } => {
                if n == 0 {
                    0.0
                } else {
                    alpha * nf * nf.ln()
                }
            }
            SequenceRule::NLog => {
                if n == 0 {
                    0.0
                } else {
                    nf * (nf.ln() + (nf + 1.0).ln().ln())
                }
            }
            SequenceRule::Geometric { r } => nf * r.ln(),
            SequenceRule::Const { value } => value.ln(),
            SequenceRule::Table { n: idx, log_m } => {
                let i = if idx.get(n) == Some(&n) {
                    n
                } else {
                    idx.iter().position(|k| *k == n)?
                };
                log_m[i]
            }
            SequenceRule::Values { m } => m.get(n)?.ln(),
            SequenceRule::LogExpr { expr } => expr.eval(nf),
        })
    }

    /// Largest index available, if finite.
    pub fn table_len(&self) -> Option<usize> {
        match self {
            SequenceRule::Table { n, .. } => Some(n.len()),
            SequenceRule::Values { m } => Some(m.len()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_vocabulary_round_trips() {
        let w = WeightRule::from_json(r#"{"kind":"power","exp":1.0}"#).unwrap();
        assert_eq!(w.eval(3.0), 3.0);
        let w = WeightRule::from_json(r#"{"kind":"log","shift":2.718}"#).unwrap();
        assert!((w.eval(0.0) - 2.718f64.ln()).abs() < 1e-15);
        let w = WeightRule::from_json(r#"{"kind":"expr","expr":"t^2 + 1"}"#).unwrap();
        assert_eq!(w.eval(2.0), 5.0);
        let back = serde_json::to_string(&w).unwrap();
        assert_eq!(WeightRule::from_json(&back).unwrap(), w);
        let s: SequenceRule = serde_json::from_str(r#"{"kind":"table","n":[0,1],"logM":[0.0,1.0]}"#).unwrap();
        assert_eq!(s.ln_m(1), Some(1.0));
        assert_eq!(s.ln_m(2), None);
        assert!(WeightRule::from_json(r#"{"kind":"expr","expr":"t +"}"#).is_err());
    }

    #[test]
    fn log_domain_matches_direct_evaluation() {
        let rules = [
            WeightRule::Power { exp: -1.0, shift: 1.0, scale: 2.0 },
            WeightRule::Log { shift: 2.0, exp: 1.5 },
            WeightRule::LogLog { shift: 3.0, exp: 2.0 },
            WeightRule::ExpPower { coef: 0.5, exp: 0.7 },
            WeightRule::Max {
                args: vec![WeightRule::constant(0.3), WeightRule::power(1.0)],
            },
        ];
        for r in &rules {
            for t in [0.5, 2.0, 17.0, 1e5] {
                let a = r.eval(t).ln();
                if !a.is_finite() {
                    continue;
                }
                let b = r.ln_eval(t.ln());
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{r:?} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn integral_rule_against_closed_forms() {
        let w = WeightRule::Integral {
            rule: Box::new(WeightRule::Power { exp: -1.0, shift: 1.0, scale: 1.0 }),
            symmetric: false,
        };
        for t in [0.5, 10.0, 1e6] {
            assert!((w.eval(t) - (1.0 + t).ln()).abs() < 1e-10 * (1.0 + t).ln());
        }
        // Integrable singularity at zero handled analytically.
        let w = WeightRule::Integral { rule: Box::new(WeightRule::power(-0.9)), symmetric: true };
        let exact = 2.0 * 4f64.powf(0.1) / 0.1;
        assert!((w.eval(4.0) - exact).abs() < 1e-9 * exact);
        // Far outside binary64 range in the log domain: ∫_0^{e^u} (1+t)^{-1} = ln(1+e^u) ≈ u.
        let w = WeightRule::Integral {
            rule: Box::new(WeightRule::Power { exp: -1.0, shift: 1.0, scale: 1.0 }),
            symmetric: false,
        };
        assert!((w.ln_eval(1e6) - 1e6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn sequences() {
        let g = SequenceRule::Gevrey { alpha: 2.0 };
        assert!((g.ln_m(5).unwrap() - 120f64.ln() / 2.0).abs() < 1e-12);
        let p = SequenceRule::PowerN { alpha: 1.0 };
        assert_eq!(p.ln_m(0), Some(0.0));
        assert!((p.ln_m(3).unwrap() - 27f64.ln()).abs() < 1e-12);
        let v = SequenceRule::Values { m: vec![1.0, 3.0, 2.0] };
        assert_eq!(v.table_len(), Some(3));
    }
}
