//! JSON request schemas, one per subcommand.

use num_complex::Complex64;
use serde::Deserialize;
use tauberkit::berry_esseen::DistributionPair;
use tauberkit::expr::Expr;
use tauberkit::numerics::{geomspace, linspace};
use tauberkit::rates::BoundaryClass;
use tauberkit::rule::{SequenceRule, WeightRule};
use tauberkit::tauber::{HigherOrderData, RealFn, TauberianData};
use tauberkit::testfn::{berry_esseen_phi, build_even_phi, build_phi_n, TestFunction};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Geometric,
}

/// Either an explicit list of points or a range description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points(Vec<f64>),
    Range {
        from: f64,
        to: f64,
        points: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let v = match self {
            Grid::Points(v) => v.clone(),
            Grid::Range { from, to, points, spacing } => {
                if *points < 1 || !(from.is_finite() && to.is_finite()) {
                    return Err(format!("bad grid range {from}..{to} with {points} points"));
                }
                match spacing {
                    Spacing::Linear => linspace(*from, *to, *points),
                    Spacing::Geometric if *from > 0.0 && *to > 0.0 => geomspace(*from, *to, *points),
                    Spacing::Geometric => return Err("geometric grid needs positive endpoints".into()),
                }
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err("grid must be non-empty and finite".into());
        }
        Ok(v)
    }
}

/// The penalty weight `f`: a constant or a rule evaluated at each `x`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Penalty {
    Const(f64),
    Rule(WeightRule),
}

impl Penalty {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Penalty::Const(c) => *c,
            Penalty::Rule(r) => r.eval(x),
        }
    }
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRequest {
    pub class: BoundaryClass,
    pub f: Penalty,
    pub x_grid: Grid,
    #[serde(default = "one_u32")]
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiSpec {
    PhiN {
        n: usize,
        #[serde(default = "half")]
        gamma: f64,
    },
    Even {
        n: usize,
        #[serde(default = "half")]
        gamma: f64,
    },
    BerryEsseen,
}

fn half() -> f64 {
    0.5
}

impl Default for PhiSpec {
    fn default() -> Self {
        PhiSpec::PhiN { n: 4, gamma: 0.5 }
    }
}

impl PhiSpec {
    pub fn build(&self) -> tauberkit::Result<TestFunction> {
        match self {
            PhiSpec::PhiN { n, gamma } => build_phi_n(*n, *gamma),
            PhiSpec::Even { n, gamma } => build_even_phi(*n, *gamma),
            PhiSpec::BerryEsseen => Ok(berry_esseen_phi()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFnRequest {
    pub phi: PhiSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaRequest {
    pub data: TauberianData,
    #[serde(default)]
    pub phi: PhiSpec,
    pub lambdas: Vec<f64>,
    pub x_grid: Grid,
    /// When present, condition 𝔗 is checked on `x_grid × condition_y_grid` first.
    #[serde(default)]
    pub condition_y_grid: Option<Grid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaMRequest {
    pub data: HigherOrderData,
    pub phi: PhiSpec,
    pub lambdas: Vec<f64>,
    pub x_grid: Grid,
    #[serde(default)]
    pub condition_y_grid: Option<Grid>,
}

/// A boundary function `g(t) = ∫ S(x) e^{-ixt} dx` in closed form.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    /// `1/(rate + it)`, the transform of `e^{-rate·x}` on `x ≥ 0`.
    ExpDecay { rate: f64 },
    /// `(e^{-ita} - e^{-itb})/(it)`, the transform of the indicator of `[a, b]`.
    Interval { a: f64, b: f64 },
    /// Real and imaginary parts as expressions in `t`.
    Expr {
        re: String,
        #[serde(default)]
        im: Option<String>,
    },
}

pub struct BoundaryFn(Box<dyn Fn(f64) -> Complex64 + Send + Sync>);

impl BoundaryFn {
    pub fn eval(&self, t: f64) -> Complex64 {
        (self.0)(t)
    }
}

impl Boundary {
    pub fn compile(&self) -> tauberkit::Result<BoundaryFn> {
        Ok(BoundaryFn(match self.clone() {
            Boundary::ExpDecay { rate } => Box::new(move |t| Complex64::new(1.0, 0.0) / Complex64::new(rate, t)),
            Boundary::Interval { a, b } => Box::new(move |t| {
                if t.abs() < 1e-12 {
                    Complex64::new(b - a, 0.0)
                } else {
                    let e = |s: f64| Complex64::from_polar(1.0, -t * s);
                    (e(a) - e(b)) / Complex64::new(0.0, t)
                }
            }),
            Boundary::Expr { re, im } => {
                let re = Expr::parse(&re)?;
                let im = im.as_deref().map(Expr::parse).transpose()?;
                Box::new(move |t| Complex64::new(re.eval(t), im.as_ref().map_or(0.0, |e| e.eval(t))))
            }
        }))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingRequest {
    #[serde(rename = "S")]
    pub s: RealFn,
    pub g: Boundary,
    #[serde(default)]
    pub phi: PhiSpec,
    pub lambdas: Vec<f64>,
    pub xs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerryEsseenRequest {
    #[serde(default)]
    pub pairs: Vec<DistributionPair>,
    /// Append the built-in 20-pair corpus.
    #[serde(default)]
    pub corpus: bool,
    #[serde(rename = "T")]
    pub ts: Vec<f64>,
    /// Evaluation grid shared by all pairs; each pair's default grid otherwise.
    #[serde(default)]
    pub grid: Option<Grid>,
}

fn default_checks() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthRequest {
    pub sequence: SequenceRule,
    pub x_grid: Grid,
    /// Index range for the log-convexity and subanalyticity checks.
    #[serde(default = "default_checks")]
    pub checks_upto: usize,
    /// Subanalyticity witness `M_n ≥ c_sa·L^n·n^n`.
    #[serde(default, rename = "L")]
    pub l: Option<f64>,
    #[serde(default)]
    pub c_sa: Option<f64>,
}
