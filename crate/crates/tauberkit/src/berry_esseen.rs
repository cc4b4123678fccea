//! Numerical check of the Berry–Esseen inequality with constants 10 and 1/5
//! on pairs of distribution functions with analytic characteristic functions.
//!
//! The kernel route re-derives the right-hand side from the constants of the
//! explicit kernel `x sin⁴(x/4 - 3/(2π)) / (16 (x/4 - 3/(2π))⁴)`.

use crate::error::{Error, Result};
use crate::numerics::{adaptive_quad, golden_min, linspace};
use crate::testfn::{berry_esseen_phi, KernelConstants};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Discrete, Normal, Poisson, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Slack allowed in `sup_diff ≤ rhs`.
pub const BE_SLACK: f64 = 1e-6;
const ATOM_EPS: f64 = 1e-9;

fn one() -> f64 {
    1.0
}

/// A distribution function together with its characteristic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Normal {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    Binomial {
        n: u64,
        p: f64,
        #[serde(default)]
        standardized: bool,
    },
    Poisson {
        lambda: f64,
        #[serde(default)]
        standardized: bool,
    },
    /// Sum of `n` independent uniforms on `[0, 1]`.
    IrwinHall {
        n: u32,
        #[serde(default)]
        standardized: bool,
    },
    /// Student t with an odd number of degrees of freedom.
    StudentT { nu: u32 },
    /// One-sided stable law of index 1/2 with scale `c`; it has no mean.
    Levy { c: f64 },
    PointMass { at: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match *self {
            Distribution::Normal { sd, .. } if !(sd > 0.0) => bad(format!("normal sd must be positive, got {sd}")),
            Distribution::Binomial { n, p, .. } if n == 0 || !(0.0 < p && p < 1.0) => {
                bad(format!("binomial needs n ≥ 1 and 0 < p < 1, got n = {n}, p = {p}"))
            }
            Distribution::Poisson { lambda, .. } if !(lambda > 0.0) => bad(format!("poisson rate must be positive, got {lambda}")),
            Distribution::IrwinHall { n, .. } if n == 0 || n > 20 => bad(format!("irwin-hall needs 1 ≤ n ≤ 20, got {n}")),
            Distribution::StudentT { nu } if nu % 2 == 0 || nu < 3 => bad(format!("student t needs odd ν ≥ 3, got {nu}")),
            Distribution::Levy { c } if !(c > 0.0) => bad(format!("lévy scale must be positive, got {c}")),
            _ => Ok(()),
        }
    }

    /// `(μ, σ)` of the underlying variable before standardization.
    fn raw_moments(&self) -> (f64, f64) {
        match *self {
            Distribution::Normal { mean, sd } => (mean, sd),
            Distribution::Binomial { n, p, .. } => (n as f64 * p, (n as f64 * p * (1.0 - p)).sqrt()),
            Distribution::Poisson { lambda, .. } => (lambda, lambda.sqrt()),
            Distribution::IrwinHall { n, .. } => (n as f64 / 2.0, (n as f64 / 12.0).sqrt()),
            Distribution::StudentT { nu } => (0.0, (nu as f64 / (nu as f64 - 2.0)).sqrt()),
            Distribution::Levy { c } => (f64::INFINITY, c),
            Distribution::PointMass { at } => (at, 0.0),
        }
    }

    fn standardized(&self) -> bool {
        match *self {
            Distribution::Binomial { standardized, .. }
            | Distribution::Poisson { standardized, .. }
            | Distribution::IrwinHall { standardized, .. } => standardized,
            _ => false,
        }
    }

    /// `x ↦ (μ + σx)` when standardized, the identity otherwise.
    fn affine(&self) -> (f64, f64) {
        if self.standardized() {
            self.raw_moments()
        } else {
            (0.0, 1.0)
        }
    }

    /// Mean of the (possibly standardized) law; `None` if it does not exist.
    pub fn mean(&self) -> Option<f64> {
        if matches!(self, Distribution::Levy { .. }) {
            return None;
        }
        Some(if self.standardized() { 0.0 } else { self.raw_moments().0 })
    }

    /// Centre and width of the window holding the bulk of the mass.
    fn window(&self) -> (f64, f64) {
        if self.standardized() {
            return (0.0, 1.0);
        }
        match *self {
            Distribution::Levy { c } => (0.0, 50.0 * c),
            Distribution::PointMass { at } => (at, 1.0),
            _ => self.raw_moments(),
        }
    }

    fn lattice_cdf(&self, k: f64) -> f64 {
        if k < 0.0 {
            return 0.0;
        }
        match *self {
            Distribution::Binomial { n, p, .. } => {
                if k >= n as f64 {
                    1.0
                } else {
                    Binomial::new(p, n).unwrap().cdf(k as u64)
                }
            }
            Distribution::Poisson { lambda, .. } => Poisson::new(lambda).unwrap().cdf(k as u64),
            _ => unreachable!(),
        }
    }

    fn is_lattice(&self) -> bool {
        matches!(self, Distribution::Binomial { .. } | Distribution::Poisson { .. })
    }

    /// `F(x)`, right-continuous.
    pub fn cdf(&self, x: f64) -> f64 {
        let (mu, sigma) = self.affine();
        let y = mu + sigma * x;
        match *self {
            Distribution::Normal { mean, sd } => Normal::new(mean, sd).unwrap().cdf(y),
            Distribution::Binomial { .. } | Distribution::Poisson { .. } => self.lattice_cdf((y + ATOM_EPS).floor()),
            Distribution::IrwinHall { n, .. } => irwin_hall_cdf(n, y),
            Distribution::StudentT { nu } => StudentsT::new(0.0, 1.0, nu as f64).unwrap().cdf(y),
            Distribution::Levy { c } => {
                if y <= 0.0 {
                    0.0
                } else {
                    erfc((c / (2.0 * y)).sqrt())
                }
            }
            Distribution::PointMass { at } => {
                if y >= at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `F(x-)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let (mu, sigma) = self.affine();
        let y = mu + sigma * x;
        match *self {
            Distribution::Binomial { .. } | Distribution::Poisson { .. } => self.lattice_cdf((y - ATOM_EPS).ceil() - 1.0),
            Distribution::PointMass { at } => {
                if y > at {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.cdf(x),
        }
    }

    /// Positions of the atoms in `[lo, hi]`, in the (standardized) variable.
    pub fn atoms(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (mu, sigma) = self.affine();
        let pos = |k: f64| (k - mu) / sigma;
        match *self {
            Distribution::PointMass { at } => {
                if (lo..=hi).contains(&at) {
                    vec![at]
                } else {
                    vec![]
                }
            }
            _ if self.is_lattice() => {
                let k_lo = (mu + sigma * lo).ceil().max(0.0);
                let mut k_hi = (mu + sigma * hi).floor();
                if let Distribution::Binomial { n, .. } = *self {
                    k_hi = k_hi.min(n as f64);
                }
                let mut out = Vec::new();
                let mut k = k_lo;
                while k <= k_hi {
                    out.push(pos(k));
                    k += 1.0;
                }
                out
            }
            _ => vec![],
        }
    }

    pub fn is_continuous(&self) -> bool {
        !self.is_lattice() && !matches!(self, Distribution::PointMass { .. })
    }

    /// `∫ e^{itx} dF(x)`.
    pub fn cf(&self, t: f64) -> Complex64 {
        let (mu, sigma) = self.affine();
        let s = t / sigma;
        let raw = match *self {
            Distribution::Normal { mean, sd } => Complex64::from_polar((-0.5 * sd * sd * s * s).exp(), mean * s),
            Distribution::Binomial { n, p, .. } => {
                (Complex64::new(1.0 - p, 0.0) + Complex64::from_polar(p, s)).powu(n as u32)
            }
            Distribution::Poisson { lambda, .. } => (lambda * (Complex64::from_polar(1.0, s) - 1.0)).exp(),
            Distribution::IrwinHall { n, .. } => {
                let half = 0.5 * s;
                let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
                Complex64::from_polar(sinc.powi(n as i32), half * n as f64)
            }
            Distribution::StudentT { nu } => Complex64::new(student_t_cf(nu, s), 0.0),
            Distribution::Levy { c } => (-(Complex64::new(0.0, -2.0 * c * s)).sqrt()).exp(),
            Distribution::PointMass { at } => Complex64::from_polar(1.0, at * s),
        };
        raw * Complex64::from_polar(1.0, -mu * s)
    }
}

/// `(1/n!) Σ_{k ≤ x} (-1)^k C(n,k) (x-k)^n`.
fn irwin_hall_cdf(n: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= n as f64 {
        return 1.0;
    }
    if x > 0.5 * n as f64 {
        return 1.0 - irwin_hall_cdf(n, n as f64 - x);
    }
    let ln_nf = ln_gamma(n as f64 + 1.0);
    let mut sum = 0.0;
    for k in 0..=(x.floor() as u32) {
        let ln_c = ln_nf - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
        let term = (ln_c + n as f64 * (x - k as f64).ln() - ln_nf).exp();
        sum += if k % 2 == 0 { term } else { -term };
    }
    sum.clamp(0.0, 1.0)
}

/// `e^{-z} Σ_j (k+j)! k! 2^{k-j} / (j! (k-j)! (2k)!) z^{k-j}` with
/// `z = √ν |t|`, `ν = 2k + 1`.
fn student_t_cf(nu: u32, t: f64) -> f64 {
    let k = (nu / 2) as i32;
    let z = (nu as f64).sqrt() * t.abs();
    let lf = |m: i32| ln_gamma(m as f64 + 1.0);
    let mut sum = 0.0;
    for j in 0..=k {
        let ln_c = lf(k + j) + lf(k) + (k - j) as f64 * std::f64::consts::LN_2 - lf(j) - lf(k - j) - lf(2 * k);
        sum += ln_c.exp() * z.powi(k - j);
    }
    (-z).exp() * sum
}

/// Two distribution functions compared by the inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPair {
    #[serde(rename = "F")]
    pub f: Distribution,
    #[serde(rename = "G")]
    pub g: Distribution,
    #[serde(default)]
    pub label: String,
}

impl DistributionPair {
    pub fn new(f: Distribution, g: Distribution) -> Self {
        let label = format!("{} vs {}", short(&f), short(&g));
        DistributionPair { f, g, label }
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate()?;
        self.g.validate()
    }

    /// A uniform grid covering the bulk of both laws.
    pub fn default_grid(&self) -> Vec<f64> {
        let (cf, sf) = self.f.window();
        let (cg, sg) = self.g.window();
        let lo = (cf - 12.0 * sf).min(cg - 12.0 * sg);
        let hi = (cf + 12.0 * sf).max(cg + 12.0 * sg);
        linspace(lo, hi, 20001)
    }

    /// Checks that `F, G` are non-decreasing with values in `[0, 1]` and
    /// that both characteristic functions are 1 at 0 and bounded by 1.
    pub fn check(&self, grid: &[f64]) -> Result<()> {
        self.validate()?;
        for d in [&self.f, &self.g] {
            let vals: Vec<f64> = grid.iter().map(|x| d.cdf(*x)).collect();
            if vals.iter().any(|v| !(0.0..=1.0).contains(v)) || vals.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                return Err(Error::InvalidInput(format!("{} is not a distribution function on the grid", short(d))));
            }
            if (d.cf(0.0) - 1.0).norm() > 1e-12 || linspace(-50.0, 50.0, 401).iter().any(|t| d.cf(*t).norm() > 1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!("{} has an invalid characteristic function", short(d))));
            }
        }
        Ok(())
    }
}

fn short(d: &Distribution) -> String {
    match *d {
        Distribution::Normal { mean, sd } => format!("normal({mean}, {sd})"),
        Distribution::Binomial { n, p, standardized } => format!("binomial({n}, {p}){}", if standardized { "*" } else { "" }),
        Distribution::Poisson { lambda, standardized } => format!("poisson({lambda}){}", if standardized { "*" } else { "" }),
        Distribution::IrwinHall { n, standardized } => format!("irwin-hall({n}){}", if standardized { "*" } else { "" }),
        Distribution::StudentT { nu } => format!("t({nu})"),
        Distribution::Levy { c } => format!("levy({c})"),
        Distribution::PointMass { at } => format!("delta({at})"),
    }
}

/// Atoms of `d` in the grid's range; empty for continuous laws.
fn atoms_on(d: &Distribution, grid: &[f64]) -> Vec<f64> {
    match (grid.first(), grid.last()) {
        (Some(lo), Some(hi)) => d.atoms(*lo, *hi),
        _ => vec![],
    }
}

/// `sup_x |F(x) - G(x)|` over the grid and both one-sided limits at every atom.
pub fn sup_diff(pair: &DistributionPair, grid: &[f64]) -> f64 {
    let (f, g) = (&pair.f, &pair.g);
    let mut best = grid.iter().map(|x| (f.cdf(*x) - g.cdf(*x)).abs()).fold(0.0, f64::max);
    for a in atoms_on(f, grid).into_iter().chain(atoms_on(g, grid)) {
        best = best.max((f.cdf(a) - g.cdf(a)).abs()).max((f.cdf_left(a) - g.cdf_left(a)).abs());
    }
    best
}

/// `𝔊 = sup_{x, 0 ≤ y ≤ 1/T} G(x+y) - G(x)`.
pub fn modulus_term(pair: &DistributionPair, t: f64, grid: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("T must be positive, got {t}")));
    }
    let g = &pair.g;
    let h = 1.0 / t;
    let inc = |x: f64| g.cdf(x + h) - g.cdf(x);
    let (mut best, mut at) = (f64::NEG_INFINITY, grid.first().copied().unwrap_or(0.0));
    for x in grid {
        let v = inc(*x);
        if v > best {
            best = v;
            at = *x;
        }
    }
    let lo = grid.first().copied().unwrap_or(0.0) - h;
    let hi = grid.last().copied().unwrap_or(0.0);
    for a in g.atoms(lo, hi + h) {
        best = best.max(inc(a)).max(inc(a - h)).max(g.cdf_left(a + h) - g.cdf_left(a));
    }
    if g.is_continuous() && grid.len() > 2 {
        let step = grid[1] - grid[0];
        let (_, v) = golden_min(|x| -inc(x), at - step, at + step, 1e-12);
        best = best.max(-v);
    }
    Ok(best.max(0.0))
}

/// `∫_{-T}^{T} |f(t) - g(t)|/|t| dt`, with the value at 0 filled by
/// `|μ_F - μ_G|`.
pub fn cf_integral(pair: &DistributionPair, t_max: f64) -> Result<f64> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidInput(format!("T must be positive, got {t_max}")));
    }
    let diff = |t: f64| (pair.f.cf(t) - pair.g.cf(t)).norm() / t;
    let probes = [1e-4, 1e-6, 1e-8].map(diff);
    let (Some(mf), Some(mg)) = (pair.f.mean(), pair.g.mean()) else {
        if probes[2] > 10.0 * probes[0].max(1e-300) {
            return Err(Error::SingularAtZero(probes[2]));
        }
        return Err(Error::SingularAtZero(f64::INFINITY));
    };
    let at_zero = (mf - mg).abs();
    let integrand = |t: f64| if t == 0.0 { at_zero } else { diff(t) };
    let edges = linspace(0.0, t_max, 65);
    let q = adaptive_quad(integrand, &edges, 1e-11, 1e-11, 20_000);
    Ok(2.0 * q.value)
}

/// `10 𝔊 + (1/5) ∫_{-T}^{T} |f - g|/|t|`.
pub fn be_rhs(pair: &DistributionPair, t: f64, grid: &[f64]) -> Result<f64> {
    Ok(10.0 * modulus_term(pair, t, grid)? + 0.2 * cf_integral(pair, t)?)
}

/// `max|φ̂|`, `∫yφ`, `∫|φ|` of the explicit kernel, computed once.
pub fn kernel_constants() -> KernelConstants {
    static K: OnceLock<KernelConstants> = OnceLock::new();
    *K.get_or_init(|| berry_esseen_phi().kernel_constants())
}

/// `𝔊 (∫yφ + ∫|φ|) + (max|φ̂|/2π) ∫_{-T}^{T} |f - g|/|t|`.
pub fn kernel_rhs(pair: &DistributionPair, t: f64, grid: &[f64], k: &KernelConstants) -> Result<f64> {
    Ok(modulus_term(pair, t, grid)? * (k.first_moment + k.l1) + k.max_hat / (2.0 * PI) * cf_integral(pair, t)?)
}

/// One `T` of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub sup_diff: f64,
    pub modulus: f64,
    pub integral: f64,
    pub rhs: f64,
    pub kernel_rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeReport {
    pub label: String,
    pub rows: Vec<BeRow>,
}

/// Evaluates both sides for every `T` and fails with `InequalityViolated`
/// if either right-hand side drops below `sup_diff` by more than 1e-6.
pub fn verify_be(pair: &DistributionPair, ts: &[f64], grid: &[f64]) -> Result<BeReport> {
    pair.check(grid)?;
    let k = kernel_constants();
    let lhs = sup_diff(pair, grid);
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let modulus = modulus_term(pair, t, grid)?;
        let integral = cf_integral(pair, t)?;
        let rhs = 10.0 * modulus + 0.2 * integral;
        let kernel = modulus * (k.first_moment + k.l1) + k.max_hat / (2.0 * PI) * integral;
        if lhs > rhs.min(kernel) + BE_SLACK {
            return Err(Error::InequalityViolated(format!(
                "{}: T = {t}, sup|F-G| = {lhs} exceeds rhs = {rhs} (kernel route {kernel})",
                pair.label
            )));
        }
        rows.push(BeRow { t, sup_diff: lhs, modulus, integral, rhs, kernel_rhs: kernel, margin: rhs - lhs });
    }
    Ok(BeReport { label: pair.label.clone(), rows })
}

/// The bundled corpus: binomial, Poisson, Irwin–Hall and Student t laws
/// against the matching normal.
pub fn corpus() -> Vec<DistributionPair> {
    let std_normal = || Distribution::Normal { mean: 0.0, sd: 1.0 };
    let mut out = Vec::new();
    for (n, p) in [(10, 0.5), (20, 0.3), (50, 0.3), (100, 0.5), (200, 0.1), (400, 0.3)] {
        out.push(DistributionPair::new(Distribution::Binomial { n, p, standardized: true }, std_normal()));
    }
    for lambda in [1.0f64, 4.0, 10.0, 25.0, 100.0] {
        out.push(DistributionPair::new(
            Distribution::Poisson { lambda, standardized: false },
            Distribution::Normal { mean: lambda, sd: lambda.sqrt() },
        ));
    }
    for n in [1, 2, 3, 6, 12] {
        out.push(DistributionPair::new(Distribution::IrwinHall { n, standardized: true }, std_normal()));
    }
    for nu in [3, 5, 7, 9] {
        out.push(DistributionPair::new(Distribution::StudentT { nu }, std_normal()));
    }
    out
}

/// Probability mass of a lattice law at integer `k`.
pub fn lattice_pmf(d: &Distribution, k: u64) -> Option<f64> {
    match *d {
        Distribution::Binomial { n, p, .. } => Some(Binomial::new(p, n).ok()?.pmf(k)),
        Distribution::Poisson { lambda, .. } => Some(Poisson::new(lambda).ok()?.pmf(k)),
        _ => None,
    }
}
