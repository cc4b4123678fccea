//! Band-limited test functions with one-sided sign patterns.
//!
//! The pipeline builds a compactly supported mollifier `ψ` with stretched
//! exponential Fourier decay, a normalized box chain `u_n`, and from them the
//! sequence `φ_n` whose Fourier transform is supported in `[-1/2, 1/2]`,
//! whose derivatives grow at most like `C·124^j·n^j`, and for which `y·φ_n(y)`
//! is non-negative. It also provides the explicit kernel used for the
//! Berry–Esseen inequality.
//!
//! Fourier convention: `φ̂(t) = ∫ e^{-itx} φ(x) dx`.

use crate::error::{Error, Result};
use crate::numerics::{fit_line, geomspace, gl20};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

/// Default frequency half-width `ε`.
pub const EPSILON: f64 = 1.0 / 24.0;
/// Admissible growth base of the derivative bounds, `(π + 2)/ε < 124`.
pub const A_ADMISSIBLE: f64 = 124.0;
/// Largest FFT length used anywhere in the module.
pub const MAX_FFT: usize = 1 << 20;
/// Below this argument `ln sinc` is summed as a power series.
const SERIES_CUTOFF: f64 = 0.05;
/// Width of the cached quadrature panels in units of the sample step.
const PANEL_WIDTH: f64 = 2.0;

/// `sin(u)/u` with the removable singularity filled.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// A majorant of `|sinc|`: exact below 1, `1/|u|` above.
fn sinc_envelope(u: f64) -> f64 {
    let u = u.abs();
    if u < 1.0 {
        sinc(u)
    } else {
        1.0 / u
    }
}

/// `Σ_{j>J} j^{-s}` for `s > 1` (direct sum plus Euler–Maclaurin remainder).
fn zeta_tail(s: f64, j: usize) -> f64 {
    let l = j + 20 + s.ceil() as usize;
    let direct: f64 = (j + 1..l).map(|k| (k as f64).powf(-s)).sum();
    let lf = l as f64;
    direct + lf.powf(1.0 - s) / (s - 1.0) + 0.5 * lf.powf(-s) + s * lf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * lf.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * lf.powf(-s - 5.0) / 30240.0
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// `Σ_m v_m e^{∓2πi(m-N/2)(k-N/2)/N}` for every `k`: the discrete transform
/// on grids centred at index `N/2`. `N` must be a multiple of 4.
fn centered_fft(mut v: Vec<Complex64>, inverse: bool) -> Vec<Complex64> {
    let n = v.len();
    debug_assert!(n % 4 == 0);
    for (m, z) in v.iter_mut().enumerate() {
        if m % 2 == 1 {
            *z = -*z;
        }
    }
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    fft.process(&mut v);
    for (k, z) in v.iter_mut().enumerate() {
        if k % 2 == 1 {
            *z = -*z;
        }
    }
    v
}

fn fft_len(half_width: f64, step: f64) -> usize {
    ((2.0 * half_width / step).ceil() as usize).next_power_of_two().max(1024)
}

/// The normalized `(n+1)`-fold box convolution `u_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxChain {
    pub n: usize,
    pub epsilon: f64,
    /// Half-widths `a_{0,n}, ..., a_{n,n}`.
    pub widths: Vec<f64>,
}

/// Half-widths `a_{0,n} = a_{1,n} = ε/4` and `a_{j,n} = ε/(2(n-1))` for `j ≥ 2`.
pub fn build_box_chain(n: usize, epsilon: f64) -> Result<BoxChain> {
    if n == 0 || !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("box chain needs n >= 1 and ε > 0, got n = {n}, ε = {epsilon}")));
    }
    let mut widths = vec![epsilon / 4.0, epsilon / 4.0];
    widths.extend(std::iter::repeat_n(epsilon / (2.0 * (n as f64 - 1.0)), n.saturating_sub(1)));
    Ok(BoxChain { n, epsilon, widths })
}

impl BoxChain {
    /// `û_n(t) = ∏ sin(a_j t)/(a_j t)`.
    pub fn hat(&self, t: f64) -> f64 {
        self.widths.iter().map(|a| sinc(a * t)).product()
    }

    pub fn ln_envelope(&self, t: f64) -> f64 {
        self.widths.iter().map(|a| sinc_envelope(a * t).ln()).sum()
    }

    /// Support radius `Σ a_j`.
    pub fn support(&self) -> f64 {
        self.widths.iter().sum()
    }

    /// `(4/ε)(2/ε)^j (n-1)^{j-1}`, the bound on `|u_n^{(j)}|` for `1 ≤ j ≤ n-1`.
    pub fn derivative_bound(&self, j: usize) -> f64 {
        let e = self.epsilon;
        (4.0 / e) * (2.0 / e).powi(j as i32) * ((self.n as f64) - 1.0).powi(j as i32 - 1)
    }

    /// `1/(2 a_0 ⋯ a_j)`, the sharper intermediate bound.
    pub fn product_bound(&self, j: usize) -> f64 {
        1.0 / (2.0 * self.widths[..=j].iter().product::<f64>())
    }

    /// `sup_x |u_n^{(j)}(x)|` by spectral differentiation: `(it)^j û_n(t)` is
    /// sampled on `|t| ≤ t_max` with step `dt` and transformed back.
    pub fn derivative_sup(&self, j: usize, t_max: f64, dt: f64) -> Result<f64> {
        let n = fft_len(t_max, dt);
        if n > MAX_FFT {
            return Err(Error::GridTooCoarse(format!("{n} frequency samples exceed the cap {MAX_FFT}")));
        }
        let dx = 2.0 * PI / (n as f64 * dt);
        let min_a = self.widths.iter().copied().fold(f64::INFINITY, f64::min);
        if dx > min_a / 16.0 {
            return Err(Error::GridTooCoarse(format!(
                "space step {dx:.3e} gives fewer than 16 samples per width {min_a:.3e}"
            )));
        }
        if 2.0 * PI / dt < 3.0 * self.support() {
            return Err(Error::GridTooCoarse(format!("frequency step {dt} aliases the support")));
        }
        let v: Vec<Complex64> = (0..n)
            .map(|m| {
                let t = (m as f64 - (n / 2) as f64) * dt;
                Complex64::new(0.0, t).powu(j as u32) * self.hat(t)
            })
            .collect();
        let out = centered_fft(v, true);
        let scale = dt / (2.0 * PI);
        Ok(out.iter().map(|z| (z.re * scale).abs()).fold(0.0, f64::max))
    }
}

/// Measured properties of a mollifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierReport {
    /// Slope of `ln(-ln env ψ̂)` against `ln y` over `[10², 10⁴]`.
    pub fitted_exponent: f64,
    /// The same slope over the last decade `[10³, 10⁴]`.
    pub last_decade_exponent: f64,
    /// Fitted `c` and `C` in `|ψ̂(y)| ≤ C exp(-c|y|^γ)`.
    pub decay_c: f64,
    pub decay_big_c: f64,
    /// `∫ψ` from the space samples.
    pub mass: f64,
    /// `min ψ` on `(-2ε, 2ε)`.
    pub core_min: f64,
    /// Most negative sample of `ψ`, relative to `max ψ`.
    pub negative_part: f64,
    /// `max |ψ|` on `|t| ≥ 1/4`, relative to `max ψ`.
    pub support_leak: f64,
}

/// `ψ = 3 ψ_c(3·)` with `ψ_c = (⊛_j χ_{[-a_j, a_j]}/(2a_j)) ∗ χ_{[-1/2, 1/2]}`,
/// `a_j = a₀ j^{-1/γ}` and `Σ a_j = 1/8`.
///
/// `ψ` is non-negative, supported in `[-5/24, 5/24]`, has unit mass, equals 3
/// on `[-1/8, 1/8]`, and `ψ̂(y) = sinc(y/6)·∏ sinc(a_j y/3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub gamma: f64,
    pub a0: f64,
    pub report: Option<MollifierReport>,
}

impl Mollifier {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let p = 1.0 / gamma;
        let zeta = 1.0 + zeta_tail(p, 1);
        Ok(Mollifier { gamma, a0: 0.125 / zeta, report: None })
    }

    pub fn width(&self, j: usize) -> f64 {
        self.a0 * (j as f64).powf(-1.0 / self.gamma)
    }

    /// `(ln |chain|, sign)` of `∏_j sinc(a_j y/3)` (or of its envelope).
    fn chain(&self, y: f64, envelope: bool) -> (f64, f64) {
        let p = 1.0 / self.gamma;
        let u0 = self.a0 * y.abs() / 3.0;
        let jcut = if u0 <= SERIES_CUTOFF {
            0
        } else {
            (u0 / SERIES_CUTOFF).powf(self.gamma).ceil() as usize
        };
        let (mut ln, mut sign) = (0.0, 1.0);
        for j in 1..=jcut {
            let u = u0 * (j as f64).powf(-p);
            let v = if envelope { sinc_envelope(u) } else { sinc(u) };
            if v < 0.0 {
                sign = -sign;
            }
            ln += v.abs().ln();
        }
        if u0 > 0.0 {
            let u2 = u0 * u0;
            ln -= u2 * zeta_tail(2.0 * p, jcut) / 6.0
                + u2 * u2 * zeta_tail(4.0 * p, jcut) / 180.0
                + u2 * u2 * u2 * zeta_tail(6.0 * p, jcut) / 2835.0;
        }
        (ln, sign)
    }

    pub fn hat(&self, y: f64) -> f64 {
        let (ln, sign) = self.chain(y, false);
        sign * ln.exp() * sinc(y / 6.0)
    }

    /// `ln` of a majorant of `|ψ̂(y)|`.
    pub fn ln_envelope(&self, y: f64) -> f64 {
        self.chain(y, true).0 + sinc_envelope(y / 6.0).ln()
    }

    /// Samples of `ψ` on a uniform grid, by inverse transform of `ψ̂`.
    pub fn space_samples(&self) -> (Vec<f64>, Vec<f64>) {
        let dy = 4.0;
        let y_max = geomspace(1.0, 1e8, 600)
            .into_iter()
            .find(|y| self.ln_envelope(*y) < -45.0)
            .unwrap_or(1e8);
        let n = fft_len(y_max, dy).min(MAX_FFT);
        let v: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|m| Complex64::new(self.hat((m as f64 - (n / 2) as f64) * dy), 0.0))
            .collect();
        let out = centered_fft(v, true);
        let dx = 2.0 * PI / (n as f64 * dy);
        let x = (0..n).map(|k| (k as f64 - (n / 2) as f64) * dx).collect();
        let vals = out.iter().map(|z| z.re * dy / (2.0 * PI)).collect();
        (x, vals)
    }

    fn measure(&self, epsilon: f64) -> Result<MollifierReport> {
        let slope_over = |a: f64, b: f64| -> Result<(f64, Vec<f64>, Vec<f64>)> {
            let ys = geomspace(a, b, 60);
            let mut lx = Vec::new();
            let mut ly = Vec::new();
            for y in &ys {
                let d = -self.ln_envelope(*y);
                if !(d > 0.0) {
                    return Err(Error::DecayNotAchieved { fitted: 0.0, required: self.gamma - 0.05 });
                }
                lx.push(y.ln());
                ly.push(d.ln());
            }
            Ok((fit_line(&lx, &ly).slope, ys, ly))
        };
        let (fitted_exponent, ys, ly) = slope_over(1e2, 1e4)?;
        let (last_decade_exponent, _, _) = slope_over(1e3, 1e4)?;
        let yg: Vec<f64> = ys.iter().map(|y| y.powf(self.gamma)).collect();
        let dl: Vec<f64> = ly.iter().map(|v| v.exp()).collect();
        let decay_c = fit_line(&yg, &dl).slope;
        let decay_big_c = geomspace(1e-2, 1e4, 400)
            .iter()
            .map(|y| (self.ln_envelope(*y) + decay_c * y.powf(self.gamma)).exp())
            .fold(1.0, f64::max);
        let (x, vals) = self.space_samples();
        let dx = x[1] - x[0];
        let peak = vals.iter().copied().fold(0.0, f64::max);
        let mass = vals.iter().sum::<f64>() * dx;
        let core_min = x
            .iter()
            .zip(&vals)
            .filter(|(t, _)| t.abs() < 2.0 * epsilon)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        let negative_part = vals.iter().copied().fold(0.0, f64::min) / peak;
        let support_leak = x
            .iter()
            .zip(&vals)
            .filter(|(t, _)| t.abs() >= 0.25)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
            / peak;
        Ok(MollifierReport {
            fitted_exponent,
            last_decade_exponent,
            decay_c,
            decay_big_c,
            mass,
            core_min,
            negative_part,
            support_leak,
        })
    }
}

/// Builds the mollifier for decay exponent `gamma` and checks its properties.
pub fn build_mollifier(gamma: f64, epsilon: f64) -> Result<Mollifier> {
    check_gamma(gamma)?;
    if !(epsilon > 0.0 && epsilon <= 1.0 / 16.0) {
        return Err(Error::InvalidInput(format!("ε must lie in (0, 1/16], got {epsilon}")));
    }
    let mut m = Mollifier::new(gamma)?;
    let report = m.measure(epsilon)?;
    if report.last_decade_exponent < gamma - 0.05 {
        return Err(Error::DecayNotAchieved {
            fitted: report.last_decade_exponent,
            required: gamma - 0.05,
        });
    }
    m.report = Some(report);
    Ok(m)
}

/// Which normalization produced `φ_n` from `φ₂ = |φ₁|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `c ≥ 1/2`: `φ(y) = y φ₂(y)/c`.
    Positive,
    /// `c ≤ -1/2`: `φ(y) = y φ₂(-y)/|c|`.
    Negative,
    /// `|c| < 1/2`: `φ(y) = y φ₂(y - π/ε)/d`.
    Shifted,
    /// `φ = φ₂/∫φ₂`, non-negative and even.
    Even,
}

/// How `φ` is obtained from `φ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Shape {
    /// `φ(y) = y·φ₂(±y - shift)/norm`.
    Moment { reflect: bool, shift: f64, norm: f64 },
    /// `φ(y) = φ₂(y)/norm`.
    Even { norm: f64 },
}

#[derive(Debug, Clone)]
enum Evaluator {
    Mollified { mollifier: Mollifier, chain: BoxChain, shape: Shape },
    BerryEsseen,
    Sampled,
}

/// `φ₁(y) = ψ̂(y)·û(y)/(2π)`; real and even.
fn phi1(m: &Mollifier, c: &BoxChain, y: f64) -> f64 {
    m.hat(y) * c.hat(y) / (2.0 * PI)
}

fn phi1_ln_envelope(m: &Mollifier, c: &BoxChain, y: f64) -> f64 {
    m.ln_envelope(y) + c.ln_envelope(y) - (2.0 * PI).ln()
}

const BE_SHIFT: f64 = 3.0 / (2.0 * PI);

/// `x sin⁴(x/4 - 3/(2π)) / (16 (x/4 - 3/(2π))⁴)`.
pub fn berry_esseen_kernel(x: f64) -> f64 {
    let s = sinc(x / 4.0 - BE_SHIFT);
    x * s * s * s * s / 16.0
}

/// Construction trace and fitted constants of a [`TestFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFnMeta {
    pub kind: String,
    /// Box half-widths `a_{j,n+2}` of the chain actually used.
    pub widths: Vec<f64>,
    /// Exponent of the mollifier; slightly above `gamma` so that `φ_n`
    /// decays faster than `exp(-|y|^gamma)`.
    pub gamma_psi: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub integral_phi2: Option<f64>,
    pub branch: Option<Branch>,
    pub shift: f64,
    /// `max |φ(x)| e^{|x|^γ}` over the grid.
    pub decay_constant: f64,
    /// `max_{j ≤ n, |t| ≤ 1} |φ̂^{(j)}(t)| / (124 n)^j`.
    pub derivative_constant: Option<f64>,
    /// Bound on `∫|φ|` outside the sampled window.
    pub tail_bound: f64,
}

/// Paired space and frequency samples of one test function.
///
/// Space samples sit at `x_k = (k - N/2)·h`; frequency samples at
/// `t_k = (k - N/2)·2π/(N h)`. Since every function built here is band-limited
/// with radius below `π/h`, the trapezoid sums over the space samples are
/// exact up to truncation of the window.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub n: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub h: f64,
    pub x_grid: Vec<f64>,
    pub phi_vals: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub phihat_vals: Vec<Complex64>,
    pub bandwidth: f64,
    pub meta: TestFnMeta,
    evaluator: Evaluator,
    mirror: bool,
    nodes: OnceLock<Vec<(f64, f64)>>,
}

/// Smallest radius beyond which `ln_w` stays `drop` below its peak.
fn tail_radius<F: Fn(f64) -> f64 + Sync>(ln_w: F, drop: f64) -> f64 {
    let zs = geomspace(1.0, 1e6, 1200);
    let w: Vec<f64> = zs.par_iter().map(|z| ln_w(*z)).collect();
    let peak = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut r = zs[zs.len() - 1];
    for (z, v) in zs.iter().zip(&w).rev() {
        if *v >= peak - drop {
            break;
        }
        r = *z;
    }
    r
}

impl TestFunction {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n: usize,
        epsilon: f64,
        gamma: f64,
        h: f64,
        phi_vals: Vec<f64>,
        bandwidth: f64,
        meta: TestFnMeta,
        evaluator: Evaluator,
    ) -> Self {
        let len = phi_vals.len();
        let half = (len / 2) as f64;
        let x_grid: Vec<f64> = (0..len).map(|k| (k as f64 - half) * h).collect();
        let dt = 2.0 * PI / (len as f64 * h);
        let t_grid: Vec<f64> = (0..len).map(|k| (k as f64 - half) * dt).collect();
        let v = phi_vals.iter().map(|p| Complex64::new(*p, 0.0)).collect();
        let phihat_vals = centered_fft(v, false).into_iter().map(|z| z * h).collect();
        let mut tf = TestFunction {
            n,
            epsilon,
            gamma,
            h,
            x_grid,
            phi_vals,
            t_grid,
            phihat_vals,
            bandwidth,
            meta,
            evaluator,
            mirror: false,
            nodes: OnceLock::new(),
        };
        tf.meta.decay_constant = tf.decay_constant(gamma);
        let edge = tf.phi_vals[0].abs().max(tf.phi_vals[len - 1].abs());
        tf.meta.tail_bound = edge * tf.x_grid[len - 1];
        tf
    }

    /// A test function given only by samples at `(k - N/2)·h`; off-grid values
    /// use truncated Shannon interpolation.
    pub fn from_samples(n: usize, gamma: f64, h: f64, vals: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if vals.len() < 8 || vals.len() % 4 != 0 || !(h > 0.0) {
            return Err(Error::InvalidInput("samples need a positive step and a length divisible by 4".into()));
        }
        let meta = TestFnMeta {
            kind: "samples".into(),
            widths: vec![],
            gamma_psi: None,
            c: None,
            d: None,
            integral_phi2: None,
            branch: None,
            shift: 0.0,
            decay_constant: 0.0,
            derivative_constant: None,
            tail_bound: 0.0,
        };
        let mut tf = Self::assemble(n, EPSILON, gamma, h, vals, bandwidth, meta, Evaluator::Sampled);
        tf.meta.derivative_constant = Some(tf.derivative_constant());
        Ok(tf)
    }

    pub fn len(&self) -> usize {
        self.x_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_grid.is_empty()
    }

    /// `φ(y)` anywhere on the real line.
    pub fn eval(&self, y: f64) -> f64 {
        let y = if self.mirror && !matches!(self.evaluator, Evaluator::Sampled) { -y } else { y };
        match &self.evaluator {
            Evaluator::Mollified { mollifier, chain, shape } => match *shape {
                Shape::Moment { reflect, shift, norm } => {
                    let z = if reflect { -y } else { y } - shift;
                    let p = phi1(mollifier, chain, z);
                    y * p * p / norm
                }
                Shape::Even { norm } => {
                    let p = phi1(mollifier, chain, y);
                    p * p / norm
                }
            },
            Evaluator::BerryEsseen => berry_esseen_kernel(y),
            Evaluator::Sampled => {
                let len = self.len() as isize;
                let pos = y / self.h + (self.len() / 2) as f64;
                let k0 = pos.round() as isize;
                let mut acc = 0.0;
                for k in (k0 - 256).max(0)..(k0 + 257).min(len) {
                    acc += self.phi_vals[k as usize] * sinc(PI * (pos - k as f64));
                }
                acc
            }
        }
    }

    /// The reflection `y ↦ φ(-y)`.
    pub fn reflected(&self) -> TestFunction {
        let len = self.len();
        let edge = self.eval(-self.x_grid[0]);
        let vals: Vec<f64> = (0..len).map(|k| if k == 0 { edge } else { self.phi_vals[len - k] }).collect();
        let mut tf = Self::assemble(
            self.n,
            self.epsilon,
            self.gamma,
            self.h,
            vals,
            self.bandwidth,
            self.meta.clone(),
            self.evaluator.clone(),
        );
        tf.mirror = !self.mirror;
        tf.meta = self.meta.clone();
        tf
    }

    /// `∫φ` (trapezoid over the samples).
    pub fn integral(&self) -> f64 {
        self.phi_vals.iter().sum::<f64>() * self.h
    }

    /// `min_x x·φ(x)`, relative to `max|φ|`.
    pub fn min_moment_sign(&self) -> f64 {
        let peak = self.phi_vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        self.x_grid
            .iter()
            .zip(&self.phi_vals)
            .map(|(x, p)| x * p)
            .fold(f64::INFINITY, f64::min)
            / peak
    }

    /// Share of `∫|φ̂|²` carried by `|t| > radius`.
    pub fn out_of_band_mass(&self, radius: f64) -> f64 {
        let (mut inside, mut outside) = (0.0, 0.0);
        for (t, z) in self.t_grid.iter().zip(&self.phihat_vals) {
            if t.abs() > radius {
                outside += z.norm_sqr();
            } else {
                inside += z.norm_sqr();
            }
        }
        outside / (inside + outside)
    }

    /// `max_x |φ(x)| e^{|x|^γ}` over the samples.
    pub fn decay_constant(&self, gamma: f64) -> f64 {
        self.x_grid
            .iter()
            .zip(&self.phi_vals)
            .map(|(x, p)| p.abs() * x.abs().powf(gamma).exp())
            .fold(0.0, f64::max)
    }

    /// `φ̂(t)` by direct summation over the samples.
    pub fn phihat_at(&self, t: f64) -> Complex64 {
        self.phihat_derivative_at(0, t)
    }

    /// `φ̂^{(j)}(t) = ∫ (-ix)^j φ(x) e^{-itx} dx` by direct summation.
    pub fn phihat_derivative_at(&self, j: usize, t: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, p) in self.x_grid.iter().zip(&self.phi_vals) {
            acc += Complex64::new(0.0, -x).powu(j as u32) * p * Complex64::from_polar(1.0, -t * x);
        }
        acc * self.h
    }

    /// `max_{|t| ≤ radius} |φ̂^{(j)}(t)|` for `j = 0..=jmax`, by spectral
    /// differentiation on the frequency grid.
    pub fn derivative_maxima(&self, jmax: usize, radius: f64) -> Vec<f64> {
        (0..=jmax)
            .into_par_iter()
            .map(|j| {
                let v: Vec<Complex64> = self
                    .x_grid
                    .iter()
                    .zip(&self.phi_vals)
                    .map(|(x, p)| Complex64::new(0.0, -x).powu(j as u32) * p)
                    .collect();
                centered_fft(v, false)
                    .iter()
                    .zip(&self.t_grid)
                    .filter(|(_, t)| t.abs() <= radius)
                    .map(|(z, _)| z.norm() * self.h)
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// `max_{j ≤ n, |t| ≤ 1} |φ̂^{(j)}(t)| / (124 n)^j`.
    pub fn derivative_constant(&self) -> f64 {
        let base = A_ADMISSIBLE * self.n as f64;
        self.derivative_maxima(self.n, 1.0)
            .iter()
            .enumerate()
            .map(|(j, v)| v / base.powi(j as i32))
            .fold(0.0, f64::max)
    }

    /// Gauss-Legendre nodes on panels of width `2h` across the window, with
    /// the weights already multiplied by `φ`.
    fn quad_nodes(&self) -> &[(f64, f64)] {
        self.nodes.get_or_init(|| {
            let (gx, gw) = gl20();
            let (lo, hi) = (self.x_grid[0], self.x_grid[self.len() - 1]);
            let width = PANEL_WIDTH * self.h;
            let panels = ((hi - lo) / width).ceil() as usize;
            (0..panels)
                .into_par_iter()
                .flat_map_iter(|p| {
                    let a = lo + p as f64 * width;
                    let b = (a + width).min(hi);
                    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
                    gx.iter()
                        .zip(gw)
                        .map(|(x, w)| {
                            let u = c + r * x;
                            (u, w * r * self.eval(u))
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        })
    }

    /// `∫ g(u) φ(u) du` over the window. `breaks` lists the points where `g`
    /// jumps or kinks; panels containing one are split there.
    pub fn pair_integral<G: Fn(f64) -> f64>(&self, g: G, breaks: &[f64]) -> f64 {
        let nodes = self.quad_nodes();
        let lo = self.x_grid[0];
        let width = PANEL_WIDTH * self.h;
        let mut split: Vec<usize> = breaks
            .iter()
            .filter(|b| **b > lo && **b < self.x_grid[self.len() - 1])
            .map(|b| ((b - lo) / width).floor() as usize)
            .collect();
        split.sort_unstable();
        split.dedup();
        let mut acc = 0.0;
        for (p, chunk) in nodes.chunks(20).enumerate() {
            if split.binary_search(&p).is_ok() {
                let a = lo + p as f64 * width;
                let b = (a + width).min(self.x_grid[self.len() - 1]);
                let mut edges = vec![a, b];
                edges.extend(breaks.iter().copied().filter(|v| *v > a && *v < b));
                edges.sort_by(f64::total_cmp);
                acc += crate::numerics::gl_panels(|u| g(u) * self.eval(u), &edges);
            } else {
                acc += chunk.iter().map(|(u, wp)| g(*u) * wp).sum::<f64>();
            }
        }
        acc
    }

    /// `∫ w(y) |φ(y)| dy`. The only sign change of `φ` sits at a panel edge
    /// (`y = 0` lies on the panel lattice because `N` is a multiple of 4).
    pub fn abs_integral<W: Fn(f64) -> f64>(&self, w: W) -> f64 {
        self.quad_nodes().iter().map(|(u, wp)| w(*u) * wp.abs()).sum()
    }

    /// `∫ |y|^m e^{|y|^α} |φ(y)| dy`.
    pub fn weighted_l1(&self, m: usize, alpha: f64) -> f64 {
        self.abs_integral(|u| u.abs().powi(m as i32) * u.abs().powf(alpha).exp())
    }

    /// `(max|φ̂|, ∫yφ, ∫|φ|)`.
    pub fn kernel_constants(&self) -> KernelConstants {
        KernelConstants {
            max_hat: self.phihat_vals.iter().map(|z| z.norm()).fold(0.0, f64::max),
            first_moment: self.pair_integral(|u| u, &[]),
            l1: self.abs_integral(|_| 1.0),
        }
    }

    /// Writes `x,phi` and `t,re,im` CSV files plus a JSON metadata sidecar.
    pub fn write_files(&self, space: &Path, freq: &Path, meta: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        let mut w = csv::Writer::from_path(space).map_err(csv_err)?;
        w.write_record(["x", "phi"]).map_err(csv_err)?;
        for (x, p) in self.x_grid.iter().zip(&self.phi_vals) {
            w.write_record([format!("{x:e}"), format!("{p:e}")]).map_err(csv_err)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(freq).map_err(csv_err)?;
        w.write_record(["t", "re", "im"]).map_err(csv_err)?;
        for (t, z) in self.t_grid.iter().zip(&self.phihat_vals) {
            w.write_record([format!("{t:e}"), format!("{:e}", z.re), format!("{:e}", z.im)])
                .map_err(csv_err)?;
        }
        w.flush()?;
        let sidecar = serde_json::json!({
            "n": self.n,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "h": self.h,
            "bandwidth": self.bandwidth,
            "meta": self.meta,
        });
        std::fs::write(meta, serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Io(e.to_string()))?)?;
        Ok(())
    }

    /// Reads a space-sample CSV written by [`TestFunction::write_files`].
    pub fn read_space_csv(path: &Path, n: usize, gamma: f64, bandwidth: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let mut xs = Vec::new();
        let mut vals = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad field {i} in {rec:?}")))
            };
            xs.push(parse(0)?);
            vals.push(parse(1)?);
        }
        if xs.len() < 8 {
            return Err(Error::Parse("too few samples".into()));
        }
        let h = xs[1] - xs[0];
        Self::from_samples(n, gamma, h, vals, bandwidth)
    }
}

/// The three constants entering the Berry–Esseen kernel route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub max_hat: f64,
    pub first_moment: f64,
    pub l1: f64,
}

struct Phi2Samples {
    mollifier: Mollifier,
    chain: BoxChain,
    n_fft: usize,
    gamma_psi: f64,
}

fn phi2_setup(n: usize, gamma: f64, epsilon: f64, shift: f64, power: f64) -> Result<Phi2Samples> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let gamma_psi = 0.5 * (1.0 + gamma);
    let mollifier = Mollifier::new(gamma_psi)?;
    let chain = build_box_chain(n + 2, epsilon)?;
    let tail = tail_radius(
        |z| power * (1.0 + z + shift).ln() + 2.0 * phi1_ln_envelope(&mollifier, &chain, z),
        42.0,
    );
    let n_fft = fft_len(shift + tail, 1.0);
    if n_fft > MAX_FFT {
        return Err(Error::GridTooCoarse(format!("window {} needs {n_fft} samples", shift + tail)));
    }
    Ok(Phi2Samples { mollifier, chain, n_fft, gamma_psi })
}

/// Builds `φ_n = φ_{3,n+2}` with `ε = 1/24`.
pub fn build_phi_n(n: usize, gamma: f64) -> Result<TestFunction> {
    build_phi_n_with(n, gamma, EPSILON)
}

/// Builds `φ_n` for a general `ε ≤ 1/16`.
pub fn build_phi_n_with(n: usize, gamma: f64, epsilon: f64) -> Result<TestFunction> {
    if !(epsilon > 0.0 && epsilon <= 1.0 / 16.0) {
        return Err(Error::InvalidInput(format!("ε must lie in (0, 1/16], got {epsilon}")));
    }
    let shift = PI / epsilon;
    let s = phi2_setup(n, gamma, epsilon, shift, n as f64 + 4.0)?;
    let h = 1.0;
    let len = s.n_fft;
    let xs: Vec<f64> = (0..len).map(|k| (k as f64 - (len / 2) as f64) * h).collect();
    let p2: Vec<f64> = xs
        .par_iter()
        .map(|x| phi1(&s.mollifier, &s.chain, *x).powi(2))
        .collect();
    let p2_shifted: Vec<f64> = xs
        .par_iter()
        .map(|x| phi1(&s.mollifier, &s.chain, x - shift).powi(2))
        .collect();
    let integral_phi2 = p2.iter().sum::<f64>() * h;
    let c = xs.iter().zip(&p2).map(|(x, v)| x * v).sum::<f64>() * h;
    let d = xs.iter().zip(&p2_shifted).map(|(x, v)| x * v).sum::<f64>() * h;
    let (branch, shape, vals): (Branch, Shape, Vec<f64>) = if c >= 0.5 {
        let vals = xs.iter().zip(&p2).map(|(x, v)| x * v / c).collect();
        (Branch::Positive, Shape::Moment { reflect: false, shift: 0.0, norm: c }, vals)
    } else if c <= -0.5 {
        let vals = (0..len)
            .map(|k| {
                // φ₂ is sampled on a grid symmetric up to its first point.
                let mirror = if k == 0 { phi1(&s.mollifier, &s.chain, -xs[0]).powi(2) } else { p2[len - k] };
                xs[k] * mirror / c.abs()
            })
            .collect();
        (Branch::Negative, Shape::Moment { reflect: true, shift: 0.0, norm: c.abs() }, vals)
    } else {
        if d <= 0.5 {
            return Err(Error::BranchDegenerate { c, d });
        }
        let vals = xs.iter().zip(&p2_shifted).map(|(x, v)| x * v / d).collect();
        (Branch::Shifted, Shape::Moment { reflect: false, shift, norm: d }, vals)
    };
    let meta = TestFnMeta {
        kind: "phi_n".into(),
        widths: s.chain.widths.clone(),
        gamma_psi: Some(s.gamma_psi),
        c: Some(c),
        d: Some(d),
        integral_phi2: Some(integral_phi2),
        branch: Some(branch),
        shift: if branch == Branch::Shifted { shift } else { 0.0 },
        decay_constant: 0.0,
        derivative_constant: None,
        tail_bound: 0.0,
    };
    let evaluator = Evaluator::Mollified { mollifier: s.mollifier, chain: s.chain, shape };
    let mut tf = TestFunction::assemble(n, epsilon, gamma, h, vals, 0.5, meta, evaluator);
    tf.meta.derivative_constant = Some(tf.derivative_constant());
    Ok(tf)
}

/// The non-negative even companion `φ₂/∫φ₂` (built from the same chain as
/// `φ_n`), suitable for even-order Tauberian conditions.
pub fn build_even_phi(n: usize, gamma: f64) -> Result<TestFunction> {
    let s = phi2_setup(n, gamma, EPSILON, 0.0, n as f64 + 4.0)?;
    let h = 1.0;
    let len = s.n_fft;
    let xs: Vec<f64> = (0..len).map(|k| (k as f64 - (len / 2) as f64) * h).collect();
    let p2: Vec<f64> = xs
        .par_iter()
        .map(|x| phi1(&s.mollifier, &s.chain, *x).powi(2))
        .collect();
    let integral_phi2 = p2.iter().sum::<f64>() * h;
    let vals = p2.iter().map(|v| v / integral_phi2).collect();
    let meta = TestFnMeta {
        kind: "even".into(),
        widths: s.chain.widths.clone(),
        gamma_psi: Some(s.gamma_psi),
        c: None,
        d: None,
        integral_phi2: Some(integral_phi2),
        branch: Some(Branch::Even),
        shift: 0.0,
        decay_constant: 0.0,
        derivative_constant: None,
        tail_bound: 0.0,
    };
    let shape = Shape::Even { norm: integral_phi2 };
    let evaluator = Evaluator::Mollified { mollifier: s.mollifier, chain: s.chain, shape };
    let mut tf = TestFunction::assemble(n, EPSILON, gamma, h, vals, 0.5, meta, evaluator);
    tf.meta.derivative_constant = Some(tf.derivative_constant());
    Ok(tf)
}

/// The explicit Berry–Esseen kernel sampled with unit step on `|x| ≤ 2¹⁷`.
pub fn berry_esseen_phi() -> TestFunction {
    let len = 1usize << 18;
    let vals: Vec<f64> = (0..len)
        .map(|k| berry_esseen_kernel(k as f64 - (len / 2) as f64))
        .collect();
    let meta = TestFnMeta {
        kind: "berry_esseen".into(),
        widths: vec![0.25; 4],
        gamma_psi: None,
        c: None,
        d: None,
        integral_phi2: None,
        branch: None,
        shift: BE_SHIFT,
        decay_constant: 0.0,
        derivative_constant: None,
        tail_bound: 0.0,
    };
    let mut tf = TestFunction::assemble(1, 0.25, 0.0, 1.0, vals, 1.0, meta, Evaluator::BerryEsseen);
    // |φ| ≤ 16/|x|³ asymptotically: both tails together carry at most 16/X².
    let x_max = (len / 2) as f64;
    tf.meta.tail_bound = 16.0 / (x_max * x_max);
    tf
}

/// `(8e/ε)·(π + 2)/ε`: the constant `C` that the construction guarantees in
/// `|φ̂_n^{(j)}| ≤ C·124^j·n^j`.
pub fn guaranteed_derivative_constant(epsilon: f64) -> f64 {
    8.0 * std::f64::consts::E / epsilon * (PI + 2.0) / epsilon
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFnReport {
    pub properties: Vec<PropertyCheck>,
}

impl TestFnReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Checks the five defining properties of the sequence `φ_n`: unit mass,
/// stretched exponential decay, `yφ(y) ≥ 0`, spectral support in `[-1, 1]`
/// and the derivative growth `C·124^j·n^j`.
pub fn verify_testfn(tf: &TestFunction) -> TestFnReport {
    let mut properties = Vec::new();
    let integral = tf.integral();
    properties.push(PropertyCheck {
        name: "unit_integral".into(),
        passed: (integral - 1.0).abs() <= 1e-6,
        measured: integral,
        threshold: 1e-6,
    });

    // Decay: the weighted profile ln|φ| + |x|^γ must peak well inside the window.
    let w: Vec<f64> = tf
        .x_grid
        .iter()
        .zip(&tf.phi_vals)
        .map(|(x, p)| p.abs().ln() + x.abs().powf(tf.gamma))
        .collect();
    let x_edge = tf.x_grid[tf.len() - 1];
    let peak = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let outer = tf
        .x_grid
        .iter()
        .zip(&w)
        .filter(|(x, _)| x.abs() >= 0.5 * x_edge)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let decay = tf.decay_constant(tf.gamma);
    properties.push(PropertyCheck {
        name: "stretched_exponential_decay".into(),
        passed: decay.is_finite() && outer <= peak - 1.0,
        measured: decay,
        threshold: (peak - 1.0).exp(),
    });

    let sign = tf.min_moment_sign();
    properties.push(PropertyCheck {
        name: "one_sided_sign".into(),
        passed: sign >= -1e-9,
        measured: sign,
        threshold: -1e-9,
    });

    let oob = tf.out_of_band_mass(1.0);
    properties.push(PropertyCheck {
        name: "band_limited".into(),
        passed: oob <= 1e-6,
        measured: oob,
        threshold: 1e-6,
    });

    let dc = tf.meta.derivative_constant.unwrap_or_else(|| tf.derivative_constant());
    let limit = guaranteed_derivative_constant(EPSILON);
    properties.push(PropertyCheck {
        name: "derivative_growth".into(),
        passed: dc.is_finite() && dc <= limit,
        measured: dc,
        threshold: limit,
    });
    TestFnReport { properties }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_tail_matches_direct_sums() {
        let head: f64 = (1..=5).map(|k| (k as f64).powi(-2)).sum();
        assert!((zeta_tail(2.0, 5) - (PI * PI / 6.0 - head)).abs() < 1e-13);
        let z4_head: f64 = (1..=40).map(|k| (k as f64).powi(-4)).sum();
        assert!((zeta_tail(4.0, 40) - (PI.powi(4) / 90.0 - z4_head)).abs() < 1e-15);
        let z2 = 1.0 + zeta_tail(2.0, 1);
        assert!((z2 - PI * PI / 6.0).abs() < 1e-13);
    }

    #[test]
    fn chain_series_agrees_with_explicit_product() {
        let m = Mollifier::new(0.5).unwrap();
        for y in [0.3, 7.0, 150.0, 2500.0] {
            let explicit: f64 = (1..200_000).map(|j| sinc(m.width(j) * y / 3.0)).product::<f64>()
                * sinc(y / 6.0);
            let fast = m.hat(y);
            assert!((fast - explicit).abs() <= 1e-9 * explicit.abs().max(1e-300), "y={y}: {fast} vs {explicit}");
        }
    }

    #[test]
    fn mollifier_widths_sum_to_one_eighth() {
        let m = Mollifier::new(0.5).unwrap();
        let s: f64 = (1..100_000).map(|j| m.width(j)).sum::<f64>() + m.a0 / 100_000.0;
        assert!((s - 0.125).abs() < 1e-8);
    }

    #[test]
    fn box_chain_n1_is_a_squared_sinc() {
        let c = build_box_chain(1, EPSILON).unwrap();
        for t in [0.0, 1.0, 30.0, 700.0] {
            let e = sinc(EPSILON * t / 4.0).powi(2);
            assert!((c.hat(t) - e).abs() < 1e-15);
        }
        assert!((c.support() - EPSILON / 2.0).abs() < 1e-15);
    }

    #[test]
    fn box_chain_support_is_epsilon() {
        for n in [2, 5, 17] {
            let c = build_box_chain(n, EPSILON).unwrap();
            assert!((c.support() - EPSILON).abs() < 1e-15);
            assert_eq!(c.hat(0.0), 1.0);
        }
    }

    #[test]
    fn spectral_derivative_rejects_coarse_grids() {
        let c = build_box_chain(8, EPSILON).unwrap();
        assert!(matches!(c.derivative_sup(1, 100.0, 1.0), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn berry_esseen_kernel_has_unit_mass() {
        let tf = berry_esseen_phi();
        assert!((tf.integral() - 1.0).abs() < 1e-6);
        assert!(tf.min_moment_sign() >= 0.0);
        assert!(tf.out_of_band_mass(1.0) < 1e-6);
    }

    #[test]
    fn sampled_evaluator_interpolates() {
        let len = 4096;
        let vals: Vec<f64> = (0..len)
            .map(|k| berry_esseen_kernel(k as f64 - (len / 2) as f64))
            .collect();
        let tf = TestFunction::from_samples(1, 0.0, 1.0, vals, 1.0).unwrap();
        for y in [0.5, 3.3, -7.25] {
            assert!((tf.eval(y) - berry_esseen_kernel(y)).abs() < 1e-4);
        }
    }
}
