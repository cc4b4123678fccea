//! Numerical building blocks shared by all modules: log-domain arithmetic,
//! Gauss quadrature, log-domain integrals of exponentially varying
//! integrands, one-dimensional minimization and least-squares fits.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// `ln Σ e^{v_i}` without overflow; `-inf` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cached 20-point Gauss-Legendre rule.
pub fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Composite Gauss-Legendre integral of `f` over the panels delimited by `edges`.
pub fn gl_panels<F: Fn(f64) -> f64>(f: F, edges: &[f64]) -> f64 {
    let (x, w) = gl20();
    let mut acc = 0.0;
    for e in edges.windows(2) {
        let (a, b) = (e[0], e[1]);
        if b <= a {
            continue;
        }
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        acc += h * x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>();
    }
    acc
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Result of an adaptive quadrature: value and estimated absolute error.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature over the panels in
/// `breaks`. Subdivision stops once the summed error estimate is below
/// `max(abs_tol, rel_tol·|I|)` or after `max_segments` bisections.
pub fn adaptive_quad<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Quad {
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk15(&f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Segment { a: w[0], b: w[1], value: v, err: e });
    }
    let mut count = 0;
    while total_err > abs_tol.max(rel_tol * total.abs()) && count < max_segments {
        let Some(seg) = heap.pop() else { break };
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&f, seg.a, m);
        let (v2, e2) = gk15(&f, m, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment { a: seg.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: seg.b, value: v2, err: e2 });
        count += 1;
    }
    // Re-sum to shed the drift of the running updates.
    let items = heap.into_vec();
    Quad {
        value: items.iter().map(|s| s.value).sum(),
        error: items.iter().map(|s| s.err).sum(),
    }
}

/// Panel edges on [a, b] that shrink geometrically toward both endpoints.
pub fn two_sided_geometric_edges(a: f64, b: f64, first: f64, ratio: f64) -> Vec<f64> {
    if b <= a {
        return vec![a, b];
    }
    let mid = 0.5 * (a + b);
    let mut up = vec![a];
    let mut w = first;
    while *up.last().unwrap() + w < mid {
        let next = up.last().unwrap() + w;
        up.push(next);
        w *= ratio;
    }
    let mut down = vec![b];
    w = first;
    while *down.last().unwrap() - w > mid {
        let next = down.last().unwrap() - w;
        down.push(next);
        w *= ratio;
    }
    up.push(mid);
    up.extend(down.into_iter().rev());
    up
}

/// `ln ∫_a^b exp(g(u)) du` for integrands whose logarithm varies smoothly but
/// may be huge. Panels refine geometrically toward both endpoints, and each
/// panel sum is carried out in the log domain.
pub fn ln_integral_exp<G: Fn(f64) -> f64>(g: G, a: f64, b: f64) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    let (x, w) = gl20();
    let edges = two_sided_geometric_edges(a, b, 0.05, 1.6);
    let mut acc = f64::NEG_INFINITY;
    for e in edges.windows(2) {
        let (lo, hi) = (e[0], e[1]);
        if hi <= lo {
            continue;
        }
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let terms = x.iter().zip(w).map(|(xi, wi)| g(c + h * xi) + (wi * h).ln());
        acc = log_add_exp(acc, log_sum_exp(terms));
    }
    acc
}

/// Golden-section search for a minimum of `f` on [a, b].
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iter = 0;
    while (b - a).abs() > tol * (1.0 + a.abs().max(b.abs())) && iter < 300 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bracketing bisection for a root of the monotone function `f` on [lo, hi].
/// Bisects geometrically when both endpoints are positive and far apart.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> f64 {
    let flo = f(lo);
    let increasing = flo <= 0.0;
    for _ in 0..max_iter {
        let mid = if lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).abs())
        .fold(0.0, f64::max);
    LineFit { slope, intercept, max_residual }
}

/// Fit of `y ≈ -a·base^b + k` (a stretched exponential in log form).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchedFit {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub max_residual: f64,
}

/// Least squares in (a, k) for each exponent b, golden-section over b.
pub fn fit_stretched(base: &[f64], y: &[f64], b_lo: f64, b_hi: f64) -> StretchedFit {
    let rss_at = |b: f64| -> (f64, LineFit) {
        let xb: Vec<f64> = base.iter().map(|v| v.powf(b)).collect();
        let fit = fit_line(&xb, y);
        let rss = xb
            .iter()
            .zip(y)
            .map(|(a, v)| (v - fit.intercept - fit.slope * a).powi(2))
            .sum();
        (rss, fit)
    };
    // Coarse scan guards against a non-unimodal residual curve.
    let steps = 200;
    let mut best = (f64::INFINITY, b_lo);
    for i in 0..=steps {
        let b = b_lo + (b_hi - b_lo) * i as f64 / steps as f64;
        let (r, _) = rss_at(b);
        if r < best.0 {
            best = (r, b);
        }
    }
    let h = (b_hi - b_lo) / steps as f64;
    let (b, _) = golden_min(
        |b| rss_at(b).0,
        (best.1 - h).max(b_lo),
        (best.1 + h).min(b_hi),
        1e-12,
    );
    let (_, fit) = rss_at(b);
    StretchedFit { a: -fit.slope, b, k: fit.intercept, max_residual: fit.max_residual }
}

/// Geometric grid `t0·r^k`, `k = 0..n`.
pub fn geometric_grid(t0: f64, r: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 * r.powi(k as i32)).collect()
}

/// Geometric grid with `n` points spanning [a, b] (both included).
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Uniform grid with `n` points spanning [a, b].
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_quad_handles_a_kink() {
        let q = adaptive_quad(|x: f64| x.abs().sqrt(), &[-1.0, 1.0], 1e-12, 1e-12, 500);
        assert!((q.value - 4.0 / 3.0).abs() < 1e-10, "{}", q.value);
    }

    #[test]
    fn log_domain_integral_of_huge_exponential() {
        // ∫_0^U e^{u} du = e^U - 1
        let v = ln_integral_exp(|u| u, 0.0, 1000.0);
        assert!((v - 1000.0).abs() < 1e-10);
        let v = ln_integral_exp(|u| u, 0.0, 3.0);
        assert!((v - (3f64.exp() - 1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_add_exp_matches_direct() {
        assert!((log_add_exp(1.0, 2.0) - (1f64.exp() + 2f64.exp()).ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_add_exp(1e5, 1e5) - (1e5 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, _) = golden_min(|x| (x - 1.3).powi(2), -5.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-8);
    }

    #[test]
    fn stretched_fit_recovers_parameters() {
        let base = geomspace(1e3, 1e7, 25);
        let y: Vec<f64> = base.iter().map(|x| -0.7 * x.powf(0.4) + 2.0).collect();
        let f = fit_stretched(&base, &y, 0.05, 1.5);
        assert!((f.b - 0.4).abs() < 1e-6 && (f.a - 0.7).abs() < 1e-4, "{f:?}");
    }
}
