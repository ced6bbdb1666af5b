//! One-dimensional numerics: Gauss rules, adaptive composite Gauss–Legendre
//! integration, and the bracketing searches used for extrema and inverses.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::{lit, Error, Real, Result};

/// A quadrature rule stored in `f64`; cast to the working scalar on use.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies a rule defined on `[-1, 1]` to `[a, b]`.
    pub fn integrate<T: Real, F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let half = (b - a) * lit(0.5);
        let mid = (a + b) * lit(0.5);
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + lit::<T>(w) * f(mid + half * lit(x));
        }
        acc * half
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Hermite rule for the weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let pim4 = PI.powf(-0.25);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (p1, d) = hermite_orthonormal(n, z, pim4);
            pp = d;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 3e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = hermite_orthonormal(n, z, pim4);
        if d != 0.0 {
            pp = d;
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // store ascending
    nodes.reverse();
    weights.reverse();
    Rule { nodes, weights }
}

fn hermite_orthonormal(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    let d = (2.0 * n as f64).sqrt() * p2;
    (p1, d)
}

/// Gauss–Hermite rule rescaled so that `sum w_i h(x_i) ≈ E[h(U)]`, `U ~ N(0, 1)`.
pub fn standard_normal_rule(n: usize) -> Rule {
    let r = gauss_hermite(n);
    let s = 2f64.sqrt();
    let c = PI.sqrt().recip();
    Rule {
        nodes: r.nodes.iter().map(|x| x * s).collect(),
        weights: r.weights.iter().map(|w| w * c).collect(),
    }
}

pub fn gl15() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(15))
}

pub fn gl8() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(8))
}

/// 64-node normal-weight rule used by the tilted Gaussian expectations.
pub fn normal64() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| standard_normal_rule(64))
}

/// Stopping rule for [`adaptive`]: a panel is accepted when its bisection
/// difference is below `max(abs * width_fraction, rel * |panel value|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance {
            abs,
            rel: 0.0,
            max_panels: 1 << 16,
        }
    }

    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_panels: 1 << 16,
        }
    }
}

/// Adaptive composite 15-point Gauss–Legendre with recursive bisection.
pub fn adaptive<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: Tolerance) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if b < a {
        return adaptive(f, b, a, tol).map(|v| -v);
    }
    let rule = gl15();
    let total_width = b - a;
    let abs_tol: T = lit(tol.abs);
    let rel_tol: T = lit(tol.rel);
    let tiny = T::epsilon() * lit(64.0);

    let whole = rule.integrate(a, b, &mut f);
    let mut stack = vec![(a, b, whole)];
    let mut total = T::zero();
    let mut comp = T::zero();
    let mut panels = 0usize;
    while let Some((lo, hi, est)) = stack.pop() {
        let mid = (lo + hi) * lit(0.5);
        let left = rule.integrate(lo, mid, &mut f);
        let right = rule.integrate(mid, hi, &mut f);
        let sum = left + right;
        let diff = (sum - est).abs();
        let frac = (hi - lo) / total_width;
        let narrow = (hi - lo) <= tiny * lo.abs().max(hi.abs()).max(T::one());
        if !diff.is_finite() || !sum.is_finite() {
            return Err(quad_error(a, b, tol, panels));
        }
        if diff <= (abs_tol * frac).max(rel_tol * sum.abs()) || narrow {
            // Kahan summation keeps many small panels from losing digits.
            let y = sum - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        } else {
            panels += 1;
            if panels > tol.max_panels {
                return Err(quad_error(a, b, tol, panels));
            }
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    Ok(total)
}

fn quad_error<T: Real>(a: T, b: T, tol: Tolerance, panels: usize) -> Error {
    Error::Quadrature {
        a: a.to_f64().unwrap_or(f64::NAN),
        b: b.to_f64().unwrap_or(f64::NAN),
        tol: tol.abs.max(tol.rel),
        panels,
    }
}

/// [`adaptive`] over consecutive breakpoints; the absolute tolerance is
/// shared in proportion to segment width.
pub fn adaptive_pieces<T: Real, F: FnMut(T) -> T>(mut f: F, breaks: &[T], tol: Tolerance) -> Result<T> {
    if breaks.len() < 2 {
        return Ok(T::zero());
    }
    let width = *breaks.last().unwrap() - breaks[0];
    let mut acc = T::zero();
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let share = ((w[1] - w[0]) / width).to_f64().unwrap_or(1.0);
        let local = Tolerance {
            abs: tol.abs * share,
            ..tol
        };
        acc = acc + adaptive(&mut f, w[0], w[1], local)?;
    }
    Ok(acc)
}

/// [`adaptive_pieces`] with the absolute tolerance set to `rel` times a
/// one-panel estimate of the integral of `|f|`, so that pieces which carry
/// a negligible share of the total need not converge in relative terms.
pub fn adaptive_pieces_scaled<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    rel: f64,
    max_panels: usize,
) -> Result<f64> {
    let rule = gl15();
    let scale: f64 = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| rule.integrate(w[0], w[1], |x: f64| f(x).abs()))
        .sum();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let tol = Tolerance {
        abs: rel * scale,
        rel,
        max_panels,
    };
    adaptive_pieces(f, breaks, tol)
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::RootFinding(format!(
            "no sign change on [{lo}, {hi}] ({flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximizes `f` on `[a, b]`: dense scan with `samples` points, then
/// golden-section refinement around the best sample.
pub fn maximize<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, samples: usize) -> (T, T) {
    let samples = samples.max(2);
    let step = (b - a) / T::from_usize(samples - 1).unwrap();
    let mut best_i = 0usize;
    let mut best = T::neg_infinity();
    for i in 0..samples {
        let x = a + step * T::from_usize(i).unwrap();
        let v = f(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = (a + step * T::from_usize(best_i).unwrap() - step).max(a);
    let mut hi = (a + step * T::from_usize(best_i).unwrap() + step).min(b);
    let ratio: T = lit(0.618_033_988_749_894_8);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo) <= T::epsilon() * lit(4.0) * (lo.abs() + hi.abs()).max(T::one()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    let (x, v) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    let end_a = f(a);
    let end_b = f(b);
    let mut out = (x, v);
    if best > out.1 {
        out = (a + step * T::from_usize(best_i).unwrap(), best);
    }
    if end_a > out.1 {
        out = (a, end_a);
    }
    if end_b > out.1 {
        out = (b, end_b);
    }
    out
}
