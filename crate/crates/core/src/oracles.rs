//! Deterministic benchmarks for estimators that only see `W` at fixed nodes:
//! the exact error of the best such estimator at `p = 2` (conditional mean)
//! and `p = 1` (conditional median), and the symmetrization lower bound that
//! holds for every placement of `n` nodes.
//!
//! All three integrate `G` against Gaussians. `G(x)² e^{-x²/2}` and
//! `G(x) e^{-x²/2}` (at `p = 2` and `p = 1`) decay only like `1/(x ln² x)`,
//! so the Gaussian weight is folded into the exponent of `G` in closed form
//! and the remaining slowly varying tails are integrated after the
//! substitution in [`heavy_tail_integral`].

use std::f64::consts::{E, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::exact_solution::{g_critical_point, g_prime_factor, heavy_tail_integral, log_g, log_r};
use crate::gaussian_model::{cell_sigma_squared, VarianceTable};
use crate::quadrature::{self, gl8, normal64, Tolerance};
use crate::{Error, Result};

/// Gaussian mass beyond this many standard deviations is ignored.
const U_MAX: f64 = 12.0;

/// `ln(sqrt(2π))`.
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConstruction {
    pub n: usize,
    pub t0: f64,
    pub t1: f64,
    pub sigma2_sq: f64,
    pub sigma1_sq: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n0: usize,
}

impl GapConstruction {
    /// Places the node-free gap `[τ₁/2 - τ₁/(2(n+1)), τ₁/2]`.
    pub fn new(cs: &CoefficientSet<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        let tau1 = cs.params.tau1;
        let t1 = tau1 / 2.0;
        let t0 = t1 - tau1 / (2.0 * (n as f64 + 1.0));
        let sigma2_sq = cell_sigma_squared(cs, t0, t1)?;
        let (alpha, beta) = alpha_beta(cs);
        Ok(GapConstruction {
            n,
            t0,
            t1,
            sigma2_sq,
            sigma1_sq: 1.0 - sigma2_sq,
            alpha,
            beta,
            n0: threshold_n0(tau1, beta),
        })
    }

    /// `(α, β) (t₁ - t₀)³ / 12`.
    pub fn bracket(&self) -> (f64, f64) {
        let c = (self.t1 - self.t0).powi(3) / 12.0;
        (self.alpha * c, self.beta * c)
    }
}

/// `inf` and `sup` of `|f'|²` on `[0, τ₁/2]`.
pub fn alpha_beta(cs: &CoefficientSet<f64>) -> (f64, f64) {
    let half = cs.params.tau1 / 2.0;
    (cs.inf_f_prime_sq(0.0, half), cs.sup_f_prime_sq(0.0, half))
}

/// `⌈(τ₁/2)(β/6)^{1/3} - 1⌉`, floored at zero.
pub fn threshold_n0(tau1: f64, beta: f64) -> usize {
    ((tau1 / 2.0) * (beta / 6.0).cbrt() - 1.0).ceil().max(0.0) as usize
}

/// The explicit constant `C` with
/// `C^p = (τ₁³α)^{p/2} / (2^{5p+3/2} 3^{p/2} p^p (p+1) π sqrt(e)) · exp(-βτ₁³/24)`.
pub fn lower_bound_constant(cs: &CoefficientSet<f64>, p: f64) -> f64 {
    let (alpha, beta) = alpha_beta(cs);
    let tau1 = cs.params.tau1;
    let num = (tau1.powi(3) * alpha).powf(p / 2.0);
    let den = 2f64.powf(5.0 * p + 1.5) * 3f64.powf(p / 2.0) * p.powf(p) * (p + 1.0) * PI * E.sqrt();
    (num / den * (-beta * tau1.powi(3) / 24.0).exp()).powf(1.0 / p)
}

/// `C ln^{-2/p}(12 n³)`.
pub fn constant_curve(cs: &CoefficientSet<f64>, n: usize, p: f64) -> f64 {
    lower_bound_constant(cs, p) * (12.0 * (n as f64).powi(3)).ln().powf(-2.0 / p)
}

/// `ln E[exp(h(c + s U))]`, `U ~ N(0, 1)`, by the 64-node Gauss–Hermite rule.
fn log_normal_expectation<F: Fn(f64) -> f64>(c: f64, s: f64, h: F) -> f64 {
    let rule = normal64();
    let vals: Vec<f64> = rule.nodes.iter().map(|&u| h(c + s * u)).collect();
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = vals.iter().zip(&rule.weights).map(|(v, w)| w * (v - top).exp()).sum();
    top + sum.ln()
}

/// `ln E[G(z + Y)]`, `Y ~ N(0, σ²)`, `σ² < p`, via
/// `E[e^{k(z+Y)²} R(z+Y)] = (s/σ) e^{kz²/(1-2kσ²)} E[R(z/(1-2kσ²) + sU)]`
/// with `k = 1/2p` and `s² = σ²/(1-2kσ²)`.
pub fn log_conditional_mean(p: f64, z: f64, sigma_sq: f64) -> f64 {
    let shrink = 1.0 - sigma_sq / p;
    let s = (sigma_sq / shrink).sqrt();
    -0.5 * shrink.ln() + z * z / (2.0 * p * shrink) + log_normal_expectation(z / shrink, s, |x| log_r(p, x))
}

/// Integrates an even integrand over the real line as
/// `2(∫_0^1 + ∫_1^{z1}) + tail`, the second piece in `ln z`.
fn integrate_even<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    z1: f64,
    breaks: &[f64],
    tol: Tolerance,
    tail: f64,
) -> Result<f64> {
    let mut failure = None;
    let mut guarded = |z: f64| match f(z) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let near = quadrature::adaptive(&mut guarded, 0.0, 1.0, tol)?;
    let far = if z1 > 1.0 {
        let mut cuts = vec![0.0];
        cuts.extend(breaks.iter().filter(|&&b| b > 1.0 && b < z1).map(|b| b.ln()));
        cuts.push(z1.ln());
        quadrature::adaptive_pieces(
            |t: f64| {
                let z = t.exp();
                z * guarded(z)
            },
            &cuts,
            tol,
        )?
    } else {
        0.0
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * (near + far) + tail)
}

/// The analytic tail replaces the integrand beyond the cut by
/// `R^p(x)/sqrt(2π)`; refuse the result unless the two agree at the cut.
fn check_tail(actual: f64, model: f64, what: &str) -> Result<()> {
    let rel = ((actual - model) / model).abs();
    if !(rel <= 1e-6) {
        return Err(Error::TailBound(format!(
            "{what}: integrand {actual:e} vs tail model {model:e} at the cut"
        )));
    }
    Ok(())
}

/// `(1+x²)^{-1/2} ln^{-2}(2+x²)`, the kernel left after tilting.
fn kernel(x: f64) -> f64 {
    log_r(1.0, x).exp()
}

/// `E[(G(X) - E[G(X) | Z])²]^{1/2}` at `p = 2`, where `X = Z + Y`,
/// `Z ~ N(0, 1 - σ²)`, `Y ~ N(0, σ²)`.
///
/// With `A(z) = E[G²(z+Y)] φ_ν(z)` and `ρ(z) = m(z)² / E[G²(z+Y)]` the squared
/// error is `∫ A(z)(1 - ρ(z)) dz`. Both factors are available in closed form
/// up to one-dimensional Gauss–Hermite expectations of `R` and `R²`, and the
/// exponentials cancel exactly.
pub fn conditional_mean_error_for(sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Ok(0.0);
    }
    if sigma_sq >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma^2 = {sigma_sq} must lie in (0, 1)"
        )));
    }
    let p = 2.0;
    let nu_sq = 1.0 - sigma_sq;
    let s1 = (sigma_sq / (1.0 - sigma_sq / 2.0)).sqrt();
    let s2 = (sigma_sq / nu_sq).sqrt();
    let quad_coef = sigma_sq / ((2.0 - sigma_sq) * (2.0 - 2.0 * sigma_sq));
    let log_const = 0.5 * (-sigma_sq).ln_1p() - (-sigma_sq / 2.0).ln_1p();
    let integrand = |z: f64| -> Result<f64> {
        let log_r1 = log_normal_expectation(z / (1.0 - sigma_sq / 2.0), s1, |x| log_r(p, x));
        let log_r2 = log_normal_expectation(z / nu_sq, s2, |x| 2.0 * log_r(p, x));
        let log_rho = log_const - quad_coef * z * z + 2.0 * log_r1 - log_r2;
        let a = (log_r2 - LN_SQRT_2PI).exp() / nu_sq;
        Ok(a * -(log_rho.min(0.0)).exp_m1())
    };
    let z1 = 20.0 / sigma_sq.sqrt();
    check_tail(
        integrand(z1)?,
        kernel(z1 / nu_sq) / ((2.0 * PI).sqrt() * nu_sq),
        "conditional mean error",
    )?;
    let tail = 2.0 / (2.0 * PI).sqrt() * heavy_tail_integral(z1 / nu_sq)?;
    let total = integrate_even(integrand, z1, &[], Tolerance::new(1e-14, 1e-11), tail)?;
    Ok(total.sqrt())
}

pub fn conditional_mean_error(cs: &CoefficientSet<f64>, vt: &VarianceTable, n: usize) -> Result<f64> {
    if cs.p() != 2.0 {
        return Err(Error::InvalidParameter(format!(
            "conditional mean oracle needs p = 2, got {}",
            cs.p()
        )));
    }
    conditional_mean_error_for(vt.sigma_sq(n)?)
}

/// `P(a < z + σU < b)`, accurate in both tails.
fn normal_interval(z: f64, sigma: f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let (lo, hi) = ((a - z) / sigma, (b - z) / sigma);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo * r) - libm::erfc(hi * r))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi * r) - libm::erfc(-lo * r))
    } else {
        1.0 - 0.5 * (libm::erfc(-lo * r) + libm::erfc(hi * r))
    }
}

/// The sublevel set `{x : G(x) < G(b₂)}` at `p = 1`, as positive
/// endpoints `(b₁, b₂)`; `b₁ = 0` when the set is one interval.
fn sublevel_endpoints(b2: f64, xs: f64) -> Result<(f64, f64)> {
    if log_g_gap(0.0, b2) <= 0.0 {
        return Ok((0.0, b2));
    }
    let b1 = quadrature::bisect(|x| log_g_gap(x, b2), 0.0, xs, 200)?;
    Ok((b1, b2))
}

fn sublevel_probability(z: f64, sigma: f64, b: (f64, f64)) -> f64 {
    let (b1, b2) = b;
    if b1 == 0.0 {
        normal_interval(z, sigma, -b2, b2)
    } else {
        normal_interval(z, sigma, b1, b2) + normal_interval(z, sigma, -b2, -b1)
    }
}

/// Conditional median of `G(z + Y)`, `Y ~ N(0, σ²)`, at `p = 1`, with the
/// sublevel endpoints `(b₁, b₂)` of the median.
pub fn conditional_median(z: f64, sigma: f64) -> Result<(f64, (f64, f64))> {
    let xs = g_critical_point();
    conditional_median_with(z.abs(), sigma, xs)
}

fn conditional_median_with(z: f64, sigma: f64, xs: f64) -> Result<(f64, (f64, f64))> {
    let mut hi = z + 40.0 * sigma + 10.0;
    let mut guard = 0;
    while sublevel_probability(z, sigma, sublevel_endpoints(hi, xs)?) < 0.5 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::RootFinding(format!("no median bracket for z = {z}")));
        }
    }
    let mut lo = xs;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sublevel_probability(z, sigma, sublevel_endpoints(mid, xs)?) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = sublevel_endpoints(0.5 * (lo + hi), xs)?;
    Ok((log_g(1.0, b.1).exp(), b))
}

/// `ln G(a) - ln G(x)` at `p = 1`, accurate when the two are close. Near
/// each other it integrates `(ln G)' = x (1 - 1/(1+x²) - 4/((2+x²) ln(2+x²)))`
/// so the rounding error shrinks with `|a - x|`; this matters around the
/// minimum of `G`, where the gap is quadratic in the distance.
fn log_g_gap(a: f64, x: f64) -> f64 {
    let (a, x) = (a.abs(), x.abs());
    log_g_gap_with(a, x, a - x)
}

/// [`log_g_gap`] for `a, x >= 0` with `a - x` supplied by the caller, who
/// may know it more accurately than the subtraction would give.
fn log_g_gap_with(a: f64, x: f64, diff: f64) -> f64 {
    if diff.abs() < 0.25 {
        let rule = gl8();
        let half = 0.5 * diff;
        let mid = a - half;
        let sum: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| {
                let y = mid + half * t;
                w * y * g_prime_factor(y)
            })
            .sum();
        return half * sum;
    }
    let ll = |v: f64| (v * v / 2.0).ln_1p() / LN_2;
    0.5 * diff * (a + x) - 0.5 * ((a * a).ln_1p() - (x * x).ln_1p()) - 2.0 * (ll(a).ln_1p() - ll(x).ln_1p())
}

/// `E|G(z+Y) - med| φ_ν(z)` at `p = 1` with `ν² = 1 - σ²`.
///
/// Writing `|G - med| = G |1 - med/G|` and tilting by the Gaussian weight
/// turns this into an expectation of `R |expm1(ln med - ln G)|` over
/// `N(z/ν², σ²/ν²)`, integrated piecewise between the points where `G`
/// crosses the median. No cancellation occurs.
fn tilted_deviation(z: f64, sigma: f64, xs: f64) -> Result<f64> {
    let nu_sq = 1.0 - sigma * sigma;
    let s = sigma / nu_sq.sqrt();
    let (_, (b1, b2)) = conditional_median_with(z.abs(), sigma, xs)?;
    let mid = if b1 > 0.0 { 0.5 * (b1 + b2) } else { 0.0 };
    let c = z.abs() / nu_sq;
    let mut cuts = vec![-U_MAX, U_MAX];
    let ends: Vec<f64> = if b1 == 0.0 {
        vec![-b2, b2]
    } else {
        vec![-b2, -b1, b1, b2]
    };
    for e in ends {
        let u = (e - c) / s;
        if u > -U_MAX && u < U_MAX {
            cuts.push(u);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let acc = quadrature::adaptive_pieces_scaled(
        |u: f64| {
            let x = c + s * u;
            // G(b₁) = G(b₂) = med; anchor at the nearer endpoint
            let anchor = if x.abs() < mid { b1 } else { b2 };
            // anchor - |x| without cancelling two large numbers
            let diff = if x >= 0.0 {
                (anchor - c) - s * u
            } else {
                (anchor + c) + s * u
            };
            let d = log_g_gap_with(anchor, x.abs(), diff);
            (log_r(1.0, x) - 0.5 * u * u - LN_SQRT_2PI).exp() * d.exp_m1().abs()
        },
        &cuts,
        1e-10,
        1 << 12,
    )?;
    Ok(acc / ((2.0 * PI).sqrt() * nu_sq))
}

/// `E|G(z+Y) - med(G(z+Y))|` for `Y ~ N(0, σ²)` at `p = 1`.
pub fn conditional_abs_deviation(z: f64, sigma_sq: f64) -> Result<f64> {
    let nu_sq = 1.0 - sigma_sq;
    let density = (-z * z / (2.0 * nu_sq)).exp() / (2.0 * PI * nu_sq).sqrt();
    Ok(tilted_deviation(z, sigma_sq.sqrt(), g_critical_point())? / density)
}

/// `E|G(X) - med(G(X) | Z)|` at `p = 1`, the smallest mean absolute error
/// of any function of `Z`, for `Z ~ N(0, 1 - σ²)`, `Y ~ N(0, σ²)`.
pub fn conditional_median_error_for(sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Ok(0.0);
    }
    if sigma_sq >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma^2 = {sigma_sq} must lie in (0, 1)"
        )));
    }
    let xs = g_critical_point();
    let sigma = sigma_sq.sqrt();
    let nu_sq = 1.0 - sigma_sq;
    let integrand = |z: f64| tilted_deviation(z, sigma, xs);
    let z1 = 20.0 / sigma;
    check_tail(
        integrand(z1)?,
        kernel(z1 / nu_sq) / ((2.0 * PI).sqrt() * nu_sq),
        "conditional median error",
    )?;
    let tail = 2.0 / (2.0 * PI).sqrt() * heavy_tail_integral(z1 / nu_sq)?;
    integrate_even(integrand, z1, &[], Tolerance::new(1e-13, 1e-9), tail)
}

pub fn conditional_median_error(cs: &CoefficientSet<f64>, vt: &VarianceTable, n: usize) -> Result<f64> {
    if cs.p() != 1.0 {
        return Err(Error::InvalidParameter(format!(
            "conditional median oracle needs p = 1, got {}",
            cs.p()
        )));
    }
    conditional_median_error_for(vt.sigma_sq(n)?)
}

/// `E|G(Y₁+Y₂) - G(Y₁-Y₂)|^p` for independent `Y₁ ~ N(0, 1-σ₂²)` and
/// `Y₂ ~ N(0, σ₂²)`.
///
/// By symmetry it is four times the integral over `y₁, y₂ > 0`. There
/// `|G(A) - G(B)|^p = G(A)^p |1 - Q|^p` with
/// `Q = exp(-2y₁y₂/p) R(y₁-y₂)/R(y₁+y₂)`, and `G(A)^p` times the joint
/// density is `φ(u)/(sqrt(2π) σ₁²)` after `y₂ = y₁σ₂²/σ₁² + (σ₂/σ₁) u`.
pub fn symmetrization_moment(p: f64, sigma2_sq: f64) -> Result<f64> {
    if !(sigma2_sq > 0.0 && sigma2_sq < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma2^2 = {sigma2_sq} must lie in (0, 1)"
        )));
    }
    let sigma2 = sigma2_sq.sqrt();
    let sigma1_sq = 1.0 - sigma2_sq;
    let sigma1 = sigma1_sq.sqrt();
    let s = sigma2 / sigma1;
    let integrand = |y1: f64| -> Result<f64> {
        let lo = (-y1 * sigma2 / sigma1).max(-U_MAX);
        if lo >= U_MAX {
            return Ok(0.0);
        }
        let mu = y1 * sigma2_sq / sigma1_sq;
        // ln Q = (ln G₁(B) - ln G₁(A)) / p with A = y₁+y₂, B = y₁-y₂
        let log_q = |u: f64| {
            let y2 = (mu + s * u).max(0.0);
            let b = y1 - y2;
            let diff = if b >= 0.0 { 2.0 * y2 } else { 2.0 * y1 };
            -log_g_gap_with(y1 + y2, b.abs(), diff) / p
        };
        let f = |u: f64| {
            let y2 = mu + s * u;
            if y2 <= 0.0 {
                return 0.0;
            }
            let gap = log_q(u).exp_m1().abs();
            (p * log_r(p, y1 + y2) - 0.5 * u * u - LN_SQRT_2PI).exp() * gap.powf(p)
        };
        // |1 - Q|^p has a kink where Q crosses 1 unless p is even
        let mut cuts = vec![lo];
        let grid = 128;
        let step = (U_MAX - lo) / grid as f64;
        for k in 0..grid {
            let (a, b) = (lo + k as f64 * step, lo + (k + 1) as f64 * step);
            if log_q(a) * log_q(b) < 0.0 {
                cuts.push(quadrature::bisect(log_q, a, b, 200)?);
            }
        }
        cuts.push(U_MAX);
        let inner = quadrature::adaptive_pieces_scaled(f, &cuts, 1e-10, 1 << 12)?;
        Ok(inner / ((2.0 * PI).sqrt() * sigma1_sq))
    };
    let y1_max = 15.0 / sigma2;
    check_tail(
        integrand(y1_max)?,
        kernel(y1_max / sigma1_sq) / ((2.0 * PI).sqrt() * sigma1_sq),
        "symmetrization moment",
    )?;
    let tail = 4.0 / (2.0 * PI).sqrt() * heavy_tail_integral(y1_max / sigma1_sq)?;
    // integrate_even doubles; the symmetry factor here is four
    Ok(2.0
        * integrate_even(
            integrand,
            y1_max,
            &[g_critical_point()],
            Tolerance::new(1e-14, 1e-9),
            0.0,
        )?
        + tail)
}

/// `(E|G(Y₁+Y₂) - G(Y₁-Y₂)|^p)^{1/p} / 2` for the gap construction of `n`;
/// a lower bound on the `p`-th mean error of every method that observes `W`
/// at `n` fixed times.
pub fn symmetrization_bound(cs: &CoefficientSet<f64>, n: usize, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    let gap = GapConstruction::new(cs, n)?;
    Ok(symmetrization_moment(p, gap.sigma2_sq)?.powf(1.0 / p) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gap_geometry_and_bracket() {
        let cs = CoefficientSet::standard();
        for n in [1, 3, 10, 64, 1000] {
            let g = GapConstruction::new(&cs, n).unwrap();
            assert_relative_eq!(g.t1 - g.t0, 1.0 / (2.0 * (n as f64 + 1.0)), max_relative = 1e-12);
            let (lo, hi) = g.bracket();
            assert!(
                lo <= g.sigma2_sq && g.sigma2_sq <= hi,
                "n={n}: {lo} {} {hi}",
                g.sigma2_sq
            );
            assert_eq!(g.n0, 0);
        }
    }

    #[test]
    fn alpha_beta_values() {
        let cs = CoefficientSet::standard();
        let (a, b) = alpha_beta(&cs);
        assert_relative_eq!(a, 3.605_646_592_541_521, max_relative = 1e-9);
        assert_relative_eq!(b, 7.807_539_245_643_746, max_relative = 1e-9);
    }

    #[test]
    fn constant_value() {
        let cs = CoefficientSet::standard();
        assert_relative_eq!(
            lower_bound_constant(&cs, 2.0),
            0.002_195_979_236_118_614,
            max_relative = 1e-8
        );
    }

    #[test]
    fn normal_interval_tails() {
        assert_relative_eq!(
            normal_interval(0.0, 1.0, -1.0, 1.0),
            0.682_689_492_137_085_9,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            normal_interval(0.0, 1.0, 10.0, f64::INFINITY),
            7.619_853_024_160_47e-24,
            max_relative = 1e-12
        );
        assert_eq!(normal_interval(0.0, 1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn conditional_mean_tilting_matches_direct_quadrature() {
        let sigma_sq: f64 = 0.01;
        for z in [0.0, 0.7, 3.0, 9.0] {
            let direct = quadrature::adaptive(
                |u: f64| (log_g(2.0, z + sigma_sq.sqrt() * u) - 0.5 * u * u - LN_SQRT_2PI).exp(),
                -U_MAX,
                U_MAX,
                Tolerance::new(1e-14, 1e-13),
            )
            .unwrap();
            assert_relative_eq!(
                log_conditional_mean(2.0, z, sigma_sq),
                direct.ln(),
                max_relative = 1e-11
            );
        }
    }

    #[test]
    fn degenerate_variance_gives_zero_error() {
        assert_eq!(conditional_mean_error_for(0.0).unwrap(), 0.0);
        assert_eq!(conditional_median_error_for(0.0).unwrap(), 0.0);
    }

    #[test]
    fn median_in_tail_is_on_monotone_branch() {
        let sigma = 0.05;
        let (med, (b1, _)) = conditional_median(8.0, sigma).unwrap();
        assert_eq!(b1, 0.0);
        let g = |x: f64| log_g(1.0, x).exp();
        assert!(med >= g(8.0 - 3.0 * sigma) && med <= g(8.0 + 3.0 * sigma));
        assert_relative_eq!(med, g(8.0), max_relative = 1e-8);
    }

    #[test]
    fn errors_decrease_with_variance() {
        let a = conditional_mean_error_for(1e-2).unwrap();
        let b = conditional_mean_error_for(1e-4).unwrap();
        assert!(b < a && b > 0.0);
        let c = conditional_median_error_for(1e-2).unwrap();
        let d = conditional_median_error_for(1e-4).unwrap();
        assert!(d < c && d > 0.0);
    }
}
