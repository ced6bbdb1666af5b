//! Closed-form solution of the SDE and the terminal map `G`.
//!
//! With `X₂(τ₁)` given, every other component is deterministic:
//! `X(T) = (T, x, x², 0, exp(x²/4p), 0, G(x))` where
//! `G(x) = exp(x²/2p) / ((1+x²)^{1/2p} ln^{2/p}(2+x²))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::quadrature::{self, Tolerance};
use crate::{lit, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionVector<T> {
    pub x: [T; 7],
}

impl<T: Real> SolutionVector<T> {
    pub fn new(x: [T; 7]) -> Self {
        SolutionVector { x }
    }

    /// Component `k`, counted from one.
    pub fn get(&self, k: usize) -> T {
        self.x[k - 1]
    }

    pub fn abs_diff(&self, other: &Self) -> [T; 7] {
        std::array::from_fn(|i| (self.x[i] - other.x[i]).abs())
    }
}

/// `ln((1+x²)^{1/2p} ln^{2/p}(2+x²))`, the log of the denominator of `G`.
#[inline]
pub fn log_denominator<T: Real>(p: T, x: T) -> T {
    let x2 = x * x;
    (x2.ln_1p() / lit::<T>(2.0) + lit::<T>(2.0) * (lit::<T>(2.0) + x2).ln().ln()) / p
}

/// `ln G(x)`.
#[inline]
pub fn log_g<T: Real>(p: T, x: T) -> T {
    x * x / (lit::<T>(2.0) * p) - log_denominator(p, x)
}

/// `ln R(x)` where `R = G · exp(-x²/2p)` is the slowly varying part of `G`.
#[inline]
pub fn log_r<T: Real>(p: T, x: T) -> T {
    -log_denominator(p, x)
}

pub fn eval_g<T: Real>(p: T, x: T) -> T {
    if x.abs() > lit(30.0) {
        return log_g(p, x).exp();
    }
    let x2 = x * x;
    (x2 / (lit::<T>(2.0) * p)).exp()
        / ((T::one() + x2).powf((lit::<T>(2.0) * p).recip()) * (lit::<T>(2.0) + x2).ln().powf(lit::<T>(2.0) / p))
}

/// The bracket in `G'(x) = (x/p) G(x) (1 - 1/(1+x²) - 4/((2+x²) ln(2+x²)))`.
#[inline]
pub fn g_prime_factor<T: Real>(x: T) -> T {
    let x2 = x * x;
    let two = lit::<T>(2.0);
    T::one() - (T::one() + x2).recip() - lit::<T>(4.0) / ((two + x2) * (two + x2).ln())
}

pub fn eval_g_prime<T: Real>(p: T, x: T) -> T {
    x / p * eval_g(p, x) * g_prime_factor(x)
}

/// The unique positive critical point of `G`; it does not depend on `p`.
pub fn g_critical_point() -> f64 {
    quadrature::bisect(g_prime_factor::<f64>, 0.1, 3.0, 200).expect("G' changes sign on [0.1, 3]")
}

pub fn solution_at_terminal<T: Real>(cs: &CoefficientSet<T>, x2: T) -> SolutionVector<T> {
    let p = cs.p();
    SolutionVector {
        x: [
            cs.params.t_final,
            x2,
            x2 * x2,
            T::zero(),
            (x2 * x2 / (lit::<T>(4.0) * p)).exp(),
            T::zero(),
            eval_g(p, x2),
        ],
    }
}

/// Solution at time `t`. `x2_t` is `X₂(min(t, τ₁))`, `x2_tau1` is `X₂(τ₁)`;
/// only the first matters before `τ₁`.
pub fn solution_at_time<T: Real>(cs: &CoefficientSet<T>, t: T, x2_t: T, x2_tau1: T) -> Result<SolutionVector<T>> {
    let prm = cs.params;
    if !(t >= T::zero() && t <= prm.t_final) {
        return Err(Error::InvalidParameter(format!("t = {t} outside [0, {}]", prm.t_final)));
    }
    let p = cs.p();
    let four_p = lit::<T>(4.0) * p;
    if t <= prm.tau1 {
        return Ok(SolutionVector {
            x: [t, x2_t, x2_t * x2_t, T::zero(), T::one(), T::zero(), T::zero()],
        });
    }
    let x = x2_tau1;
    let k = x * x / four_p;
    let x4 = k * cs.g(t);
    let x5 = (k * cs.g_integral_to(t)?).exp();
    let (x6, x7) = if t <= prm.tau2 {
        (T::zero(), T::zero())
    } else {
        let x5_tau2 = (k * cs.g_integral_to(prm.tau2)?).exp();
        let d = log_denominator(p, x).exp();
        (x5_tau2 * cs.h(t) / d, x5_tau2 * x5_tau2 / d * cs.h_integral_to(t)?)
    };
    Ok(SolutionVector {
        x: [t, x, x * x, x4, x5, x6, x7],
    })
}

/// `E[X₅(T)^q] = sqrt(2p/(2p-q))` for `0 <= q < 2p`.
pub fn x5_moment(p: f64, q: f64) -> Result<f64> {
    if !(q >= 0.0 && q < 2.0 * p) {
        return Err(Error::InvalidParameter(format!(
            "E[X5^q] is finite only for 0 <= q < 2p, got q={q}, p={p}"
        )));
    }
    Ok((2.0 * p / (2.0 * p - q)).sqrt())
}

/// `∫_W^∞ (1+x²)^{-1/2} ln^{-2}(2+x²) dx` for `W > 1`.
///
/// Substituting `x = exp(1/v)` maps the tail onto `(0, 1/ln W]` with a
/// bounded integrand that tends to 1/4 at `v = 0`.
pub fn heavy_tail_integral(w: f64) -> Result<f64> {
    if !(w > 1.0) {
        return Err(Error::InvalidParameter(format!("tail start {w} must exceed 1")));
    }
    if w.is_infinite() {
        return Ok(0.0);
    }
    let upper = w.ln().recip();
    let integrand = |v: f64| {
        if v <= 0.0 {
            return 0.25;
        }
        let l = v.recip();
        let e = (-2.0 * l).exp();
        let den = 2.0 * l + (2.0 * e).ln_1p();
        (1.0 + e).sqrt().recip() * l * l / (den * den)
    };
    quadrature::adaptive(integrand, 0.0, upper, Tolerance::new(1e-16, 1e-13))
}

/// Integrand of [`moment_integral`], evaluated in log space.
fn moment_integrand(p: f64, q: f64, x: f64) -> f64 {
    log_moment_integrand(p, q, x).exp()
}

fn log_moment_integrand(p: f64, q: f64, x: f64) -> f64 {
    (q - p) * x * x / (2.0 * p) - q * log_denominator(p, x)
}

/// `sqrt(2/π) ∫_0^R exp((q-p)x²/2p) / ((1+x²)^{q/2p} ln^{2q/p}(2+x²)) dx`,
/// which is `E[G(Z)^q]` truncated at `R`.
///
/// For `q <= p` the integral converges and the tail beyond `R` is added, so
/// the value is the full moment. For `q > p` the truncated value is a lower
/// bound and the flag reports divergence when doubling `R` multiplies it by
/// more than ten or the integrand is still increasing at `R`.
pub fn moment_integral(p: f64, q: f64, r: f64) -> Result<(f64, bool)> {
    if !(q >= 0.0) || !(r > 0.0) || !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need q >= 0, R > 0, p >= 1; got q={q}, R={r}, p={p}"
        )));
    }
    let c = (2.0 / PI).sqrt();
    let tol = Tolerance::new(1e-15, 1e-13);
    let breaks_to = |upper: f64| {
        let mut breaks = vec![0.0];
        let mut b = 1.0;
        while b < upper {
            breaks.push(b);
            b *= 2.0;
        }
        breaks.push(upper);
        breaks
    };
    let body = |upper: f64| -> Result<f64> {
        quadrature::adaptive_pieces(|x| moment_integrand(p, q, x), &breaks_to(upper), tol)
    };
    if q > p {
        // ln ∫_0^U, shifted by the largest sampled exponent so that the
        // doubled range cannot overflow
        let log_body = |upper: f64| -> Result<f64> {
            let shift = (0..=64)
                .map(|k| log_moment_integrand(p, q, upper * k as f64 / 64.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let v = quadrature::adaptive_pieces(
                |x| (log_moment_integrand(p, q, x) - shift).exp(),
                &breaks_to(upper),
                tol,
            )?;
            Ok(shift + v.ln())
        };
        let head = log_body(r)?;
        let doubled = log_body(2.0 * r)?;
        let h = 1e-3 * r;
        let increasing = log_moment_integrand(p, q, r + h) > log_moment_integrand(p, q, r - h);
        let diverging = doubled > head + 10f64.ln() || increasing;
        return Ok((c * head.exp(), diverging));
    }
    let head = body(r)?;
    let tail = if q == p {
        // q = p leaves exactly the slowly decaying kernel behind
        if r > 1.0 {
            heavy_tail_integral(r)?
        } else {
            body(2.0)? - head + heavy_tail_integral(2.0)?
        }
    } else {
        // Gaussian decay: integrate until the exponent is below -745
        let rate = (p - q) / (2.0 * p);
        let end = r.max((760.0 / rate).sqrt());
        let mut breaks = vec![r];
        let mut b = r + 1.0;
        while b < end {
            breaks.push(b);
            b += (b * 0.5).max(1.0);
        }
        breaks.push(end);
        quadrature::adaptive_pieces(|x| moment_integrand(p, q, x), &breaks, tol)?
    };
    Ok((c * (head + tail), false))
}
