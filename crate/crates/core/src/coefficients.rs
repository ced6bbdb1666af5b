//! Smooth bump coefficients `f`, `g`, `h` and their normalization.
//!
//! `f` lives on `(-inf, tau1]`, `g` on `[tau1, tau2]` and `h` on
//! `[tau2, T]`. Each is `exp` of a rational function that vanishes with all
//! derivatives at the support boundary. The constants `c_f`, `c_g`, `c_h`
//! enforce `∫_0^{tau1} f² = ∫ g = ∫ h = 1`.

use serde::{Deserialize, Serialize};

use crate::quadrature::{self, Tolerance};
use crate::schemes::{diffusion, drift};
use crate::{lit, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub tau1: T,
    pub tau2: T,
    #[serde(rename = "T")]
    pub t_final: T,
    pub p: T,
}

impl Default for ModelParams<f64> {
    fn default() -> Self {
        ModelParams {
            tau1: 1.0,
            tau2: 2.0,
            t_final: 3.0,
            p: 2.0,
        }
    }
}

impl Default for ModelParams<f32> {
    fn default() -> Self {
        ModelParams {
            tau1: 1.0,
            tau2: 2.0,
            t_final: 3.0,
            p: 2.0,
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new(tau1: T, tau2: T, t_final: T, p: T) -> Result<Self> {
        let params = ModelParams { tau1, tau2, t_final, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = T::zero() < self.tau1 && self.tau1 < self.tau2 && self.tau2 < self.t_final;
        if !ordered || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 < tau1 < tau2 < T, got tau1={}, tau2={}, T={}",
                self.tau1, self.tau2, self.t_final
            )));
        }
        if !(self.p >= T::one()) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!("need p >= 1, got {}", self.p)));
        }
        Ok(())
    }

    pub fn with_p(mut self, p: T) -> Result<Self> {
        self.p = p;
        self.validate()?;
        Ok(self)
    }
}

/// Normalized coefficient functions. Immutable once built.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet<T> {
    pub params: ModelParams<T>,
    pub c_f: T,
    pub c_g: T,
    pub c_h: T,
    pub quad_tol: T,
}

/// The three normalization integrals, each of which should equal one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub int_f_squared: f64,
    pub int_g: f64,
    pub int_h: f64,
    pub c_f: f64,
    pub c_g: f64,
    pub c_h: f64,
}

impl NormalizationReport {
    pub fn max_deviation(&self) -> f64 {
        [self.int_f_squared, self.int_g, self.int_h]
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `exp(e)`, or exactly zero once `e` is below the representable range.
#[inline]
fn guarded_exp<T: Real>(e: T) -> T {
    let floor = lit::<T>(-700.0).max(T::min_positive_value().ln());
    if e < floor || e.is_nan() {
        T::zero()
    } else {
        e.exp()
    }
}

/// Unnormalized `f̃(t) = exp(1/(t - tau1))` for `t < tau1`.
fn bump_left<T: Real>(tau1: T, t: T) -> T {
    if t < tau1 {
        guarded_exp((t - tau1).recip())
    } else {
        T::zero()
    }
}

/// Unnormalized `exp(1/(a - t) + 1/(t - b))` for `a < t < b`.
fn bump_inner<T: Real>(a: T, b: T, t: T) -> T {
    if a < t && t < b {
        guarded_exp((a - t).recip() + (t - b).recip())
    } else {
        T::zero()
    }
}

fn bump_inner_prime<T: Real>(a: T, b: T, t: T) -> T {
    let v = bump_inner(a, b, t);
    if v == T::zero() {
        return v;
    }
    let l = (a - t).recip();
    let r = (t - b).recip();
    v * (l * l - r * r)
}

impl<T: Real> CoefficientSet<T> {
    /// Computes the normalization constants by adaptive Gauss–Legendre
    /// quadrature to absolute tolerance `quad_tol`.
    pub fn normalize(params: ModelParams<T>, quad_tol: T) -> Result<Self> {
        params.validate()?;
        if !(quad_tol > T::zero()) {
            return Err(Error::InvalidParameter("quad_tol must be positive".into()));
        }
        let tol = Tolerance {
            abs: quad_tol.to_f64().unwrap(),
            rel: 0.0,
            max_panels: 1 << 18,
        };
        let ModelParams {
            tau1, tau2, t_final, ..
        } = params;
        // The raw integrals are tiny (≈1e-2, 7e-3), so tighten the
        // tolerance by the scale the constants will later multiply.
        let raw_f = quadrature::adaptive(
            |t| {
                let v = bump_left(tau1, t);
                v * v
            },
            T::zero(),
            tau1,
            scaled(tol, 1e-3),
        )?;
        let raw_g = quadrature::adaptive(|t| bump_inner(tau1, tau2, t), tau1, tau2, scaled(tol, 1e-3))?;
        let raw_h = quadrature::adaptive(|t| bump_inner(tau2, t_final, t), tau2, t_final, scaled(tol, 1e-3))?;
        if !(raw_f > T::zero() && raw_g > T::zero() && raw_h > T::zero()) {
            return Err(Error::Invariant("normalization integral is not positive".into()));
        }
        Ok(CoefficientSet {
            params,
            c_f: raw_f.sqrt().recip(),
            c_g: raw_g.recip(),
            c_h: raw_h.recip(),
            quad_tol,
        })
    }

    pub fn p(&self) -> T {
        self.params.p
    }

    pub fn f(&self, t: T) -> T {
        self.c_f * bump_left(self.params.tau1, t)
    }

    pub fn f_prime(&self, t: T) -> T {
        let tau1 = self.params.tau1;
        let v = self.f(t);
        if v == T::zero() {
            return v;
        }
        let d = (t - tau1).recip();
        -v * d * d
    }

    pub fn g(&self, t: T) -> T {
        self.c_g * bump_inner(self.params.tau1, self.params.tau2, t)
    }

    pub fn g_prime(&self, t: T) -> T {
        self.c_g * bump_inner_prime(self.params.tau1, self.params.tau2, t)
    }

    pub fn h(&self, t: T) -> T {
        self.c_h * bump_inner(self.params.tau2, self.params.t_final, t)
    }

    pub fn h_prime(&self, t: T) -> T {
        self.c_h * bump_inner_prime(self.params.tau2, self.params.t_final, t)
    }

    /// `∫_0^t g(s) ds`.
    pub fn g_integral_to(&self, t: T) -> Result<T> {
        let ModelParams { tau1, tau2, .. } = self.params;
        if t <= tau1 {
            return Ok(T::zero());
        }
        let upper = t.min(tau2);
        let tol = Tolerance::absolute(self.quad_tol.to_f64().unwrap());
        quadrature::adaptive(|s| self.g(s), tau1, upper, tol)
    }

    /// `∫_0^t h(s) ds`.
    pub fn h_integral_to(&self, t: T) -> Result<T> {
        let ModelParams { tau2, t_final, .. } = self.params;
        if t <= tau2 {
            return Ok(T::zero());
        }
        let upper = t.min(t_final);
        let tol = Tolerance::absolute(self.quad_tol.to_f64().unwrap());
        quadrature::adaptive(|s| self.h(s), tau2, upper, tol)
    }

    /// Re-integrates the three normalized coefficients.
    pub fn normalization_report(&self) -> Result<NormalizationReport> {
        let ModelParams {
            tau1, tau2, t_final, ..
        } = self.params;
        let tol = Tolerance::absolute((self.quad_tol.to_f64().unwrap() * 1e-2).max(1e-15));
        let f2 = quadrature::adaptive(
            |t| {
                let v = self.f(t);
                v * v
            },
            T::zero(),
            tau1,
            tol,
        )?;
        let g = quadrature::adaptive(|t| self.g(t), tau1, tau2, tol)?;
        let h = quadrature::adaptive(|t| self.h(t), tau2, t_final, tol)?;
        Ok(NormalizationReport {
            int_f_squared: f2.to_f64().unwrap(),
            int_g: g.to_f64().unwrap(),
            int_h: h.to_f64().unwrap(),
            c_f: self.c_f.to_f64().unwrap(),
            c_g: self.c_g.to_f64().unwrap(),
            c_h: self.c_h.to_f64().unwrap(),
        })
    }

    /// `sup |f'|²` over `[a, b]` by dense scan plus golden-section refinement.
    pub fn sup_f_prime_sq(&self, a: T, b: T) -> T {
        quadrature::maximize(
            |t| {
                let d = self.f_prime(t);
                d * d
            },
            a,
            b,
            100_001,
        )
        .1
    }

    /// `inf |f'|²` over `[a, b]`.
    pub fn inf_f_prime_sq(&self, a: T, b: T) -> T {
        -quadrature::maximize(
            |t| {
                let d = self.f_prime(t);
                -(d * d)
            },
            a,
            b,
            100_001,
        )
        .1
    }
}

fn scaled(tol: Tolerance, factor: f64) -> Tolerance {
    Tolerance {
        abs: tol.abs * factor,
        ..tol
    }
}

impl CoefficientSet<f64> {
    /// Default coefficients (`tau1 = 1, tau2 = 2, T = 3, p = 2`, tolerance 1e-12).
    pub fn standard() -> Self {
        Self::normalize(ModelParams::default(), 1e-12).expect("default coefficients normalize")
    }
}

/// Maximum over the sample points of
/// `Σ_{i,j} (|∂μ_i/∂x_j| + |∂σ_i/∂x_j|) / (1 + |x|)`, with the Jacobians
/// taken by central finite differences of [`drift`] and [`diffusion`].
pub fn derivative_growth_scan<T: Real>(cs: &CoefficientSet<T>, sample_box: &[[T; 7]]) -> T {
    let mut worst = T::zero();
    for x in sample_box {
        let norm = x.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt();
        let mut total = T::zero();
        for j in 0..7 {
            let h = T::epsilon().cbrt() * x[j].abs().max(T::one());
            let mut up = *x;
            let mut down = *x;
            up[j] = x[j] + h;
            down[j] = x[j] - h;
            let step = up[j] - down[j];
            let (mu_up, mu_down) = (drift(cs, &up), drift(cs, &down));
            let (sg_up, sg_down) = (diffusion(cs, &up), diffusion(cs, &down));
            for i in 0..7 {
                total = total + ((mu_up[i] - mu_down[i]) / step).abs();
                total = total + ((sg_up[i] - sg_down[i]) / step).abs();
            }
        }
        let ratio = total / (T::one() + norm);
        if ratio > worst {
            worst = ratio;
        }
    }
    worst
}
