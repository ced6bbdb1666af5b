//! Approximation schemes for `X(T)`, each returned together with an exact
//! sample of `X(T)` on the same probability space.
//!
//! * [`interp_scheme`]: plug `Z_n` in for `X₂(τ₁)`.
//! * [`adaptive_scheme`]: same, but component 7 uses the refined `Z_{ℓn}`
//!   with `ℓ` chosen from `|Z_n|`; cost `ℓn`.
//! * [`euler_maruyama`]: the explicit Euler recursion on `n` steps over `[0, T]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::brownian::normal;
use crate::coefficients::CoefficientSet;
use crate::exact_solution::{eval_g, log_denominator, solution_at_terminal, SolutionVector};
use crate::gaussian_model::{extend_to_level, sample_exact_pair, VarianceTable};
use crate::{lit, Error, Real, Result};

pub const DEFAULT_LEVEL_CAP: usize = 1 << 20;

/// `x₀ = (0, 0, 0, 0, 1, 0, 0)`.
pub fn initial_value<T: Real>() -> [T; 7] {
    let mut x = [T::zero(); 7];
    x[4] = T::one();
    x
}

pub fn drift<T: Real>(cs: &CoefficientSet<T>, x: &[T; 7]) -> [T; 7] {
    let p = cs.p();
    let f = cs.f(x[0]);
    let d = log_denominator(p, x[1]).exp();
    [
        T::one(),
        T::zero(),
        f * f,
        cs.g_prime(x[0]) * x[2] / (lit::<T>(4.0) * p),
        x[3] * x[4],
        cs.h_prime(x[0]) * x[4] / d,
        x[4] * x[5],
    ]
}

pub fn diffusion<T: Real>(cs: &CoefficientSet<T>, x: &[T; 7]) -> [T; 7] {
    let f = cs.f(x[0]);
    let z = T::zero();
    [z, f, lit::<T>(2.0) * x[1] * f, z, z, z, z]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutput {
    pub approx: SolutionVector<f64>,
    pub exact: SolutionVector<f64>,
    pub cost: u64,
    pub level: usize,
    pub truncated_level: bool,
}

impl SchemeOutput {
    pub fn abs_error(&self) -> [f64; 7] {
        self.approx.abs_diff(&self.exact)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds;

impl LevelThresholds {
    /// `a₁ = 0`, `a_ℓ = 2 sqrt(ln ℓ)`.
    pub fn a(&self, level: usize) -> f64 {
        2.0 * (level as f64).ln().sqrt()
    }

    /// The `ℓ >= 1` with `a_ℓ <= |z| < a_{ℓ+1}`, capped at `cap`; the flag
    /// reports whether the cap was hit.
    pub fn select(&self, z: f64, cap: usize) -> (usize, bool) {
        let cap = cap.max(1);
        let z = z.abs();
        let e = z * z / 4.0;
        if !(e < (cap as f64).ln() + 1.0) {
            return (cap, true);
        }
        let mut l = (e.exp().floor() as usize).max(1);
        while l > 1 && self.a(l) > z {
            l -= 1;
        }
        while self.a(l + 1) <= z {
            l += 1;
        }
        if l > cap {
            (cap, true)
        } else {
            (l, false)
        }
    }
}

pub fn level_select(z: f64) -> usize {
    LevelThresholds.select(z, usize::MAX).0
}

/// Builds the interpolation output from given draws; used by the scheme
/// itself and by tests that force a value of `Z_n`.
pub fn interp_from_draws(cs: &CoefficientSet<f64>, n: usize, z_n: f64, x2: f64) -> SchemeOutput {
    SchemeOutput {
        approx: solution_at_terminal(cs, z_n),
        exact: solution_at_terminal(cs, x2),
        cost: n as u64,
        level: 1,
        truncated_level: false,
    }
}

pub fn interp_scheme<R: Rng + ?Sized>(
    cs: &CoefficientSet<f64>,
    vt: &VarianceTable,
    n: usize,
    rng: &mut R,
) -> Result<SchemeOutput> {
    check_n(n)?;
    let (z, x2) = sample_exact_pair(vt, n, rng)?;
    Ok(interp_from_draws(cs, n, z, x2))
}

pub fn adaptive_scheme<R: Rng + ?Sized>(
    cs: &CoefficientSet<f64>,
    vt: &VarianceTable,
    n: usize,
    rng: &mut R,
    level_cap: usize,
) -> Result<SchemeOutput> {
    check_n(n)?;
    if level_cap == 0 {
        return Err(Error::InvalidParameter("level cap must be at least 1".into()));
    }
    let z_n = vt.nu_sq(n)?.sqrt() * normal::<f64, R>(rng);
    let (level, truncated) = LevelThresholds.select(z_n, level_cap);
    let (z_ln, x2) = extend_to_level(vt, n, level, z_n, rng)?;
    let mut approx = solution_at_terminal(cs, z_n);
    approx.x[6] = eval_g(cs.p(), z_ln);
    Ok(SchemeOutput {
        approx,
        exact: solution_at_terminal(cs, x2),
        cost: (level as u64) * (n as u64),
        level,
        truncated_level: truncated,
    })
}

/// One Euler step `x + μ(x)Δ + σ(x)ΔW`.
pub fn euler_step<T: Real>(cs: &CoefficientSet<T>, x: &[T; 7], dt: T, dw: T) -> [T; 7] {
    let mu = drift(cs, x);
    let sg = diffusion(cs, x);
    let mut out = *x;
    for i in 0..7 {
        out[i] = x[i] + mu[i] * dt + sg[i] * dw;
    }
    out
}

/// Euler–Maruyama on `n` equal steps over `[0, T]`. The exact sample uses
/// `X₂(τ₁) = Z + Y`, `Z` the functional of the Brownian values at the step
/// nodes in `(0, τ₁]`, `Y ~ N(0, 1 - Var Z)` independent.
pub fn euler_maruyama<R: Rng + ?Sized>(
    cs: &CoefficientSet<f64>,
    vt: &VarianceTable,
    n: usize,
    rng: &mut R,
) -> Result<SchemeOutput> {
    check_n(n)?;
    let prm = cs.params;
    let m_real = prm.tau1 * n as f64 / prm.t_final;
    let m = m_real.round() as usize;
    if m == 0 || (m_real - m as f64).abs() > 1e-9 * m_real.max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "{n} steps over [0, {}] do not hit tau1 = {}",
            prm.t_final, prm.tau1
        )));
    }
    let dt = prm.t_final / n as f64;
    let sq = dt.sqrt();
    let mut x = initial_value::<f64>();
    let mut w = 0.0;
    let mut observed = Vec::with_capacity(m);
    for k in 0..n {
        let dw = sq * normal::<f64, R>(rng);
        x = euler_step(cs, &x, dt, dw);
        // accumulated dt drifts by rounding; the node time is exact
        x[0] = prm.t_final * (k + 1) as f64 / n as f64;
        w += dw;
        if k < m {
            observed.push(w);
        }
    }
    let functional = vt.functional(m)?;
    let z = functional.apply(&observed);
    let y = vt.sigma_sq(m)?.sqrt() * normal::<f64, R>(rng);
    Ok(SchemeOutput {
        approx: SolutionVector::new(x),
        exact: solution_at_terminal(cs, z + y),
        cost: n as u64,
        level: 1,
        truncated_level: false,
    })
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    #[test]
    fn coefficients_at_initial_value() {
        let cs = CoefficientSet::standard();
        let x0 = initial_value::<f64>();
        let f0 = cs.f(0.0);
        assert_eq!(drift(&cs, &x0), [1.0, 0.0, f0 * f0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(diffusion(&cs, &x0), [0.0, f0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let x = [1.5, 0.3, 2.0, 1.0, 4.0, 0.5, 0.2];
        assert_eq!(drift(&cs, &x)[5], 0.0);
        let s = diffusion(&cs, &[0.2, 0.7, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(s.iter().enumerate().all(|(i, v)| (*v != 0.0) == (i == 1 || i == 2)));
    }

    #[test]
    fn thresholds() {
        let th = LevelThresholds;
        assert_eq!(th.a(1), 0.0);
        assert_relative_eq!(th.a(2), 1.665_109_222_315_395_5, max_relative = 1e-15);
        for l in 2..1000 {
            assert!(th.a(l + 1) > th.a(l));
        }
        assert_eq!(level_select(0.5), 1);
        assert_eq!(level_select(2.0), 2);
        assert_eq!(level_select(-2.0), 2);
        assert_eq!(level_select(th.a(2)), 2);
        assert_eq!(level_select(th.a(3)), 3);
        for l in [5, 77, 1000, 123_456] {
            let z = th.a(l);
            assert_eq!(level_select(z), l);
            assert_eq!(level_select(0.5 * (z + th.a(l + 1))), l);
        }
        assert_eq!(th.select(8.0, 1 << 20), (1 << 20, true));
        assert_eq!(th.select(f64::INFINITY, 16), (16, true));
    }

    #[test]
    fn forced_zero_draw() {
        let cs = CoefficientSet::standard();
        let out = interp_from_draws(&cs, 8, 0.0, 0.3);
        assert_eq!(out.approx, solution_at_terminal(&cs, 0.0));
        assert_eq!(out.cost, 8);
    }

    #[test]
    fn exact_components_and_cost() {
        let cs = CoefficientSet::standard();
        let vt = VarianceTable::new(&cs);
        let mut r = rng::stream(11, 0, 0, 0);
        for _ in 0..2000 {
            let o = interp_scheme(&cs, &vt, 16, &mut r).unwrap();
            for k in [0, 3, 5] {
                assert_eq!(o.approx.x[k], o.exact.x[k]);
            }
            let a = adaptive_scheme(&cs, &vt, 16, &mut r, DEFAULT_LEVEL_CAP).unwrap();
            assert_eq!(a.cost, a.level as u64 * 16);
            for k in [0, 3, 5] {
                assert_eq!(a.approx.x[k], a.exact.x[k]);
            }
            if a.level == 1 {
                assert_eq!(a.approx.x[6], eval_g(2.0, a.approx.x[1]));
            }
        }
    }

    #[test]
    fn euler_first_step_and_final_time() {
        let cs = CoefficientSet::standard();
        let x0 = initial_value::<f64>();
        let (dt, dw) = (0.1, -0.2);
        let f0 = cs.f(0.0);
        let x1 = euler_step(&cs, &x0, dt, dw);
        assert_eq!(x1, [dt, f0 * dw, f0 * f0 * dt, 0.0, 1.0, 0.0, 0.0]);
        let vt = VarianceTable::new(&cs);
        let mut r = rng::stream(12, 0, 0, 0);
        let o = euler_maruyama(&cs, &vt, 48, &mut r).unwrap();
        assert_eq!(o.approx.x[0], 3.0);
        assert!(euler_maruyama(&cs, &vt, 4, &mut r).is_err());
    }
}
