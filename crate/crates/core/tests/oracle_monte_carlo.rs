//! Monte Carlo checks of the deterministic oracles.
//!
//! The error integrands decay like `1/(z ln² z)` in the outer variable, so
//! plain sampling never sees most of the mass. The outer variable is drawn
//! from a heavy proposal with `P(|z| > a) = 1/ln(e + a)`, truncated at twice
//! the oracle's cut, and the inner Gaussian expectation is done per draw by
//! direct quadrature in log space (no tilting). The oracle minus its exact
//! tail beyond the truncation point is the reference.

use std::f64::consts::{E, PI};

use pathsde_core::coefficients::CoefficientSet;
use pathsde_core::exact_solution::{eval_g, heavy_tail_integral, log_g, log_r};
use pathsde_core::gaussian_model::VarianceTable;
use pathsde_core::oracles::{
    conditional_abs_deviation, conditional_mean_error_for, conditional_median, symmetrization_moment, GapConstruction,
};
use pathsde_core::quadrature;
use pathsde_core::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Proposal {
    cut: f64,
    mass: f64,
}

impl Proposal {
    fn new(cut: f64) -> Self {
        Proposal {
            cut,
            mass: 1.0 - 1.0 / (E + cut).ln(),
        }
    }

    fn sample<R: Rng>(&self, r: &mut R) -> f64 {
        let u: f64 = r.random::<f64>() * self.mass;
        ((1.0 - u).recip()).exp() - E
    }

    fn density(&self, a: f64) -> f64 {
        let l = (E + a).ln();
        1.0 / ((E + a) * l * l * self.mass)
    }
}

/// `ln ∫ exp(w(y)) dy` over `[lo, hi]`, shifted by the largest sampled value.
fn log_integral<F: Fn(f64) -> f64>(w: F, lo: f64, hi: f64) -> f64 {
    let shift = (0..=400)
        .map(|k| w(lo + (hi - lo) * k as f64 / 400.0))
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return shift;
    }
    // rounding in w near y₁ = 0 is about 1e-5 relative; the estimate only needs 1e-6
    let v = quadrature::adaptive_pieces_scaled(|y| (w(y) - shift).exp(), &[lo, hi], 1e-6, 8192).unwrap();
    shift + v.ln()
}

/// `ln G(x + d) - ln G(x)` at p = 2, with the quadratic part expanded so
/// that large `x` does not cancel.
fn log_g_step(x: f64, d: f64) -> f64 {
    d * (2.0 * x + d) / 4.0 + log_r(2.0, x + d) - log_r(2.0, x)
}

fn ln_phi(x: f64, var: f64) -> f64 {
    -x * x / (2.0 * var) - 0.5 * (2.0 * PI * var).ln()
}

/// Mean and standard error of `2 h(a)/q(a)` over draws.
fn importance_estimate<H: Fn(f64) -> f64 + Sync>(h: H, prop: &Proposal, seed: u64, draws: usize) -> (f64, f64) {
    let chunks = 64;
    let vals: Vec<f64> = (0..chunks as u64)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, 0, c, rng::purpose::TEST);
            let h = &h;
            (0..draws / chunks)
                .map(move |_| {
                    let a = prop.sample(&mut r);
                    2.0 * h(a) / prop.density(a)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn conditional_mean_error_at_64() {
    let cs = CoefficientSet::standard();
    let vt = VarianceTable::new(&cs);
    let sq = vt.sigma_sq(64).unwrap();
    let (s, nu_sq) = (sq.sqrt(), 1.0 - sq);
    let prop = Proposal::new(40.0 / s);
    // φ_ν(z) Var G(z+Y), everything relative to G(z)
    let h = |z: f64| {
        let lg = log_g(2.0, z);
        let w = |k: f64| move |y: f64| ln_phi(y, sq) + k * log_g_step(z, y);
        let (lo, hi) = (-14.0 * s + z.min(0.0), 14.0 * s);
        let lo = lo.min(sq * z - 14.0 * s);
        let hi = hi.max(2.0 * sq * z + 14.0 * s);
        let l1 = log_integral(w(1.0), lo, hi);
        let l2 = log_integral(w(2.0), lo, hi);
        // Var = E2 (1 - E1²/E2)
        let ln_var = l2 + (-(2.0 * l1 - l2).exp_m1()).ln();
        (ln_phi(z, nu_sq) + 2.0 * lg + ln_var).exp()
    };
    let (est, se) = importance_estimate(h, &prop, 41, 200_000);
    let total = conditional_mean_error_for(sq).unwrap().powi(2);
    let tail = 2.0 / (2.0 * PI).sqrt() * heavy_tail_integral(prop.cut / nu_sq).unwrap();
    let reference = total - tail;
    assert!((est - reference).abs() <= 3.0 * se, "IS-MC {est} ± {se} vs {reference}");
    assert!(se < 0.01 * reference);
}

#[test]
fn symmetrization_moment_at_64() {
    let cs = CoefficientSet::standard();
    let gap = GapConstruction::new(&cs, 64).unwrap();
    let (s2, s1) = (gap.sigma2_sq, gap.sigma1_sq);
    let prop = Proposal::new(30.0 / s2.sqrt());
    // φ_{σ₁}(y₁) E|G(y₁+Y₂) - G(y₁-Y₂)|², relative to G(y₁)
    let h = |y1: f64| {
        let lg = log_g(2.0, y1);
        let w = move |y2: f64| {
            let a = log_g_step(y1, y2);
            let b = log_g_step(y1, -y2);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            ln_phi(y2, s2) + 2.0 * (hi + (-(lo - hi).exp_m1()).ln())
        };
        let span = 14.0 * s2.sqrt() + 2.0 * s2 * y1;
        // the integrand is even in y₂ and vanishes at 0
        let l = log_integral(w, 1e-300, span) + 2f64.ln();
        (ln_phi(y1, s1) + 2.0 * lg + l).exp()
    };
    let (est, se) = importance_estimate(h, &prop, 42, 200_000);
    let total = symmetrization_moment(2.0, s2).unwrap();
    let tail = 4.0 / (2.0 * PI).sqrt() * heavy_tail_integral(prop.cut / s1).unwrap();
    let reference = total - tail;
    assert!((est - reference).abs() <= 3.0 * se, "IS-MC {est} ± {se} vs {reference}");
    assert!(se < 0.01 * reference);
}

/// Conditional medians and mean absolute deviations at fixed `z` against
/// empirical quantiles of `G(z+Y)` at p = 1.
#[test]
fn conditional_median_per_z() {
    let cs = CoefficientSet::standard();
    let vt = VarianceTable::new(&cs);
    let sq = vt.sigma_sq(64).unwrap();
    let s = sq.sqrt();
    for (i, z) in [0.0, 0.3, 1.0, 1.46, 2.5, 8.0].into_iter().enumerate() {
        let mut r = rng::stream(43, 64, i as u64, rng::purpose::TEST);
        let mut g: Vec<f64> = (0..1_000_000)
            .map(|_| eval_g(1.0, z + s * r.sample::<f64, _>(StandardNormal)))
            .collect();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med_emp = 0.5 * (g[499_999] + g[500_000]);
        let (med, _) = conditional_median(z, s).unwrap();
        assert!((med - med_emp).abs() <= 0.02 * med_emp, "z = {z}: {med} vs {med_emp}");
        let dev_emp = g.iter().map(|x| (x - med_emp).abs()).sum::<f64>() / g.len() as f64;
        let dev = conditional_abs_deviation(z, sq).unwrap();
        assert!((dev - dev_emp).abs() <= 0.02 * dev_emp, "z = {z}: {dev} vs {dev_emp}");
        if z >= 3.0 {
            assert!(med >= eval_g(1.0, z - 3.0 * s) && med <= eval_g(1.0, z + 3.0 * s));
        }
    }
}
