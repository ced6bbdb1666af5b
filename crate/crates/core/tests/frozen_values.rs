//! Reference values computed independently (mpmath, 30 digits) and frozen.

use approx::assert_relative_eq;
use pathsde_core::coefficients::CoefficientSet;
use pathsde_core::exact_solution::{eval_g, g_critical_point, moment_integral};
use pathsde_core::oracles::{alpha_beta, lower_bound_constant, threshold_n0};
use pathsde_core::schemes::LevelThresholds;

#[test]
fn normalization_constants() {
    let cs = CoefficientSet::standard();
    assert_relative_eq!(cs.c_f, 5.161_620_379_803_947, max_relative = 1e-12);
    assert_relative_eq!(cs.c_g, 142.250_375_777_095_87, max_relative = 1e-12);
    assert_relative_eq!(cs.c_h, 142.250_375_777_095_87, max_relative = 1e-12);
}

#[test]
fn g_values() {
    assert_relative_eq!(eval_g(1.0, 3.0), 4.950_678_746_352_01, max_relative = 1e-14);
    // 1/ln 2
    assert_relative_eq!(eval_g(2.0, 0.0), std::f64::consts::LOG2_E, max_relative = 1e-15);
    // root of 1 - 1/(1+x²) - 4/((2+x²) ln(2+x²))
    assert_relative_eq!(g_critical_point(), 1.461_574_512_960_559, max_relative = 1e-9);
}

#[test]
fn second_moment_of_g() {
    let (v, div) = moment_integral(2.0, 2.0, 20.0).unwrap();
    assert!(!div);
    assert_relative_eq!(v, 1.570_119_939_980_972_5, max_relative = 1e-10);
}

#[test]
fn lower_bound_ingredients() {
    let cs = CoefficientSet::standard();
    let (alpha, beta) = alpha_beta(&cs);
    assert_relative_eq!(alpha, 3.605_646_592_541_521, max_relative = 1e-8);
    assert_relative_eq!(beta, 7.807_539_245_643_746, max_relative = 1e-8);
    assert_eq!(threshold_n0(1.0, beta), 0);
    assert_relative_eq!(
        lower_bound_constant(&cs, 2.0),
        0.002_195_979_236_118_614,
        max_relative = 1e-8
    );
}

#[test]
fn level_thresholds() {
    assert_relative_eq!(LevelThresholds.a(3), 2.096_294_147_936_41, max_relative = 1e-14);
}
