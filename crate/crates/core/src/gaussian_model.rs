//! Gaussian decomposition `X₂(τ₁) = Z + Y`.
//!
//! `Z = -∫ f'(t) W̄(t) dt` is the functional of the observed values through
//! their piecewise linear interpolant `W̄`, and `Y = -∫ f'(t) B(t) dt` the
//! independent bridge remainder. On `m` equidistant cells `Var Z = ν²_m` and
//! `Var Y = σ²_m` with `ν²_m + σ²_m = 1`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::brownian::normal;
use crate::coefficients::CoefficientSet;
use crate::quadrature::{self, gl15, gl8, Tolerance};
use crate::{Error, Result};

/// Cells at most this wide use fixed Gauss rules instead of adaptive ones.
const FIXED_RULE_WIDTH: f64 = 1.0 / 256.0;

/// Largest grid size whose variances are computed cell by cell; beyond it
/// `σ²_m = A/m² + B/m⁴` is fitted through the two largest exact values.
pub const EXACT_LIMIT: usize = 1 << 16;

const CELL_TOL: Tolerance = Tolerance {
    abs: 1e-17,
    rel: 1e-13,
    max_panels: 1 << 14,
};

/// `Z = Σ wᵢ W(tᵢ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunctional {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub tau1: f64,
}

impl GridFunctional {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Whether the last node is `τ₁`. Otherwise the interpolant is held
    /// constant on `[t_last, τ₁]`, which is not the conditional mean of `W`
    /// there, so `Z` is then not `E[X₂(τ₁) | observations]`.
    pub fn covers_tau1(&self) -> bool {
        (self.nodes.last().copied().unwrap_or(0.0) - self.tau1).abs() <= 1e-12 * self.tau1
    }

    /// `Var Z = Σ_k S_k² (t_k - t_{k-1})` with tail sums `S_k = Σ_{i≥k} wᵢ`.
    pub fn variance(&self) -> f64 {
        let mut tail = 0.0;
        let mut acc = 0.0;
        for k in (0..self.nodes.len()).rev() {
            tail += self.weights[k];
            let prev = if k == 0 { 0.0 } else { self.nodes[k - 1] };
            acc += tail * tail * (self.nodes[k] - prev);
        }
        acc
    }

    /// `Σ_{i,j} wᵢ wⱼ min(tᵢ, tⱼ)`, the same variance in quadratic form.
    pub fn variance_quadratic_form(&self) -> f64 {
        let n = self.nodes.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.weights[i] * self.weights[j] * self.nodes[i].min(self.nodes[j]);
            }
        }
        acc
    }
}

/// `∫_a^b f'(t) (t - a)/(b - a) dt`.
fn hat_moment(cs: &CoefficientSet<f64>, a: f64, b: f64) -> Result<f64> {
    let d = b - a;
    let f = |t: f64| cs.f_prime(t) * (t - a) / d;
    if d <= FIXED_RULE_WIDTH {
        Ok(gl15().integrate(a, b, f))
    } else {
        quadrature::adaptive(f, a, b, CELL_TOL)
    }
}

/// Bridge variance `Var(-∫_a^b f'(t) B(t) dt)` of one cell.
///
/// Written as `(2/Δ) ∫_a^b f'(t)(b-t)(t-a)² ∫_0^1 f'(a+(t-a)v) v dv dt`, which
/// is smooth on the cell and needs no split along the diagonal.
pub fn cell_sigma_squared(cs: &CoefficientSet<f64>, a: f64, b: f64) -> Result<f64> {
    if !(b > a) {
        return Err(Error::InvalidGrid(format!("empty cell [{a}, {b}]")));
    }
    let d = b - a;
    if a >= cs.params.tau1 {
        return Ok(0.0);
    }
    if d <= FIXED_RULE_WIDTH {
        let rule = gl8();
        let outer = |t: f64| {
            let ft = cs.f_prime(t);
            if ft == 0.0 {
                return 0.0;
            }
            let inner = rule.integrate(0.0, 1.0, |v: f64| cs.f_prime(a + (t - a) * v) * v);
            ft * (b - t) * (t - a) * (t - a) * inner
        };
        return Ok(2.0 / d * rule.integrate(a, b, outer));
    }
    let mut failure = None;
    let outer = |t: f64| {
        let ft = cs.f_prime(t);
        if ft == 0.0 || t <= a {
            return 0.0;
        }
        match quadrature::adaptive(|v: f64| cs.f_prime(a + (t - a) * v) * v, 0.0, 1.0, CELL_TOL) {
            Ok(inner) => ft * (b - t) * (t - a) * (t - a) * inner,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let total = quadrature::adaptive(outer, a, b, CELL_TOL)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(2.0 / d * total),
    }
}

/// Weights of `Z = -∫_0^{τ₁} f'(t) W̄(t) dt` for an arbitrary node set in
/// `(0, τ₁]`. `W̄` interpolates linearly from `W(0) = 0` and is held at the
/// last value if the nodes stop short of `τ₁`.
pub fn build_functional(cs: &CoefficientSet<f64>, nodes: &[f64]) -> Result<GridFunctional> {
    let tau1 = cs.params.tau1;
    if nodes.is_empty() {
        return Err(Error::InvalidGrid("node set is empty".into()));
    }
    let mut prev = 0.0;
    for &t in nodes {
        if !(t > prev) || t > tau1 * (1.0 + 1e-14) {
            return Err(Error::InvalidGrid(format!(
                "nodes must be strictly increasing in (0, {tau1}], got {t} after {prev}"
            )));
        }
        prev = t;
    }
    let m = nodes.len();
    // hat[k] and jump[k] belong to the cell ending at node k
    let mut hat = Vec::with_capacity(m);
    let mut jump = Vec::with_capacity(m);
    let mut a = 0.0;
    for &b in nodes {
        hat.push(hat_moment(cs, a, b)?);
        jump.push(cs.f(b) - cs.f(a));
        a = b;
    }
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let right = if i + 1 < m {
            jump[i + 1] - hat[i + 1]
        } else {
            -cs.f(nodes[i])
        };
        weights.push(-hat[i] - right);
    }
    Ok(GridFunctional {
        nodes: nodes.to_vec(),
        weights,
        tau1,
    })
}

fn equidistant_nodes(tau1: f64, m: usize) -> Vec<f64> {
    let mut nodes: Vec<f64> = (1..=m).map(|i| tau1 * i as f64 / m as f64).collect();
    nodes[m - 1] = tau1;
    nodes
}

/// `σ²_m` summed cell by cell over `m` equidistant cells of `[0, τ₁]`.
pub fn sigma_squared(cs: &CoefficientSet<f64>, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("grid size must be at least 1".into()));
    }
    let tau1 = cs.params.tau1;
    let mut acc = 0.0;
    let mut comp = 0.0;
    for i in 0..m {
        let a = tau1 * i as f64 / m as f64;
        let b = if i + 1 == m {
            tau1
        } else {
            tau1 * (i + 1) as f64 / m as f64
        };
        let y = cell_sigma_squared(cs, a, b)? - comp;
        let t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub m: usize,
    pub nu_sq: f64,
    pub sigma_sq: f64,
    /// Set when `σ²_m` comes from the asymptotic fit rather than cell sums.
    pub extrapolated: bool,
}

/// Lazily filled, thread-safe cache of `(ν²_m, σ²_m)`.
#[derive(Debug)]
pub struct VarianceTable {
    cs: CoefficientSet<f64>,
    pub gamma: f64,
    entries: Mutex<HashMap<usize, VarianceEntry>>,
    functionals: Mutex<HashMap<usize, Arc<GridFunctional>>>,
    asymptote: OnceLock<(f64, f64)>,
}

impl VarianceTable {
    pub fn new(cs: &CoefficientSet<f64>) -> Self {
        let gamma = cs.sup_f_prime_sq(0.0, cs.params.tau1);
        VarianceTable {
            cs: *cs,
            gamma,
            entries: Mutex::new(HashMap::new()),
            functionals: Mutex::new(HashMap::new()),
            asymptote: OnceLock::new(),
        }
    }

    pub fn coefficients(&self) -> &CoefficientSet<f64> {
        &self.cs
    }

    /// `γ τ₁³ / (12 m²)`.
    pub fn bound(&self, m: usize) -> f64 {
        let tau1 = self.cs.params.tau1;
        self.gamma * tau1.powi(3) / (12.0 * (m as f64).powi(2))
    }

    pub fn entry(&self, m: usize) -> Result<VarianceEntry> {
        if m == 0 {
            return Err(Error::InvalidParameter("grid size must be at least 1".into()));
        }
        if let Some(e) = self.entries.lock().unwrap().get(&m) {
            return Ok(*e);
        }
        let e = self.compute(m)?;
        self.entries.lock().unwrap().insert(m, e);
        Ok(e)
    }

    fn compute(&self, m: usize) -> Result<VarianceEntry> {
        if m > EXACT_LIMIT {
            let (a, b) = self.asymptote()?;
            let mf = m as f64;
            let sigma_sq = a / (mf * mf) + b / (mf * mf * mf * mf);
            return Ok(VarianceEntry {
                m,
                nu_sq: 1.0 - sigma_sq,
                sigma_sq,
                extrapolated: true,
            });
        }
        let sigma_sq = sigma_squared(&self.cs, m)?;
        let nu_sq = build_functional(&self.cs, &equidistant_nodes(self.cs.params.tau1, m))?.variance();
        if !(nu_sq > 0.0) {
            return Err(Error::Invariant(format!("degenerate nu^2_{m} = {nu_sq}")));
        }
        Ok(VarianceEntry {
            m,
            nu_sq,
            sigma_sq,
            extrapolated: false,
        })
    }

    fn asymptote(&self) -> Result<(f64, f64)> {
        if let Some(ab) = self.asymptote.get() {
            return Ok(*ab);
        }
        let m2 = EXACT_LIMIT;
        let m1 = m2 / 2;
        let a1 = self.entry(m1)?.sigma_sq * (m1 as f64).powi(2);
        let a2 = self.entry(m2)?.sigma_sq * (m2 as f64).powi(2);
        let b_scaled = (a1 - a2) / 3.0;
        let ab = (a2 - b_scaled, b_scaled * (m2 as f64).powi(2));
        Ok(*self.asymptote.get_or_init(|| ab))
    }

    pub fn sigma_sq(&self, m: usize) -> Result<f64> {
        Ok(self.entry(m)?.sigma_sq)
    }

    pub fn nu_sq(&self, m: usize) -> Result<f64> {
        Ok(self.entry(m)?.nu_sq)
    }

    /// Checks `|ν² + σ² - 1| <= 1e-10` and `σ²_m <= γτ₁³/(12m²)`.
    pub fn verify(&self, m: usize) -> Result<VarianceEntry> {
        let e = self.entry(m)?;
        let gap = (e.nu_sq + e.sigma_sq - 1.0).abs();
        if gap > 1e-10 {
            return Err(Error::Invariant(format!("nu^2 + sigma^2 - 1 = {gap:e} at m = {m}")));
        }
        if e.sigma_sq > self.bound(m) {
            return Err(Error::Invariant(format!(
                "sigma^2_{m} = {:e} exceeds bound {:e}",
                e.sigma_sq,
                self.bound(m)
            )));
        }
        Ok(e)
    }

    /// Functional of the `m` equidistant nodes `iτ₁/m`, cached.
    pub fn functional(&self, m: usize) -> Result<Arc<GridFunctional>> {
        if m == 0 {
            return Err(Error::InvalidParameter("grid size must be at least 1".into()));
        }
        if let Some(f) = self.functionals.lock().unwrap().get(&m) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(build_functional(&self.cs, &equidistant_nodes(self.cs.params.tau1, m))?);
        self.functionals.lock().unwrap().insert(m, Arc::clone(&f));
        Ok(f)
    }
}

/// Draws `Z_n ~ N(0, ν²_n)` and `X₂ = Z_n + Y` with independent
/// `Y ~ N(0, σ²_n)`.
pub fn sample_exact_pair<R: Rng + ?Sized>(vt: &VarianceTable, n: usize, rng: &mut R) -> Result<(f64, f64)> {
    let e = vt.entry(n)?;
    let z: f64 = e.nu_sq.sqrt() * normal::<f64, R>(rng);
    let y: f64 = e.sigma_sq.sqrt() * normal::<f64, R>(rng);
    Ok((z, z + y))
}

/// Given `Z_n`, draws `Z_{ℓn} = Z_n + Δ` with `Var Δ = σ²_n - σ²_{ℓn}` and a
/// fresh `X₂ = Z_{ℓn} + Y`, `Y ~ N(0, σ²_{ℓn})`.
pub fn extend_to_level<R: Rng + ?Sized>(
    vt: &VarianceTable,
    n: usize,
    level: usize,
    z_n: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if level == 0 {
        return Err(Error::InvalidParameter("level must be at least 1".into()));
    }
    let sigma_n = vt.sigma_sq(n)?;
    if level == 1 {
        let y: f64 = sigma_n.sqrt() * normal::<f64, R>(rng);
        return Ok((z_n, z_n + y));
    }
    let m = n
        .checked_mul(level)
        .ok_or_else(|| Error::InvalidParameter("level times n overflows".into()))?;
    let sigma_ln = vt.sigma_sq(m)?;
    let inc = sigma_n - sigma_ln;
    if inc < 0.0 {
        return Err(Error::Invariant(format!("sigma^2 increased from n={n} to {m}")));
    }
    let z_ln = z_n + inc.sqrt() * normal::<f64, R>(rng);
    let y: f64 = sigma_ln.sqrt() * normal::<f64, R>(rng);
    Ok((z_ln, z_ln + y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    fn setup() -> (CoefficientSet<f64>, VarianceTable) {
        let cs = CoefficientSet::standard();
        let vt = VarianceTable::new(&cs);
        (cs, vt)
    }

    #[test]
    fn identity_and_bound_for_small_grids() {
        let (_, vt) = setup();
        for m in [1, 2, 3, 4, 8, 64, 256, 1024] {
            let e = vt.verify(m).unwrap();
            assert!((e.nu_sq + e.sigma_sq - 1.0).abs() < 1e-10, "m={m}: {e:?}");
        }
    }

    #[test]
    fn single_node_weight() {
        let cs = CoefficientSet::standard();
        let g = build_functional(&cs, &[1.0]).unwrap();
        let direct = -quadrature::adaptive(|t: f64| cs.f_prime(t) * t, 0.0, 1.0, Tolerance::absolute(1e-14)).unwrap();
        assert_relative_eq!(g.weights[0], direct, max_relative = 1e-11);
    }

    #[test]
    fn linear_path_reproduces_integral_of_f() {
        let cs = CoefficientSet::standard();
        let int_f = quadrature::adaptive(|t: f64| cs.f(t), 0.0, 1.0, Tolerance::absolute(1e-14)).unwrap();
        for nodes in [vec![1.0], equidistant_nodes(1.0, 7), vec![0.1, 0.35, 0.4, 0.9, 1.0]] {
            let g = build_functional(&cs, &nodes).unwrap();
            let z = g.apply(&nodes);
            assert!((z - int_f).abs() < 1e-8, "{z} vs {int_f}");
        }
        // held-constant end: the last weight absorbs f(t_last)
        let g = build_functional(&cs, &[0.25, 0.5]).unwrap();
        assert!(!g.covers_tau1());
        let direct = quadrature::adaptive(|t: f64| cs.f(t), 0.0, 0.5, Tolerance::absolute(1e-14)).unwrap();
        assert!((g.apply(&[0.25, 0.5]) - direct).abs() < 1e-8);
    }

    #[test]
    fn quadratic_form_matches_tail_sums() {
        let cs = CoefficientSet::standard();
        let g = build_functional(&cs, &equidistant_nodes(1.0, 8)).unwrap();
        assert_relative_eq!(g.variance(), g.variance_quadratic_form(), max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_nodes() {
        let cs = CoefficientSet::standard();
        assert!(build_functional(&cs, &[]).is_err());
        assert!(build_functional(&cs, &[0.5, 0.25]).is_err());
        assert!(build_functional(&cs, &[0.0, 0.25]).is_err());
        assert!(build_functional(&cs, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn sigma_decreases_under_nesting() {
        let (_, vt) = setup();
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let s = vt.sigma_sq(1 << k).unwrap();
            assert!(s < prev);
            prev = s;
        }
        assert!(vt.sigma_sq(9).unwrap() < vt.sigma_sq(3).unwrap());
    }

    #[test]
    fn asymptotic_fit_matches_exact_cells() {
        let (cs, vt) = setup();
        let m = 3 * (1 << 15);
        let exact = sigma_squared(&cs, m).unwrap();
        let (a, b) = vt.asymptote().unwrap();
        let fit = a / (m as f64).powi(2) + b / (m as f64).powi(4);
        assert_relative_eq!(fit, exact, max_relative = 1e-9);
        assert!(vt.entry(1 << 17).unwrap().extrapolated);
    }

    #[test]
    fn extension_increment_is_consistent() {
        let (_, vt) = setup();
        for n in [1, 4, 16] {
            for l in [1, 2, 3, 5] {
                let inc_sigma = vt.sigma_sq(n).unwrap() - vt.sigma_sq(l * n).unwrap();
                let inc_nu = vt.nu_sq(l * n).unwrap() - vt.nu_sq(n).unwrap();
                assert!(inc_sigma >= 0.0);
                assert!((inc_sigma - inc_nu).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn level_one_keeps_z() {
        let (_, vt) = setup();
        let mut r = rng::stream(1, 2, 3, 4);
        let (z, x) = extend_to_level(&vt, 8, 1, 0.37, &mut r).unwrap();
        assert_eq!(z, 0.37);
        assert!(x.is_finite());
        assert!(extend_to_level(&vt, 8, 0, 0.37, &mut r).is_err());
    }
}
