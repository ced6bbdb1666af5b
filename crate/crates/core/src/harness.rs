//! Monte Carlo error estimation, rate fits and cost profiles.
//!
//! Replications are split into blocks of [`BLOCK`] consecutive indices. Each
//! block is accumulated sequentially and the blocks are merged in index
//! order, so the result does not depend on the number of worker threads.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientSet, ModelParams};
use crate::gaussian_model::VarianceTable;
use crate::rng::{self, DEFAULT_MASTER_SEED};
use crate::schemes::{self, SchemeOutput, DEFAULT_LEVEL_CAP};
use crate::{Error, Result};

pub const BLOCK: usize = 4096;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Interp,
    Adaptive,
    Euler,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interp" => Ok(SchemeKind::Interp),
            "adaptive" => Ok(SchemeKind::Adaptive),
            "euler" => Ok(SchemeKind::Euler),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchemeKind::Interp => "interp",
            SchemeKind::Adaptive => "adaptive",
            SchemeKind::Euler => "euler",
        })
    }
}

fn default_seed() -> u64 {
    DEFAULT_MASTER_SEED
}

fn default_workers() -> usize {
    1
}

fn default_cap() -> usize {
    DEFAULT_LEVEL_CAP
}

fn default_params() -> ModelParams<f64> {
    ModelParams::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: SchemeKind,
    /// Order `r` of the error `(E|·|^r)^{1/r}`.
    pub r: f64,
    pub n_list: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    #[serde(default = "default_params")]
    pub params: ModelParams<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_cap")]
    pub level_cap: usize,
}

impl ExperimentConfig {
    pub fn new(scheme: SchemeKind, r: f64, n_list: Vec<usize>, replications: usize) -> Self {
        ExperimentConfig {
            scheme,
            r,
            n_list,
            replications,
            master_seed: DEFAULT_MASTER_SEED,
            worker_count: 1,
            params: ModelParams::default(),
            output: None,
            level_cap: DEFAULT_LEVEL_CAP,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Component 7 has a finite `r`-th error only for `r <= p`; the
    /// interpolation scheme is guaranteed a rate only for `r < p`.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.r >= 1.0) || self.r > self.params.p {
            return Err(Error::InvalidParameter(format!(
                "error order r = {} must satisfy 1 <= r <= p = {}",
                self.r, self.params.p
            )));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::InvalidParameter("n_list must be non-empty and positive".into()));
        }
        if self.replications == 0 || self.worker_count == 0 || self.level_cap == 0 {
            return Err(Error::InvalidParameter(
                "replications, worker_count and level_cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Streaming mean, second and third central moments (Welford, merged by
/// Chan's formulas).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let term = delta * dn * n1;
        self.mean += dn;
        self.m3 += term * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term;
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta.powi(3) * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        *self = Moments {
            count: self.count + other.count,
            mean,
            m2,
            m3,
        };
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn skewness(&self) -> f64 {
        if self.count < 3 || self.m2 == 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub components: [Moments; 7],
    pub vector: Moments,
    pub cost: Moments,
    pub max_level: usize,
    pub truncated: u64,
}

impl Accumulator {
    pub fn push(&mut self, out: &SchemeOutput, r: f64) {
        let d = out.abs_error();
        for (m, e) in self.components.iter_mut().zip(d.iter()) {
            m.push(e.powf(r));
        }
        let norm = d.iter().map(|e| e * e).sum::<f64>().sqrt();
        self.vector.push(norm.powf(r));
        self.cost.push(out.cost as f64);
        self.max_level = self.max_level.max(out.level);
        self.truncated += out.truncated_level as u64;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.components.iter_mut().zip(other.components.iter()) {
            a.merge(b);
        }
        self.vector.merge(&other.vector);
        self.cost.merge(&other.cost);
        self.max_level = self.max_level.max(other.max_level);
        self.truncated += other.truncated;
    }
}

/// `(E|e|^r)^{1/r}` and its 95% half-width by the delta method.
pub fn moment_to_error(m: &Moments, r: f64) -> (f64, f64) {
    let mean = m.mean.max(0.0);
    let err = mean.powf(1.0 / r);
    if mean == 0.0 {
        return (0.0, 0.0);
    }
    let deriv = mean.powf(1.0 / r - 1.0) / r;
    (err, Z95 * m.std_error() * deriv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub err: [f64; 7],
    pub ci_components: [f64; 7],
    pub err_vec: f64,
    pub ci: f64,
    pub mean_cost: f64,
    pub cost_ci: f64,
    pub max_level: usize,
    pub truncated_count: u64,
    pub skewness: f64,
    pub replications: usize,
}

impl ErrorRow {
    pub fn from_accumulator(n: usize, acc: &Accumulator, r: f64) -> Self {
        let mut err = [0.0; 7];
        let mut ci_components = [0.0; 7];
        for k in 0..7 {
            let (e, c) = moment_to_error(&acc.components[k], r);
            err[k] = e;
            ci_components[k] = c;
        }
        let (err_vec, ci) = moment_to_error(&acc.vector, r);
        ErrorRow {
            n,
            err,
            ci_components,
            err_vec,
            ci,
            mean_cost: acc.cost.mean,
            cost_ci: Z95 * acc.cost.std_error(),
            max_level: acc.max_level,
            truncated_count: acc.truncated,
            skewness: acc.vector.skewness(),
            replications: acc.vector.count as usize,
        }
    }
}

pub const CSV_HEADER: &str = "n,err1,err2,err3,err4,err5,err6,err7,err_vec,ci,mean_cost,max_level,truncated_count";

pub fn rows_to_csv(rows: &[ErrorRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        write!(s, "{}", r.n).unwrap();
        for e in r.err {
            write!(s, ",{e:e}").unwrap();
        }
        writeln!(
            s,
            ",{:e},{:e},{:e},{},{}",
            r.err_vec, r.ci, r.mean_cost, r.max_level, r.truncated_count
        )
        .unwrap();
    }
    s
}

/// Runs one scheme invocation for replication `rep` at grid size `n`.
pub fn run_one(
    cfg: &ExperimentConfig,
    cs: &CoefficientSet<f64>,
    vt: &VarianceTable,
    n: usize,
    rep: u64,
) -> Result<SchemeOutput> {
    let mut rng = rng::stream(cfg.master_seed, n as u64, rep, rng::purpose::SCHEME);
    match cfg.scheme {
        SchemeKind::Interp => schemes::interp_scheme(cs, vt, n, &mut rng),
        SchemeKind::Adaptive => schemes::adaptive_scheme(cs, vt, n, &mut rng, cfg.level_cap),
        SchemeKind::Euler => schemes::euler_maruyama(cs, vt, n, &mut rng),
    }
}

fn accumulate_n(cfg: &ExperimentConfig, cs: &CoefficientSet<f64>, vt: &VarianceTable, n: usize) -> Result<Accumulator> {
    let reps = cfg.replications;
    let blocks = reps.div_ceil(BLOCK);
    let run_block = |b: usize| -> Result<Accumulator> {
        let mut acc = Accumulator::default();
        for rep in b * BLOCK..((b + 1) * BLOCK).min(reps) {
            acc.push(&run_one(cfg, cs, vt, n, rep as u64)?, cfg.r);
        }
        Ok(acc)
    };
    let parts: Vec<Result<Accumulator>> = if cfg.worker_count == 1 {
        (0..blocks).map(run_block).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.worker_count)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| (0..blocks).into_par_iter().map(run_block).collect())
    };
    let mut total = Accumulator::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<ErrorRow>> {
    cfg.validate()?;
    let cs = CoefficientSet::normalize(cfg.params, 1e-12)?;
    let vt = VarianceTable::new(&cs);
    run_convergence_with(cfg, &cs, &vt)
}

/// As [`run_convergence`] with caller-owned coefficients and variance cache.
pub fn run_convergence_with(
    cfg: &ExperimentConfig,
    cs: &CoefficientSet<f64>,
    vt: &VarianceTable,
) -> Result<Vec<ErrorRow>> {
    cfg.validate()?;
    cfg.n_list
        .iter()
        .map(|&n| Ok(ErrorRow::from_accumulator(n, &accumulate_n(cfg, cs, vt, n)?, cfg.r)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum RateFit {
    /// `error ≈ exp(intercept) · n^slope`.
    Power { slope: f64, intercept: f64, residual: f64 },
    /// `error ≈ c · ln^{-2/p}(n + 1)`.
    Log { c: f64, p: f64, residual: f64 },
}

impl RateFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            RateFit::Power { slope, .. } => Some(*slope),
            RateFit::Log { .. } => None,
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            RateFit::Power { residual, .. } | RateFit::Log { residual, .. } => *residual,
        }
    }
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, e)) = points.iter().find(|(n, e)| !(*e > 0.0) || !(*n > 0.0)) {
        return Err(Error::InvalidParameter(format!("non-positive point ({n}, {e})")));
    }
    Ok(())
}

/// Least squares line through `(ln n, ln error)`.
pub fn fit_power(points: &[(f64, f64)]) -> Result<RateFit> {
    check_points(points)?;
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all n are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit::Power {
        slope,
        intercept,
        residual,
    })
}

/// The `c` minimizing `Σ (c·m(n)/error - 1)²` with `m(n) = ln^{-2/p}(n+1)`.
pub fn fit_log(points: &[(f64, f64)], p: f64) -> Result<RateFit> {
    check_points(points)?;
    let ratios: Vec<f64> = points.iter().map(|(n, e)| (n + 1.0).ln().powf(-2.0 / p) / e).collect();
    let c = ratios.iter().sum::<f64>() / ratios.iter().map(|q| q * q).sum::<f64>();
    let residual = ratios.iter().map(|q| (c * q - 1.0).powi(2)).sum::<f64>().sqrt();
    Ok(RateFit::Log { c, p, residual })
}

/// `(n, error)` pairs for component `k` (1..=7) or the full vector (`0`).
pub fn points(rows: &[ErrorRow], k: usize) -> Vec<(f64, f64)> {
    rows.iter()
        .map(|r| (r.n as f64, if k == 0 { r.err_vec } else { r.err[k - 1] }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub n: usize,
    pub mean_cost: f64,
    pub ci: f64,
    pub cost_ratio: f64,
    pub max_level: usize,
    /// `(1/ν_n) sqrt(2/(π ln 2)) Σ ℓ^{-2}`, times 1.1.
    pub bound: f64,
}

pub fn cost_bound(nu_sq: f64) -> f64 {
    let series = std::f64::consts::PI.powi(2) / 6.0;
    nu_sq.sqrt().recip() * (2.0 / (std::f64::consts::PI * 2f64.ln())).sqrt() * series * 1.1
}

pub fn cost_profile(cfg: &ExperimentConfig) -> Result<Vec<CostRow>> {
    cfg.validate()?;
    let cs = CoefficientSet::normalize(cfg.params, 1e-12)?;
    let vt = VarianceTable::new(&cs);
    let rows = run_convergence_with(cfg, &cs, &vt)?;
    cost_rows(&rows, &vt)
}

pub fn cost_rows(rows: &[ErrorRow], vt: &VarianceTable) -> Result<Vec<CostRow>> {
    rows.iter()
        .map(|r| {
            Ok(CostRow {
                n: r.n,
                mean_cost: r.mean_cost,
                ci: r.cost_ci,
                cost_ratio: r.mean_cost / r.n as f64,
                max_level: r.max_level,
                bound: cost_bound(vt.nu_sq(r.n)?),
            })
        })
        .collect()
}

pub fn cost_rows_to_csv(rows: &[CostRow]) -> String {
    let mut s = String::from("n,mean_cost,ci,cost_over_n,max_level,bound\n");
    for r in rows {
        writeln!(
            s,
            "{},{:e},{:e},{:e},{},{:e}",
            r.n, r.mean_cost, r.ci, r.cost_ratio, r.max_level, r.bound
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).powf(1.7)).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_relative_eq!(a.mean, whole.mean, max_relative = 1e-13);
        assert_relative_eq!(a.m2, whole.m2, max_relative = 1e-12);
        assert_relative_eq!(a.m3, whole.m3, max_relative = 1e-9);
    }

    #[test]
    fn power_fit_of_exact_law() {
        let pts: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 64.0].iter().map(|&n| (n, 1.0 / n)).collect();
        let fit = fit_power(&pts).unwrap();
        assert_relative_eq!(fit.slope().unwrap(), -1.0, epsilon = 1e-12);
        assert!(fit.residual() < 1e-12);
    }

    #[test]
    fn log_fit_of_exact_law() {
        let law = |n: f64| 1.0 / (n + 1.0).ln();
        let pts: Vec<(f64, f64)> = (1..6).map(|k| 10f64.powi(k)).map(|n| (n, 3.0 * law(n))).collect();
        match fit_log(&pts, 2.0).unwrap() {
            RateFit::Log { c, residual, .. } => {
                assert_relative_eq!(c, 3.0, max_relative = 1e-12);
                assert!(residual < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let narrow = fit_power(&pts[..3]).unwrap().slope().unwrap();
        let wide: Vec<(f64, f64)> = (1..40).map(|k| 10f64.powi(k)).map(|n| (n, law(n))).collect();
        let wide = fit_power(&wide).unwrap().slope().unwrap();
        assert!(wide.abs() < narrow.abs() && wide < 0.0);
    }

    #[test]
    fn fits_reject_bad_input() {
        assert!(fit_power(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
        assert!(fit_log(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)], 2.0).is_err());
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = ExperimentConfig::new(SchemeKind::Adaptive, 2.0, vec![16, 32], 100);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let bad = ExperimentConfig::new(SchemeKind::Interp, 3.0, vec![16], 10);
        assert!(bad.validate().is_err());
        let minimal = r#"{"scheme":"interp","r":1,"n_list":[8],"replications":5}"#;
        let cfg = ExperimentConfig::from_json(minimal).unwrap();
        assert_eq!(cfg.master_seed, 0x5DE5DE);
        assert!(
            ExperimentConfig::from_json(r#"{"scheme":"interp","r":1,"n_list":[8],"replications":5,"x":1}"#).is_err()
        );
    }

    #[test]
    fn single_replication_is_reproducible() {
        let cfg = ExperimentConfig::new(SchemeKind::Interp, 1.0, vec![8], 1);
        let a = run_convergence(&cfg).unwrap();
        let b = run_convergence(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].replications, 1);
        assert_eq!(a[0].mean_cost, 8.0);
    }

    #[test]
    fn non_adaptive_cost_ratio_is_one() {
        let cfg = ExperimentConfig::new(SchemeKind::Interp, 1.0, vec![8, 16, 32], 500);
        let rows = cost_profile(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.cost_ratio == 1.0 && r.ci == 0.0));
    }
}
