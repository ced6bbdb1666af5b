//! Brownian values on finite grids and bridge refinement of equidistant grids.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{lit, Error, Real, Result};

/// Strictly increasing observation times; `W(0) = 0` is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    nodes: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(nodes: Vec<T>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGrid("grid has no nodes".into()));
        }
        if !(nodes[0] > T::zero()) {
            return Err(Error::InvalidGrid(format!("first node {} is not positive", nodes[0])));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "nodes not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if !nodes.last().unwrap().is_finite() {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        Ok(TimeGrid { nodes })
    }

    /// Nodes `i * end / n`, `i = 1..=n`.
    pub fn equidistant(n: usize, end: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("n must be at least 1".into()));
        }
        let nf = T::from_usize(n).unwrap();
        Self::new((1..=n).map(|i| end * T::from_usize(i).unwrap() / nf).collect())
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last(&self) -> T {
        *self.nodes.last().unwrap()
    }

    /// True when node `i` equals `(i + 1) * last / len` up to rounding.
    pub fn is_equidistant(&self) -> bool {
        let n = T::from_usize(self.len()).unwrap();
        let end = self.last();
        let tol = lit::<T>(64.0) * T::epsilon() * end;
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - end * T::from_usize(i + 1).unwrap() / n).abs() <= tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath<T> {
    pub grid: TimeGrid<T>,
    pub values: Vec<T>,
}

impl<T: Real> BrownianPath<T> {
    pub fn new(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} nodes but {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(BrownianPath { grid, values })
    }

    /// Keeps every `factor`-th value, undoing [`refine_equidistant`].
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.values.len().is_multiple_of(factor) {
            return Err(Error::InvalidGrid(format!(
                "cannot restrict {} nodes by factor {factor}",
                self.values.len()
            )));
        }
        let pick = |v: &[T]| v.iter().skip(factor - 1).step_by(factor).copied().collect();
        Ok(BrownianPath {
            grid: TimeGrid {
                nodes: pick(self.grid.nodes()),
            },
            values: pick(&self.values),
        })
    }
}

#[inline]
pub(crate) fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    lit(z)
}

pub fn sample_path<T: Real, R: Rng + ?Sized>(grid: &TimeGrid<T>, rng: &mut R) -> BrownianPath<T> {
    let mut prev_t = T::zero();
    let mut w = T::zero();
    let values = grid
        .nodes()
        .iter()
        .map(|&t| {
            w = w + (t - prev_t).sqrt() * normal::<T, R>(rng);
            prev_t = t;
            w
        })
        .collect();
    BrownianPath {
        grid: grid.clone(),
        values,
    }
}

/// Refines an equidistant path on `n` nodes to `factor * n` equidistant
/// nodes by sampling Brownian bridges left to right inside each cell.
/// Coarse values are copied, never recomputed.
pub fn refine_equidistant<T: Real, R: Rng + ?Sized>(
    path: &BrownianPath<T>,
    factor: usize,
    rng: &mut R,
) -> Result<BrownianPath<T>> {
    if factor == 0 {
        return Err(Error::InvalidParameter("refinement factor must be at least 1".into()));
    }
    if !path.grid.is_equidistant() {
        return Err(Error::InvalidGrid("refinement needs an equidistant grid".into()));
    }
    if factor == 1 {
        return Ok(path.clone());
    }
    let n = path.grid.len();
    let end = path.grid.last();
    let fine = T::from_usize(n * factor).unwrap();
    let mut nodes = Vec::with_capacity(n * factor);
    let mut values = Vec::with_capacity(n * factor);
    let mut a = T::zero();
    let mut wa = T::zero();
    for (i, (&b, &wb)) in path.grid.nodes().iter().zip(&path.values).enumerate() {
        let mut s = a;
        let mut ws = wa;
        for k in 1..factor {
            let t = end * T::from_usize(i * factor + k).unwrap() / fine;
            let mean = ws + (t - s) / (b - s) * (wb - ws);
            let var = (t - s) * (b - t) / (b - s);
            let w = mean + var.max(T::zero()).sqrt() * normal::<T, R>(rng);
            nodes.push(t);
            values.push(w);
            s = t;
            ws = w;
        }
        nodes.push(b);
        values.push(wb);
        a = b;
        wa = wb;
    }
    Ok(BrownianPath {
        grid: TimeGrid { nodes },
        values,
    })
}
