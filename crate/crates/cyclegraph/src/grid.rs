use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GraphGeometry;

/// Real-valued function sampled on a uniform grid over `[0, length]`.
///
/// Node `i` sits at `x_i = i * length / (n - 1)`. The `mean_zero` flag
/// records membership in the mean-zero class (trapezoid integral of the
/// samples vanishes to within `1e-10 * length * max|values|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub length: f64,
    pub values: Vec<f64>,
    pub mean_zero: bool,
}

impl GridFunction {
    pub fn new(length: f64, values: Vec<f64>) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Grid("length must be positive and finite".into()));
        }
        if values.len() < 2 {
            return Err(Error::Grid("need at least 2 grid nodes".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("values must be finite".into()));
        }
        let mut f = GridFunction { length, values, mean_zero: false };
        f.mean_zero = f.trapezoid_mean().abs() * f.length
            <= 1e-10 * f.length * f.max_abs().max(f64::MIN_POSITIVE);
        Ok(f)
    }

    /// Sample a closure on `n` uniform nodes over `[0, length]`.
    pub fn sample(length: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = length / (n - 1) as f64;
        Self::new(length, (0..n).map(|i| f(i as f64 * h)).collect())
    }

    /// Zero function on `n` nodes.
    pub fn zero(length: f64, n: usize) -> Self {
        GridFunction { length, values: vec![0.0; n], mean_zero: true }
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn step(&self) -> f64 {
        self.length / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.node(i))
    }

    /// Linear interpolation between grid nodes; clamps to the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.step();
        let s = (x / h).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Trapezoid-rule integral over `[0, length]`.
    pub fn trapezoid_integral(&self) -> f64 {
        let h = self.step();
        let n = self.values.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        h * (0.5 * (self.values[0] + self.values[n - 1]) + inner)
    }

    pub fn trapezoid_mean(&self) -> f64 {
        self.trapezoid_integral() / self.length
    }

    /// Trapezoid-rule L2 norm.
    pub fn l2_norm(&self) -> f64 {
        let h = self.step();
        let n = self.values.len();
        let mut s = 0.5 * (self.values[0].powi(2) + self.values[n - 1].powi(2));
        for v in &self.values[1..n - 1] {
            s += v * v;
        }
        (h * s).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// L2 distance to another grid function on the same grid.
    pub fn l2_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.values.len() != other.values.len() || (self.length - other.length).abs() > 1e-12 {
            return Err(Error::GridMismatch(format!(
                "grids differ: {} nodes on [0,{}] vs {} nodes on [0,{}]",
                self.values.len(),
                self.length,
                other.values.len(),
                other.length
            )));
        }
        let diff: Vec<f64> =
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction { length: self.length, values: diff, mean_zero: false }.l2_norm())
    }
}

/// Remove the trapezoid-rule mean, projecting onto the mean-zero class.
pub fn project_mean_zero(f: &GridFunction) -> GridFunction {
    let mean = f.trapezoid_mean();
    let values = f.values.iter().map(|v| v - mean).collect();
    GridFunction { length: f.length, values, mean_zero: true }
}

/// The potentials on all edges: `q[0]` on the loop, `q[1..]` on the
/// pendant edges, each sampled on `[0, T_j]` and mean-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSet {
    pub geometry: GraphGeometry,
    pub q: Vec<GridFunction>,
}

impl PotentialSet {
    pub fn new(geometry: GraphGeometry, q: Vec<GridFunction>) -> Result<Self> {
        if q.len() != geometry.m + 1 {
            return Err(Error::Grid(format!(
                "expected {} potentials, got {}",
                geometry.m + 1,
                q.len()
            )));
        }
        for (j, f) in q.iter().enumerate() {
            if (f.length - geometry.t[j]).abs() > 1e-12 * geometry.t[j] {
                return Err(Error::Grid(format!(
                    "potential {} lives on [0,{}], edge length is {}",
                    j, f.length, geometry.t[j]
                )));
            }
            if !f.mean_zero {
                return Err(Error::Grid(format!(
                    "potential {} is not mean-zero (mean = {:.3e}); project it first",
                    j,
                    f.trapezoid_mean()
                )));
            }
        }
        Ok(PotentialSet { geometry, q })
    }

    /// Project every edge potential onto the mean-zero class and build the set.
    pub fn from_raw(geometry: GraphGeometry, q: Vec<GridFunction>) -> Result<Self> {
        let q = q.iter().map(project_mean_zero).collect();
        Self::new(geometry, q)
    }

    /// All-zero potentials with `nodes_per_unit` grid intervals per unit length.
    pub fn zero(geometry: &GraphGeometry, nodes_per_unit: usize) -> Self {
        let q = geometry
            .t
            .iter()
            .map(|&t| GridFunction::zero(t, grid_nodes(t, nodes_per_unit)))
            .collect();
        PotentialSet { geometry: geometry.clone(), q }
    }

    pub fn max_norm(&self) -> f64 {
        self.q.iter().map(|f| f.l2_norm()).fold(0.0, f64::max)
    }
}

/// Number of grid nodes for an edge of length `t` at `per_unit` intervals per
/// unit length (default 512, i.e. 513 nodes on a unit edge).
pub fn grid_nodes(t: f64, per_unit: usize) -> usize {
    ((t * per_unit as f64).round() as usize).max(8) + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_projects_to_zero() {
        let f = GridFunction::sample(1.0, 101, |_| 1.0).unwrap();
        let p = project_mean_zero(&f);
        assert!(p.max_abs() <= 1e-14);
        assert!(p.mean_zero);
    }

    #[test]
    fn cosine_already_mean_zero() {
        let f = GridFunction::sample(1.0, 1001, |x| (2.0 * PI * x).cos()).unwrap();
        let p = project_mean_zero(&f);
        for (a, b) in f.values.iter().zip(&p.values) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn linear_projects_to_centered_line() {
        // Trapezoid mean of x on [0,1] is exactly 1/2 (exact for linear data).
        let f = GridFunction::sample(1.0, 513, |x| x).unwrap();
        let p = project_mean_zero(&f);
        for (i, v) in p.values.iter().enumerate() {
            let x = i as f64 / 512.0;
            assert!((v - (x - 0.5)).abs() <= 1e-14, "node {}: {} vs {}", i, v, x - 0.5);
        }
    }

    #[test]
    fn l2_norm_of_sin() {
        // ||sin(pi x)||_{L2(0,1)} = 1/sqrt(2); trapezoid on 2049 nodes is
        // spectrally accurate for this integrand (boundary derivative of
        // sin^2 vanishes).
        let f = GridFunction::sample(1.0, 2049, |x| (PI * x).sin()).unwrap();
        assert!((f.l2_norm() - 0.5f64.sqrt()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn project_mean_zero_is_idempotent(seed in 0u64..1000) {
            let vals: Vec<f64> = (0..257)
                .map(|i| ((i as f64 + seed as f64) * 0.7).sin() + 0.3 * seed as f64)
                .collect();
            let f = GridFunction::new(2.0, vals).unwrap();
            let p1 = project_mean_zero(&f);
            let p2 = project_mean_zero(&p1);
            let scale = p1.max_abs().max(1e-300);
            for (a, b) in p1.values.iter().zip(&p2.values) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }
}
