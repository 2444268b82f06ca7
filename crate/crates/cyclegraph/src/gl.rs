//! Nystrom solver for Gelfand-Levitan-type equations.
//!
//! For每 fixed `x` on the grid, the second-kind equation
//! `K(x,t) + F(x,t) + int_0^x K(x,s) F(s,t) ds = 0` is discretized with
//! trapezoid weights on `[0, x]` and solved densely; the per-`x` systems
//! are independent and run in parallel.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Two-variable kernel sampled on a square grid (`values[i*n + j] = F(x_i, t_j)`).
#[derive(Debug, Clone)]
pub struct KernelGrid {
    pub x_nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl KernelGrid {
    pub fn new(x_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != x_nodes.len() * x_nodes.len() {
            return Err(Error::GridMismatch(format!(
                "kernel needs {}^2 values, got {}",
                x_nodes.len(),
                values.len()
            )));
        }
        Ok(KernelGrid { x_nodes, values })
    }

    pub fn n(&self) -> usize {
        self.x_nodes.len()
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.x_nodes.len() + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |F(x,t) - F(t,x)|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                d = d.max((self.value(i, j) - self.value(j, i)).abs());
            }
        }
        d
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.value(i, i)).collect()
    }

    /// `max_i |K(x_i, 0)|`.
    pub fn max_abs_first_column(&self) -> f64 {
        (0..self.n()).map(|i| self.value(i, 0).abs()).fold(0.0, f64::max)
    }
}

/// Result of the triangular solve.
#[derive(Debug, Clone)]
pub struct GlSolution {
    /// `K(x_i, t_j)` for `t_j <= x_i`, zero above the diagonal.
    pub kernel: KernelGrid,
    /// Largest condition estimate of `I + F` across the x-nodes.
    pub cond_estimate: f64,
}

/// Solve the GL equation for every grid row. `cond_limit` guards against
/// leaving the contraction regime; the estimate is `||A||_inf` times a
/// probe-based lower bound on `||A^{-1}||_inf`.
pub fn solve_gl(f: &KernelGrid, cond_limit: f64) -> Result<GlSolution> {
    let n = f.n();
    let h = if n > 1 { f.x_nodes[1] - f.x_nodes[0] } else { 0.0 };

    let rows: Vec<Result<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let size = i + 1;
            let weight = |s: usize| -> f64 {
                if i == 0 {
                    0.0
                } else if s == 0 || s == i {
                    0.5 * h
                } else {
                    h
                }
            };
            let a = DMatrix::from_fn(size, size, |j, s| {
                let delta = if j == s { 1.0 } else { 0.0 };
                delta + weight(s) * f.value(s, j)
            });
            let norm_a = a
                .row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let b = DVector::from_fn(size, |j, _| -f.value(i, j));
            let lu = a.lu();
            let sol = lu
                .solve(&b)
                .ok_or_else(|| Error::IllConditioned { cond: f64::INFINITY, limit: cond_limit })?;
            // probe-based estimate of ||A^{-1}||_inf
            let mut inv_norm = 0.0f64;
            for probe in 0..2 {
                let p = DVector::from_fn(size, |j, _| {
                    if probe == 0 {
                        1.0
                    } else if j % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                });
                if let Some(z) = lu.solve(&p) {
                    inv_norm = inv_norm.max(z.amax());
                }
            }
            let cond = norm_a * inv_norm;
            if cond > cond_limit {
                return Err(Error::IllConditioned { cond, limit: cond_limit });
            }
            Ok((sol.iter().copied().collect(), cond))
        })
        .collect();

    let mut values = vec![0.0; n * n];
    let mut cond_estimate = 0.0f64;
    for (i, row) in rows.into_iter().enumerate() {
        let (sol, cond) = row?;
        cond_estimate = cond_estimate.max(cond);
        values[i * n..i * n + sol.len()].copy_from_slice(&sol);
    }
    Ok(GlSolution { kernel: KernelGrid { x_nodes: f.x_nodes.clone(), values }, cond_estimate })
}

/// Max residual of the discretized GL equation for a computed kernel.
pub fn gl_residual(f: &KernelGrid, k: &KernelGrid) -> f64 {
    let n = f.n();
    let h = if n > 1 { f.x_nodes[1] - f.x_nodes[0] } else { 0.0 };
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let mut integral = 0.0;
            for s in 0..=i {
                let w = if i == 0 {
                    0.0
                } else if s == 0 || s == i {
                    0.5 * h
                } else {
                    h
                };
                integral += w * k.value(i, s) * f.value(s, j);
            }
            worst = worst.max((k.value(i, j) + f.value(i, j) + integral).abs());
        }
    }
    worst
}

/// 4th-order derivative of grid samples (central stencil, one-sided at the
/// ends).
pub fn derivative_4th(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "need at least 5 samples for the 4th-order stencil");
    let g = |i: usize| values[i];
    let mut out = Vec::with_capacity(n);
    out.push((-25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4)) / (12.0 * h));
    out.push((-3.0 * g(0) - 10.0 * g(1) + 18.0 * g(2) - 6.0 * g(3) + g(4)) / (12.0 * h));
    for i in 2..n - 2 {
        out.push((g(i - 2) - 8.0 * g(i - 1) + 8.0 * g(i + 1) - g(i + 2)) / (12.0 * h));
    }
    out.push((3.0 * g(n - 1) + 10.0 * g(n - 2) - 18.0 * g(n - 3) + 6.0 * g(n - 4) - g(n - 5)) / (12.0 * h));
    out.push((25.0 * g(n - 1) - 48.0 * g(n - 2) + 36.0 * g(n - 3) - 16.0 * g(n - 4) + 3.0 * g(n - 5)) / (12.0 * h));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, t: f64) -> Vec<f64> {
        (0..n).map(|i| t * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_kernel_solves_to_zero() {
        let xs = grid(65, 1.0);
        let f = KernelGrid::new(xs, vec![0.0; 65 * 65]).unwrap();
        let sol = solve_gl(&f, 1e8).unwrap();
        assert_eq!(sol.kernel.max_abs(), 0.0);
        assert!(sol.cond_estimate >= 1.0 && sol.cond_estimate < 1.5);
    }

    #[test]
    fn residual_after_solve_is_tiny() {
        let n = 129;
        let xs = grid(n, 1.0);
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = 0.3 * (xs[i]).cos() * (xs[j]).cos() + 0.1 * (xs[i] * xs[j]).sin();
            }
        }
        let f = KernelGrid::new(xs, values).unwrap();
        assert!(f.symmetry_defect() < 1e-14);
        let sol = solve_gl(&f, 1e8).unwrap();
        let res = gl_residual(&f, &sol.kernel);
        assert!(res <= 1e-9 * f.max_abs(), "residual {res:.3e}");
    }

    #[test]
    fn neumann_regime_bound() {
        // small kernel: ||K||_inf <= 2 ||F||_inf when the integral operator
        // norm is below 1/2
        let n = 129;
        let xs = grid(n, 1.0);
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = 0.2 * ((xs[i] + xs[j]) * 1.7).cos();
            }
        }
        let f = KernelGrid::new(xs, values).unwrap();
        let sol = solve_gl(&f, 1e8).unwrap();
        assert!(sol.kernel.max_abs() <= 2.0 * f.max_abs());
    }

    #[test]
    fn singular_operator_is_rejected() {
        // F(s,t) = -1 makes (I + F)z = z - int_0^x z ds singular at x = 1
        let n = 65;
        let xs = grid(n, 1.0);
        let f = KernelGrid::new(xs, vec![-1.0; n * n]).unwrap();
        let err = solve_gl(&f, 1e8).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }), "{err}");
    }

    #[test]
    fn derivative_4th_accuracy() {
        let n = 513;
        let h = 1.0 / (n - 1) as f64;
        let vals: Vec<f64> = (0..n).map(|i| (2.0 * i as f64 * h).sin()).collect();
        let d = derivative_4th(&vals, h);
        for (i, di) in d.iter().enumerate() {
            let want = 2.0 * (2.0 * i as f64 * h).cos();
            assert!((di - want).abs() < 1e-9, "node {i}: {di} vs {want}");
        }
    }
}
