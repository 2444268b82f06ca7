use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the graph: a loop `e_0` of length `t[0]` attached to the
/// internal vertex, plus `m` pendant edges `e_1..e_m` of lengths `t[1..]`,
/// coupled through the vertex parameter `a`.
///
/// Edge `j` is parameterized by `x in [0, T_j]` with `x = T_j` at the
/// internal vertex; the pendant boundary vertices sit at `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGeometry {
    /// Number of pendant edges (>= 1).
    pub m: usize,
    /// Edge lengths, `t[0]` is the loop; all positive, `t.len() == m + 1`.
    pub t: Vec<f64>,
    /// Vertex coupling, nonzero. `a = ±1` is allowed for boundary-edge work
    /// but disables the quasiperiodic loop inversion.
    pub a: f64,
}

impl GraphGeometry {
    pub fn new(m: usize, t: Vec<f64>, a: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::Geometry("m must be >= 1".into()));
        }
        if t.len() != m + 1 {
            return Err(Error::Geometry(format!(
                "expected {} edge lengths, got {}",
                m + 1,
                t.len()
            )));
        }
        if t.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Geometry("edge lengths must be positive and finite".into()));
        }
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Geometry("vertex parameter a must be nonzero and finite".into()));
        }
        Ok(GraphGeometry { m, t, a })
    }

    /// Total metric length of the graph.
    pub fn total_length(&self) -> f64 {
        self.t.iter().sum()
    }

    /// Whether the quasiperiodic loop inversion is admissible (`a` not in
    /// {-1, 0, 1}).
    pub fn loop_inversion_enabled(&self) -> bool {
        self.a != 0.0 && self.a != 1.0 && self.a != -1.0
    }

    /// `a + 1/a`, the leading coefficient of the Hill-type discriminant.
    pub fn a_plus_inv(&self) -> f64 {
        self.a + 1.0 / self.a
    }

    /// Crude lower bound for all spectra handled by this library:
    /// `-(max_j ||q_j|| * T_j + |a| + 1/|a| + 2)^2` with `q_bound` an upper
    /// bound for the potential norms. Safe but intentionally pessimistic.
    pub fn spectral_lower_bound(&self, q_bound: f64) -> f64 {
        let t_max = self.t.iter().cloned().fold(0.0, f64::max);
        let s = q_bound * t_max + self.a.abs() + 1.0 / self.a.abs() + 2.0;
        -(s * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_geometry() {
        assert!(GraphGeometry::new(0, vec![1.0], 2.0).is_err());
        assert!(GraphGeometry::new(1, vec![1.0], 2.0).is_err());
        assert!(GraphGeometry::new(1, vec![1.0, -1.0], 2.0).is_err());
        assert!(GraphGeometry::new(1, vec![1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn loop_inversion_flag() {
        let g = GraphGeometry::new(1, vec![1.0, 1.0], 1.0).unwrap();
        assert!(!g.loop_inversion_enabled());
        let g = GraphGeometry::new(1, vec![1.0, 1.0], 2.0).unwrap();
        assert!(g.loop_inversion_enabled());
    }

    #[test]
    fn lower_bound_is_negative_and_monotone() {
        let g = GraphGeometry::new(2, vec![1.0, 1.0, 1.0], 2.0).unwrap();
        let b0 = g.spectral_lower_bound(0.0);
        let b1 = g.spectral_lower_bound(1.0);
        assert!(b0 < 0.0 && b1 < b0);
    }
}
