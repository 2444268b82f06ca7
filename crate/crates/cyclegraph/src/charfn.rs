//! Characteristic functions of the coupled problems on the graph.
//!
//! With `S_j, C_j` the fundamental solutions on edge `j` and
//! `d = a C_0(T_0) + a^{-1} S_0'(T_0)` the Hill-type discriminant of the
//! loop, the main and pendant-Neumann characteristic functions are
//!
//! ```text
//! Delta   = (d - 2) * prod_j S_j(T_j)  + a h * sum_r S_r' prod_{j != r} S_j
//! Delta_k = (d - 2) * C_k prod_{j!=k} S_j
//!           + a h * (C_k' prod_{j!=k} S_j + C_k sum_{r!=k} S_r' prod_{j!=r,k} S_j)
//! ```
//!
//! where `h = S_0(T_0)`. Their zeros are the spectra. For mean-zero
//! potentials the deviations from the zero-potential closed forms, weighted
//! by `rho^{m+1}` (resp. `rho^m`), are Paley-Wiener functions sampled here
//! on a real `rho` grid; the data metric is the sum of their L2 distances.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::GraphGeometry;
use crate::grid::PotentialSet;
use crate::ode::{integrate_fundamental, EndpointData, OdeOptions};

/// `sin(rho x)/rho` as an entire function of `lambda = rho^2` (branch-free).
pub fn sin_rho_x_over_rho(lambda: Complex64, x: f64) -> Complex64 {
    let z2 = lambda * x * x; // (rho x)^2
    if z2.norm() < 1e-12 {
        let one = Complex64::new(1.0, 0.0);
        x * (one - z2 * (1.0 / 6.0) + z2 * z2 * (1.0 / 120.0))
    } else {
        let rho = lambda.sqrt();
        (rho * x).sin() / rho
    }
}

/// `cos(rho x)` as an entire function of `lambda = rho^2`.
pub fn cos_rho_x(lambda: Complex64, x: f64) -> Complex64 {
    let z2 = lambda * x * x;
    if z2.norm() < 1e-12 {
        let one = Complex64::new(1.0, 0.0);
        one - z2 * 0.5 + z2 * z2 * (1.0 / 24.0)
    } else {
        (lambda.sqrt() * x).cos()
    }
}

/// Endpoint data of the zero-potential edge: `S = sin(rho T)/rho`,
/// `S' = C = cos(rho T)`, `C' = -lambda S`.
pub fn endpoint_zero(t: f64, lambda: Complex64) -> EndpointData {
    let s = sin_rho_x_over_rho(lambda, t);
    let c = cos_rho_x(lambda, t);
    EndpointData { s, sp: c, c, cp: -lambda * s }
}

/// All characteristic values at one `lambda`, assembled from per-edge
/// endpoint data.
#[derive(Debug, Clone)]
pub struct CharValues {
    /// Hill-type discriminant `a C_0 + a^{-1} S_0'`.
    pub d: Complex64,
    /// Loop Dirichlet characteristic function `S_0(T_0)`.
    pub h: Complex64,
    /// `a C_0 - a^{-1} S_0'`; its signs at the Dirichlet zeros are the
    /// sigma data.
    pub h_cap: Complex64,
    pub delta: Complex64,
    pub delta_k: Vec<Complex64>,
    pub delta_pi: Complex64,
    pub delta_kirch: Complex64,
    pub delta_k_pi: Vec<Complex64>,
    pub delta_k_kirch: Vec<Complex64>,
    /// Loop endpoint values, kept for identity checks.
    pub c0: Complex64,
    pub s0p: Complex64,
}

/// Assemble every characteristic value from the loop endpoint data and the
/// pendant endpoint data (`pend[k-1]` for edge `k`).
pub fn assemble(geometry: &GraphGeometry, loop_e: &EndpointData, pend: &[EndpointData]) -> CharValues {
    let a = geometry.a;
    let m = geometry.m;
    debug_assert_eq!(pend.len(), m);
    let d = a * loop_e.c + loop_e.sp / a;
    let h = loop_e.s;
    let h_cap = a * loop_e.c - loop_e.sp / a;

    let s: Vec<Complex64> = pend.iter().map(|e| e.s).collect();
    let sp: Vec<Complex64> = pend.iter().map(|e| e.sp).collect();
    let c: Vec<Complex64> = pend.iter().map(|e| e.c).collect();
    let cp: Vec<Complex64> = pend.iter().map(|e| e.cp).collect();

    let one = Complex64::new(1.0, 0.0);
    let prod_excl = |skip: &[usize]| -> Complex64 {
        let mut p = one;
        for (j, v) in s.iter().enumerate() {
            if !skip.contains(&j) {
                p *= v;
            }
        }
        p
    };

    let delta_pi = prod_excl(&[]);
    let delta_kirch: Complex64 = (0..m).map(|r| sp[r] * prod_excl(&[r])).sum();

    let mut delta_k_pi = Vec::with_capacity(m);
    let mut delta_k_kirch = Vec::with_capacity(m);
    for k in 0..m {
        let pk = prod_excl(&[k]);
        delta_k_pi.push(c[k] * pk);
        let cross: Complex64 =
            (0..m).filter(|&r| r != k).map(|r| sp[r] * prod_excl(&[k, r])).sum();
        delta_k_kirch.push(cp[k] * pk + c[k] * cross);
    }

    let dm2 = d - 2.0;
    let delta = dm2 * delta_pi + a * h * delta_kirch;
    let delta_k: Vec<Complex64> = (0..m)
        .map(|k| dm2 * delta_k_pi[k] + a * h * delta_k_kirch[k])
        .collect();

    CharValues {
        d,
        h,
        h_cap,
        delta,
        delta_k,
        delta_pi,
        delta_kirch,
        delta_k_pi,
        delta_k_kirch,
        c0: loop_e.c,
        s0p: loop_e.sp,
    }
}

/// Characteristic-function evaluators backed by the ODE engine for a fixed
/// potential set. Pure in `lambda`; sweeps may evaluate in parallel.
#[derive(Debug, Clone)]
pub struct CharFnSet<'a> {
    pub potentials: &'a PotentialSet,
    pub opt: OdeOptions,
}

impl<'a> CharFnSet<'a> {
    pub fn new(potentials: &'a PotentialSet) -> Self {
        CharFnSet { potentials, opt: OdeOptions::default() }
    }

    pub fn geometry(&self) -> &GraphGeometry {
        &self.potentials.geometry
    }

    pub fn eval_all(&self, lambda: Complex64) -> Result<CharValues> {
        let loop_e = integrate_fundamental(&self.potentials.q[0], lambda, self.opt)?;
        let pend = self
            .potentials
            .q
            .iter()
            .skip(1)
            .map(|q| integrate_fundamental(q, lambda, self.opt))
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(self.geometry(), &loop_e, &pend))
    }

    pub fn eval_delta(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.eval_all(lambda)?.delta)
    }

    pub fn eval_delta_k(&self, k: usize, lambda: Complex64) -> Result<Complex64> {
        Ok(self.eval_all(lambda)?.delta_k[k - 1])
    }

    pub fn eval_d(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.eval_all(lambda)?.d)
    }

    /// Loop-only evaluation of `(h, d, H)`; cheaper than `eval_all`.
    pub fn eval_loop(&self, lambda: Complex64) -> Result<(Complex64, Complex64, Complex64)> {
        let e = integrate_fundamental(&self.potentials.q[0], lambda, self.opt)?;
        let a = self.geometry().a;
        Ok((e.s, a * e.c + e.sp / a, a * e.c - e.sp / a))
    }
}

/// Zero-potential characteristic values via the closed forms, through the
/// same assembly as the ODE-backed path.
pub fn zero_charvalues(geometry: &GraphGeometry, lambda: Complex64) -> CharValues {
    let loop_e = endpoint_zero(geometry.t[0], lambda);
    let pend: Vec<EndpointData> =
        (1..=geometry.m).map(|j| endpoint_zero(geometry.t[j], lambda)).collect();
    assemble(geometry, &loop_e, &pend)
}

pub fn eval_delta0(geometry: &GraphGeometry, lambda: Complex64) -> Complex64 {
    zero_charvalues(geometry, lambda).delta
}

pub fn eval_delta0_k(geometry: &GraphGeometry, k: usize, lambda: Complex64) -> Complex64 {
    zero_charvalues(geometry, lambda).delta_k[k - 1]
}

/// Which remainder to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Remainder {
    Main,
    /// `k` in `1..=m`.
    Pendant(usize),
}

/// Sample `rho^{m+1}(Delta - Delta^0)(rho^2)` (or the pendant variant with
/// weight `rho^m`) on a real grid. The value at `rho = 0` is the one-sided
/// limit 0. Imaginary parts (roundoff) are discarded.
pub fn pw_remainder(cf: &CharFnSet, which: Remainder, rho_grid: &[f64]) -> Result<Vec<f64>> {
    let geometry = cf.geometry();
    let power = match which {
        Remainder::Main => geometry.m as i32 + 1,
        Remainder::Pendant(_) => geometry.m as i32,
    };
    rho_grid
        .par_iter()
        .map(|&rho| {
            if rho == 0.0 {
                return Ok(0.0);
            }
            let lambda = Complex64::new(rho * rho, 0.0);
            let v = cf.eval_all(lambda)?;
            let v0 = zero_charvalues(geometry, lambda);
            let diff = match which {
                Remainder::Main => v.delta - v0.delta,
                Remainder::Pendant(k) => v.delta_k[k - 1] - v0.delta_k[k - 1],
            };
            Ok(rho.powi(power) * diff.re)
        })
        .collect()
}

/// Trapezoid L2 norm of sampled values on a uniform grid of step `h`.
pub fn sampled_l2(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let mut s = 0.5 * (values[0] * values[0] + values[n - 1] * values[n - 1]);
    for v in &values[1..n - 1] {
        s += v * v;
    }
    (h * s).sqrt()
}

/// Data metric between two datasets on the same remainder grid:
/// L2 distance of the main remainders plus the sum over pendant edges.
pub fn delta_metric(
    d1: &crate::dataset::SpectralDataset,
    d2: &crate::dataset::SpectralDataset,
) -> Result<f64> {
    if d1.geometry != d2.geometry {
        return Err(Error::GridMismatch("datasets have different geometries".into()));
    }
    if d1.kappa_main.len() != d2.kappa_main.len() || (d1.rho_max - d2.rho_max).abs() > 1e-12 {
        return Err(Error::GridMismatch("datasets have different remainder grids".into()));
    }
    let h = 2.0 * d1.rho_max / (d1.kappa_main.len() - 1) as f64;
    let l2_diff = |a: &[f64], b: &[f64]| {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        sampled_l2(&diff, h)
    };
    let mut delta = l2_diff(&d1.kappa_main, &d2.kappa_main);
    for (ka, kb) in d1.kappa_k.iter().zip(&d2.kappa_k) {
        delta += l2_diff(ka, kb);
    }
    Ok(delta)
}

/// Signs of `H` at the loop Dirichlet eigenvalues, with the Wronskian
/// cross-check `d^2 - H^2 = 4` at each zero.
pub fn signs_sigma(cf: &CharFnSet, dirichlet: &[f64], zero_tol: f64) -> Result<Vec<i8>> {
    dirichlet
        .par_iter()
        .map(|&lam| {
            let (_, d, h_cap) = cf.eval_loop(Complex64::new(lam, 0.0))?;
            let d = d.re;
            let h_cap = h_cap.re;
            let defect = (d * d - h_cap * h_cap - 4.0).abs();
            if defect > 1e-6 {
                return Err(Error::DataInconsistency(format!(
                    "d^2 - H^2 = 4 fails at lambda = {lam:.6}: defect {defect:.3e}"
                )));
            }
            Ok(if h_cap.abs() <= zero_tol {
                0
            } else if h_cap > 0.0 {
                1
            } else {
                -1
            })
        })
        .collect()
}

/// Characteristic function rebuilt from truncated zeros as a ratio against
/// a reference evaluator with known zeros:
/// `Delta(lambda) ~ Delta_ref(lambda) * prod_n (z_n - lambda)/(z_n^ref - lambda)`;
/// tail factors (beyond the stored zeros) are identically 1.
pub struct RebuiltCharFn<'a> {
    pub zeros: Vec<f64>,
    pub ref_zeros: Vec<f64>,
    pub reference: &'a (dyn Fn(Complex64) -> Complex64 + Sync),
}

impl<'a> RebuiltCharFn<'a> {
    /// Zeros are paired with reference zeros by sorted order; both lists
    /// carry multiplicities expanded.
    pub fn new(
        zeros: Vec<f64>,
        ref_zeros: Vec<f64>,
        reference: &'a (dyn Fn(Complex64) -> Complex64 + Sync),
    ) -> Result<Self> {
        if zeros.len() > ref_zeros.len() {
            return Err(Error::Validation(
                "need at least as many reference zeros as data zeros".into(),
            ));
        }
        let mut ref_zeros = ref_zeros;
        ref_zeros.truncate(zeros.len());
        Ok(RebuiltCharFn { zeros, ref_zeros, reference })
    }

    fn eval_raw(&self, lambda: Complex64) -> Complex64 {
        let mut v = (self.reference)(lambda);
        for (&z, &z0) in self.zeros.iter().zip(&self.ref_zeros) {
            v *= (z - lambda) / (z0 - lambda);
        }
        v
    }

    /// Evaluate; a collision of `lambda` with a retained reference zero is
    /// resolved by the symmetric limit `(f(lambda+ie) + f(lambda-ie))/2`
    /// (the reference factor has a matching zero there, so the ratio stays
    /// finite and the O(eps) terms cancel).
    pub fn eval(&self, lambda: Complex64) -> Complex64 {
        let tol = 1e-8 * (1.0 + lambda.norm());
        let collides = self
            .ref_zeros
            .iter()
            .chain(self.zeros.iter())
            .any(|&z| (Complex64::new(z, 0.0) - lambda).norm() < tol);
        if !collides {
            return self.eval_raw(lambda);
        }
        let eps = Complex64::new(0.0, 1e-5 * (1.0 + lambda.norm()));
        0.5 * (self.eval_raw(lambda + eps) + self.eval_raw(lambda - eps))
    }

    /// Heuristic bound for the neglected tail on `|lambda| <= window`: the
    /// observed zero shifts near the truncation edge, extended with the mean
    /// reference spacing, drive `sum_{n>N} shift / dist(z_n^0, window)`.
    pub fn tail_bound(&self, window: f64) -> f64 {
        let n = self.zeros.len();
        if n == 0 {
            return 0.0;
        }
        let q = (3 * n / 4).min(n - 1);
        let shift = self.zeros[q..]
            .iter()
            .zip(&self.ref_zeros[q..])
            .map(|(z, z0)| (z - z0).abs())
            .fold(0.0, f64::max)
            * 2.0;
        let last = *self.ref_zeros.last().unwrap();
        let rho_last = last.abs().sqrt().max(1.0);
        let spacing = if n >= 5 {
            let r0 = self.ref_zeros[n - 5].abs().sqrt();
            ((rho_last - r0) / 4.0).max(1e-3)
        } else {
            1.0
        };
        let mut bound = 0.0;
        for j in 1..200_000 {
            let rho = rho_last + j as f64 * spacing;
            let z = rho * rho;
            let term = shift / (z - window).max(spacing * rho);
            bound += term;
            if term < 1e-18 {
                break;
            }
        }
        bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;
    use std::f64::consts::PI;

    fn geom(m: usize, a: f64) -> GraphGeometry {
        GraphGeometry::new(m, vec![1.0; m + 1], a).unwrap()
    }

    /// Direct transcription of the zero-potential closed form for Delta,
    /// used as an independent oracle for the assembled evaluator.
    fn delta0_direct(g: &GraphGeometry, lambda: Complex64) -> Complex64 {
        let sincs: Vec<Complex64> =
            g.t.iter().map(|&t| sin_rho_x_over_rho(lambda, t)).collect();
        let coss: Vec<Complex64> = g.t.iter().map(|&t| cos_rho_x(lambda, t)).collect();
        let mut pendant_prod = Complex64::new(1.0, 0.0);
        for j in 1..=g.m {
            pendant_prod *= sincs[j];
        }
        let first = (g.a_plus_inv() * coss[0] - 2.0) * pendant_prod;
        let mut second = Complex64::new(0.0, 0.0);
        for r in 1..=g.m {
            let mut p = Complex64::new(1.0, 0.0);
            for j in 0..=g.m {
                if j != r {
                    p *= sincs[j];
                }
            }
            second += coss[r] * p;
        }
        first + g.a * second
    }

    #[test]
    fn delta0_closed_form_value() {
        // m=1, a=2, unit lengths, lambda=(pi/2)^2: Delta^0 = -4/pi
        let g = geom(1, 2.0);
        let lam = Complex64::new(PI * PI / 4.0, 0.0);
        let v = eval_delta0(&g, lam);
        assert!((v.re + 4.0 / PI).abs() < 1e-12, "{v}");
        assert!(v.im.abs() < 1e-14);
        let direct = delta0_direct(&g, lam);
        assert!((v - direct).norm() < 1e-13);
    }

    #[test]
    fn delta0_matches_direct_form_on_sweep() {
        for (m, a) in [(1usize, 2.0), (2, 2.0), (3, -1.5)] {
            let g = geom(m, a);
            for i in 0..60 {
                let lam = Complex64::new(-10.0 + 410.0 * i as f64 / 59.0, 0.0);
                let v = eval_delta0(&g, lam);
                let w = delta0_direct(&g, lam);
                assert!((v - w).norm() <= 1e-10 * (1.0 + w.norm()), "m={m} lam={lam}: {v} vs {w}");
            }
        }
    }

    #[test]
    fn delta0_finite_at_lambda_zero() {
        let g = geom(2, 2.0);
        let v = eval_delta0(&g, Complex64::new(0.0, 0.0));
        assert!(v.is_finite());
        // limit of sin(rho T)/rho at rho -> 0 is T
        let w = delta0_direct(&g, Complex64::new(1e-18, 0.0));
        assert!((v - w).norm() < 1e-9);
    }

    #[test]
    fn d_and_h_cap_zero_potential() {
        let g = geom(1, 2.0);
        let v0 = zero_charvalues(&g, Complex64::new(0.0, 0.0));
        assert!((v0.d.re - 2.5).abs() < 1e-14);
        let vpi = zero_charvalues(&g, Complex64::new(PI * PI, 0.0));
        assert!((vpi.d.re + 2.5).abs() < 1e-12);
        assert!((vpi.h_cap.re + 1.5).abs() < 1e-12);
    }

    #[test]
    fn ode_backed_matches_closed_form_on_zero_potentials() {
        let g = geom(2, 2.0);
        let pots = PotentialSet::zero(&g, 512);
        let cf = CharFnSet::new(&pots);
        for i in 0..50 {
            let lam = Complex64::new(-10.0 + 410.0 * i as f64 / 49.0, 0.0);
            let v = cf.eval_all(lam).unwrap();
            let v0 = zero_charvalues(&g, lam);
            assert!(
                (v.delta - v0.delta).norm() <= 1e-10 * (1.0 + v0.delta.norm()),
                "lam = {lam}: {} vs {}",
                v.delta,
                v0.delta
            );
            for k in 0..2 {
                assert!(
                    (v.delta_k[k] - v0.delta_k[k]).norm() <= 1e-10 * (1.0 + v0.delta_k[k].norm())
                );
            }
        }
    }

    #[test]
    fn delta_is_real_on_real_axis() {
        let g = geom(2, 2.0);
        let q: Vec<GridFunction> = g
            .t
            .iter()
            .map(|&t| GridFunction::sample(t, 513, |x| 0.4 * (2.0 * PI * x / t).cos()).unwrap())
            .collect();
        let pots = PotentialSet::from_raw(g, q).unwrap();
        let cf = CharFnSet::new(&pots);
        for i in 0..20 {
            let lam = Complex64::new(-5.0 + 30.0 * i as f64, 0.0);
            let v = cf.eval_all(lam).unwrap();
            assert!(v.delta.im.abs() <= 1e-10 * (1.0 + v.delta.norm()));
            assert!(v.d.im.abs() <= 1e-10 * (1.0 + v.d.norm()));
        }
    }

    #[test]
    fn identity_d2_minus_h2() {
        // d^2 - H^2 = 4 C_0 S_0' identically in lambda (Wronskian)
        let g = geom(1, 2.0);
        let q = vec![
            GridFunction::sample(1.0, 513, |x| 0.8 * (2.0 * PI * x).cos()).unwrap(),
            GridFunction::zero(1.0, 513),
        ];
        let pots = PotentialSet::from_raw(g, q).unwrap();
        let cf = CharFnSet::new(&pots);
        for i in 0..100 {
            let lam = Complex64::new(-20.0 + 4.1 * i as f64, 0.0);
            let v = cf.eval_all(lam).unwrap();
            let lhs = v.d * v.d - v.h_cap * v.h_cap;
            let rhs = 4.0 * v.c0 * v.s0p;
            assert!((lhs - rhs).norm() <= 1e-8 * (1.0 + rhs.norm()), "lam {lam}");
        }
    }

    #[test]
    fn pw_remainder_zero_potential_vanishes() {
        let g = geom(1, 2.0);
        let pots = PotentialSet::zero(&g, 256);
        let cf = CharFnSet::new(&pots);
        let grid: Vec<f64> = (0..41).map(|i| -20.0 + i as f64).collect();
        let kappa = pw_remainder(&cf, Remainder::Main, &grid).unwrap();
        for (v, rho) in kappa.iter().zip(&grid) {
            assert!(v.abs() < 1e-8, "kappa({rho}) = {v:.3e}");
        }
    }

    #[test]
    fn pw_remainder_parity() {
        // kappa(-rho) = +/- kappa(rho) for real data, so the samples on a
        // symmetric grid are determined by the rho >= 0 half
        let g = geom(1, 2.0);
        let q = vec![
            GridFunction::sample(1.0, 513, |x| 0.5 * (2.0 * PI * x).cos()).unwrap(),
            GridFunction::sample(1.0, 513, |x| 0.3 * (4.0 * PI * x).sin()).unwrap(),
        ];
        let pots = PotentialSet::from_raw(g, q).unwrap();
        let cf = CharFnSet::new(&pots);
        let grid: Vec<f64> = (1..30).map(|i| i as f64 * 0.7).collect();
        let neg: Vec<f64> = grid.iter().map(|r| -r).collect();
        let kp = pw_remainder(&cf, Remainder::Main, &grid).unwrap();
        let km = pw_remainder(&cf, Remainder::Main, &neg).unwrap();
        for (p, m_) in kp.iter().zip(&km) {
            assert!((p - m_).abs() <= 1e-10 * (1.0 + p.abs()), "{p} vs {m_}");
        }
    }

    #[test]
    fn metric_properties() {
        use crate::dataset::SpectralDataset;
        let g = geom(1, 2.0);
        let base = |kappa: Vec<f64>, kk: Vec<f64>| SpectralDataset {
            geometry: g.clone(),
            lambda_main: vec![1.0],
            lambda_k: vec![vec![1.0]],
            sigma: vec![1],
            rho_max: 10.0,
            kappa_main: kappa,
            kappa_k: vec![kk],
        };
        let d1 = base(vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.0]);
        let d2 = base(vec![0.0, 0.0, 1.0], vec![0.0, 0.5, 0.0]);
        let d3 = base(vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.5]);
        assert_eq!(delta_metric(&d1, &d1).unwrap(), 0.0);
        let m12 = delta_metric(&d1, &d2).unwrap();
        let m21 = delta_metric(&d2, &d1).unwrap();
        assert!((m12 - m21).abs() < 1e-15);
        let m13 = delta_metric(&d1, &d3).unwrap();
        let m23 = delta_metric(&d2, &d3).unwrap();
        assert!(m13 <= m12 + m23 + 1e-12);
        let mut other_grid = d1.clone();
        other_grid.rho_max = 11.0;
        assert!(delta_metric(&d1, &other_grid).is_err());
    }

    #[test]
    fn sigma_alternates_for_zero_loop() {
        let g = geom(1, 2.0);
        let pots = PotentialSet::zero(&g, 512);
        let cf = CharFnSet::new(&pots);
        let zeros: Vec<f64> = (1..=10).map(|n| (PI * n as f64).powi(2)).collect();
        let sigma = signs_sigma(&cf, &zeros, 1e-8).unwrap();
        for (n, s) in sigma.iter().enumerate() {
            let expect = if (n + 1) % 2 == 0 { 1 } else { -1 };
            assert_eq!(*s, expect, "n = {}", n + 1);
        }
    }

    #[test]
    fn rebuild_with_reference_zeros_is_reference() {
        let href = |lam: Complex64| sin_rho_x_over_rho(lam, 1.0);
        let zeros: Vec<f64> = (1..=20).map(|n| (PI * n as f64).powi(2)).collect();
        let rb = RebuiltCharFn::new(zeros.clone(), zeros.clone(), &href).unwrap();
        for i in 0..25 {
            let lam = Complex64::new(-3.0 + 9.0 * i as f64, 0.4);
            assert!((rb.eval(lam) - href(lam)).norm() <= 1e-10 * (1.0 + href(lam).norm()));
        }
        // collision limit: evaluating exactly at a retained reference zero
        let at_zero = rb.eval(Complex64::new(zeros[2], 0.0));
        assert!((at_zero - href(Complex64::new(zeros[2], 0.0))).norm() < 1e-6);
    }
}
