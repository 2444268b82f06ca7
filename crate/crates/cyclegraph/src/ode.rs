//! Fundamental solutions of -y'' + q(x) y = lambda y on a single edge.
//!
//! `S(x, lambda)` and `C(x, lambda)` are the solutions with
//! `S(0) = C'(0) = 0`, `S'(0) = C(0) = 1`. The integrator is a fixed-step
//! 4th-order Magnus scheme (two-point Gauss) on the potential's grid with
//! linear interpolation of `q` between nodes; every step propagates the
//! 2x2 fundamental matrix by the closed-form exponential of a traceless
//! matrix, so the Wronskian stays at 1 up to rounding for any lambda.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// |Im rho| * T budget; exp(700) is still finite in f64.
pub const OVERFLOW_BUDGET: f64 = 700.0;

const GAUSS_OFFSET: f64 = 0.288675134594812882; // sqrt(3)/6

/// Endpoint values of the fundamental solutions (or of their
/// lambda-derivatives) at `x = T`.
#[derive(Debug, Clone, Copy)]
pub struct EndpointData {
    pub s: Complex64,
    pub sp: Complex64,
    pub c: Complex64,
    pub cp: Complex64,
}

impl EndpointData {
    /// Normalized Wronskian defect `|C S' - C' S - 1| / max(1, |C||S'| + |C'||S|)`.
    ///
    /// The normalization matters for complex lambda: the solutions grow like
    /// exp(|Im rho| T) and the absolute defect of the cancellation is below
    /// f64 resolution there.
    pub fn wronskian_defect(&self) -> f64 {
        let w = self.c * self.sp - self.cp * self.s;
        let scale = (self.c.norm() * self.sp.norm() + self.cp.norm() * self.s.norm()).max(1.0);
        (w - Complex64::new(1.0, 0.0)).norm() / scale
    }
}

/// Per-node values of the fundamental solutions along an edge.
#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub x: Vec<f64>,
    pub s: Vec<Complex64>,
    pub sp: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub cp: Vec<Complex64>,
}

impl SolutionTrace {
    pub fn endpoint(&self) -> EndpointData {
        let n = self.x.len() - 1;
        EndpointData { s: self.s[n], sp: self.sp[n], c: self.c[n], cp: self.cp[n] }
    }

    pub fn max_wronskian_defect(&self) -> f64 {
        (0..self.x.len())
            .map(|i| {
                EndpointData { s: self.s[i], sp: self.sp[i], c: self.c[i], cp: self.cp[i] }
                    .wronskian_defect()
            })
            .fold(0.0, f64::max)
    }
}

/// Integrator options.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// Substeps per potential-grid interval (step halving = 2).
    pub steps_per_interval: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { steps_per_interval: 1 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Mat2 {
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
}

impl Mat2 {
    const ZERO: Mat2 = Mat2 {
        a: Complex64::new(0.0, 0.0),
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
        d: Complex64::new(0.0, 0.0),
    };
    const IDENTITY: Mat2 = Mat2 {
        a: Complex64::new(1.0, 0.0),
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
        d: Complex64::new(1.0, 0.0),
    };

    #[inline]
    fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

/// cosh(w), sinh(w)/w, and (cosh(w) - sinh(w)/w)/w^2 as functions of w^2.
#[inline]
fn cosh_sinhc_g(w2: Complex64) -> (Complex64, Complex64, Complex64) {
    if w2.norm() < 1e-3 {
        // series in w^2; truncation error ~ |w2|^4 / 4e4 < 3e-17
        let one = Complex64::new(1.0, 0.0);
        let cosh = one + w2 * 0.5 + w2 * w2 * (1.0 / 24.0) + w2 * w2 * w2 * (1.0 / 720.0);
        let sinhc = one + w2 * (1.0 / 6.0) + w2 * w2 * (1.0 / 120.0) + w2 * w2 * w2 * (1.0 / 5040.0);
        let g = Complex64::new(1.0 / 3.0, 0.0)
            + w2 * (1.0 / 30.0)
            + w2 * w2 * (1.0 / 840.0)
            + w2 * w2 * w2 * (1.0 / 45360.0);
        (cosh, sinhc, g)
    } else {
        let w = w2.sqrt();
        let e = w.exp();
        let einv = 1.0 / e;
        let cosh = 0.5 * (e + einv);
        let sinh = 0.5 * (e - einv);
        let sinhc = sinh / w;
        let g = (cosh - sinhc) / w2;
        (cosh, sinhc, g)
    }
}

/// One Magnus step over `[x0, x0 + h]`; returns the propagator and, when
/// requested, its lambda-derivative.
#[inline]
fn step_propagator(
    q0: f64,
    q1: f64,
    h: f64,
    lambda: Complex64,
    with_deriv: bool,
) -> (Mat2, Option<Mat2>) {
    // q at the two Gauss points of the step (q is linear on the step)
    let qg1 = q0 + (q1 - q0) * (0.5 - GAUSS_OFFSET);
    let qg2 = q0 + (q1 - q0) * (0.5 + GAUSS_OFFSET);
    let ubar = Complex64::new(0.5 * (qg1 + qg2), 0.0) - lambda;
    // commutator term of the 4th-order Magnus expansion
    let gamma = Complex64::new(3f64.sqrt() * h * h / 12.0 * (qg1 - qg2), 0.0);
    let w2 = gamma * gamma + ubar * (h * h);
    let (cosh, sinhc, g) = cosh_sinhc_g(w2);

    let omega = Mat2 { a: gamma, b: Complex64::new(h, 0.0), c: ubar * h, d: -gamma };
    let e = Mat2 {
        a: cosh + sinhc * omega.a,
        b: sinhc * omega.b,
        c: sinhc * omega.c,
        d: cosh + sinhc * omega.d,
    };
    if !with_deriv {
        return (e, None);
    }
    // d(w^2)/dlambda = -h^2
    let dcosh = -0.5 * h * h * sinhc;
    let dsinhc = -0.5 * h * h * g;
    // dOmega/dlambda has the single entry c = -h
    let de = Mat2 {
        a: dcosh + dsinhc * omega.a,
        b: dsinhc * omega.b,
        c: dsinhc * omega.c + sinhc * (-h),
        d: dcosh + dsinhc * omega.d,
    };
    (e, Some(de))
}

fn check_budget(q: &GridFunction, lambda: Complex64) -> Result<()> {
    let im_rho = lambda.sqrt().im.abs();
    let budget = im_rho * q.length;
    if budget > OVERFLOW_BUDGET {
        return Err(Error::Overflow { budget, limit: OVERFLOW_BUDGET });
    }
    Ok(())
}

struct Propagation {
    phi: Mat2,
    psi: Mat2, // d(phi)/d(lambda)
}

/// Walk the potential grid from 0 to `x_stop`, invoking `record` after every
/// requested point (points must be ascending and inside [0, T]).
fn propagate(
    q: &GridFunction,
    lambda: Complex64,
    opt: OdeOptions,
    with_deriv: bool,
    points: &[f64],
    record: &mut dyn FnMut(f64, &Propagation),
) {
    let sub = opt.steps_per_interval.max(1);
    let h_grid = q.step();
    let mut state = Propagation { phi: Mat2::IDENTITY, psi: Mat2::ZERO };
    let mut x = 0.0;

    let advance = |state: &mut Propagation, x0: f64, x1: f64| {
        if x1 - x0 <= 0.0 {
            return;
        }
        let n = sub;
        let h = (x1 - x0) / n as f64;
        for k in 0..n {
            let a = x0 + k as f64 * h;
            let (e, de) = step_propagator(q.eval(a), q.eval(a + h), h, lambda, with_deriv);
            let phi_new = e.mul(&state.phi);
            if let Some(de) = de {
                state.psi = e.mul(&state.psi);
                let extra = de.mul(&state.phi);
                state.psi.a += extra.a;
                state.psi.b += extra.b;
                state.psi.c += extra.c;
                state.psi.d += extra.d;
            }
            state.phi = phi_new;
        }
    };

    for &p in points {
        let p = p.clamp(0.0, q.length);
        // step through whole grid intervals up to the one containing p
        while x + h_grid <= p + 1e-15 * q.length {
            let next = (x / h_grid).round() as usize + 1;
            let x_next = (next as f64 * h_grid).min(q.length);
            advance(&mut state, x, x_next);
            x = x_next;
            if (x - q.length).abs() < 1e-15 * q.length {
                break;
            }
        }
        if p > x {
            advance(&mut state, x, p);
            x = p;
        }
        record(x, &state);
    }
}

fn endpoint_from(phi: &Mat2) -> EndpointData {
    // fundamental matrix columns: [C, S; C', S']
    EndpointData { s: phi.b, sp: phi.d, c: phi.a, cp: phi.c }
}

/// Endpoint values `S(T), S'(T), C(T), C'(T)` for the edge potential `q`.
pub fn integrate_fundamental(
    q: &GridFunction,
    lambda: Complex64,
    opt: OdeOptions,
) -> Result<EndpointData> {
    check_budget(q, lambda)?;
    let mut out = None;
    propagate(q, lambda, opt, false, &[q.length], &mut |_, st| {
        out = Some(endpoint_from(&st.phi));
    });
    Ok(out.expect("propagation records the endpoint"))
}

/// Values of both fundamental solutions at the requested nodes
/// (ascending, within `[0, T]`).
pub fn solution_trace(q: &GridFunction, lambda: Complex64, xs: &[f64], opt: OdeOptions) -> Result<SolutionTrace> {
    check_budget(q, lambda)?;
    if xs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Grid("trace nodes must be ascending".into()));
    }
    if xs.iter().any(|&x| x < -1e-12 || x > q.length * (1.0 + 1e-12)) {
        return Err(Error::Grid("trace nodes must lie in [0, T]".into()));
    }
    let mut tr = SolutionTrace {
        x: Vec::with_capacity(xs.len()),
        s: Vec::with_capacity(xs.len()),
        sp: Vec::with_capacity(xs.len()),
        c: Vec::with_capacity(xs.len()),
        cp: Vec::with_capacity(xs.len()),
    };
    propagate(q, lambda, opt, false, xs, &mut |x, st| {
        let e = endpoint_from(&st.phi);
        tr.x.push(x);
        tr.s.push(e.s);
        tr.sp.push(e.sp);
        tr.c.push(e.c);
        tr.cp.push(e.cp);
    });
    Ok(tr)
}

/// Trace on the potential's own grid.
pub fn solution_trace_on_grid(q: &GridFunction, lambda: Complex64, opt: OdeOptions) -> Result<SolutionTrace> {
    let xs: Vec<f64> = q.nodes().collect();
    solution_trace(q, lambda, &xs, opt)
}

/// d/d(lambda) of `(S, S', C, C')` at `x = T`, via the variational system
/// propagated alongside the fundamental matrix.
pub fn lambda_derivative(q: &GridFunction, lambda: Complex64, opt: OdeOptions) -> Result<EndpointData> {
    check_budget(q, lambda)?;
    let mut out = None;
    propagate(q, lambda, opt, true, &[q.length], &mut |_, st| {
        out = Some(endpoint_from(&st.psi));
    });
    Ok(out.expect("propagation records the endpoint"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Independent oracle: classic RK4 on the first-order system, run at a
    /// multiple of the grid resolution; interpolates q off the same grid.
    fn rk4_trace(q: &GridFunction, lambda: Complex64, refine: usize) -> (EndpointData, Vec<EndpointData>) {
        let n = (q.n_nodes() - 1) * refine;
        let h = q.length / n as f64;
        let mut y = [
            Complex64::new(1.0, 0.0), // C
            Complex64::new(0.0, 0.0), // C'
            Complex64::new(0.0, 0.0), // S
            Complex64::new(1.0, 0.0), // S'
        ];
        let deriv = |x: f64, y: &[Complex64; 4]| {
            let u = Complex64::new(q.eval(x), 0.0) - lambda;
            [y[1], u * y[0], y[3], u * y[2]]
        };
        let mut per_node = Vec::new();
        let snap = |y: &[Complex64; 4]| EndpointData { c: y[0], cp: y[1], s: y[2], sp: y[3] };
        per_node.push(snap(&y));
        for i in 0..n {
            let x = i as f64 * h;
            let k1 = deriv(x, &y);
            let y2 = std::array::from_fn(|j| y[j] + 0.5 * h * k1[j]);
            let k2 = deriv(x + 0.5 * h, &y2);
            let y3 = std::array::from_fn(|j| y[j] + 0.5 * h * k2[j]);
            let k3 = deriv(x + 0.5 * h, &y3);
            let y4 = std::array::from_fn(|j| y[j] + h * k3[j]);
            let k4 = deriv(x + h, &y4);
            for j in 0..4 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if (i + 1) % refine == 0 {
                per_node.push(snap(&y));
            }
        }
        (snap(&y), per_node)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
    }

    #[test]
    fn zero_potential_lambda_zero() {
        let q = GridFunction::zero(1.0, 513);
        let e = integrate_fundamental(&q, Complex64::new(0.0, 0.0), OdeOptions::default()).unwrap();
        assert!(close(e.s, Complex64::new(1.0, 0.0), 1e-13));
        assert!(close(e.sp, Complex64::new(1.0, 0.0), 1e-13));
        assert!(close(e.c, Complex64::new(1.0, 0.0), 1e-13));
        assert!(e.cp.norm() < 1e-13);
    }

    #[test]
    fn zero_potential_lambda_pi_squared() {
        let q = GridFunction::zero(1.0, 513);
        let e = integrate_fundamental(&q, Complex64::new(PI * PI, 0.0), OdeOptions::default()).unwrap();
        assert!(e.s.norm() < 1e-11);
        assert!(close(e.sp, Complex64::new(-1.0, 0.0), 1e-12));
        assert!(close(e.c, Complex64::new(-1.0, 0.0), 1e-12));
        assert!(e.cp.norm() < 1e-10);
    }

    #[test]
    fn zero_potential_closed_forms_at_sample_lambdas() {
        let q = GridFunction::zero(1.0, 513);
        for lambda in [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(PI * PI, 0.0),
            Complex64::new(1.0, 1.0) * Complex64::new(1.0, 1.0),
        ] {
            let e = integrate_fundamental(&q, lambda, OdeOptions::default()).unwrap();
            let rho = lambda.sqrt();
            let (s_ref, c_ref) = if rho.norm() < 1e-9 {
                (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
            } else {
                (rho.sin() / rho, rho.cos())
            };
            assert!(close(e.s, s_ref, 1e-10), "S at {lambda}: {} vs {}", e.s, s_ref);
            assert!(close(e.c, c_ref, 1e-10), "C at {lambda}: {} vs {}", e.c, c_ref);
            assert!(close(e.cp, -lambda * s_ref, 1e-10));
        }
    }

    #[test]
    fn cosine_potential_matches_fine_rk4() {
        let q = GridFunction::sample(1.0, 513, |x| (2.0 * PI * x).cos()).unwrap();
        let lambda = Complex64::new(1.0, 0.0);
        let e = integrate_fundamental(&q, lambda, OdeOptions::default()).unwrap();
        let (oracle, _) = rk4_trace(&q, lambda, 10);
        assert!(close(e.s, oracle.s, 1e-8), "{} vs {}", e.s, oracle.s);
        assert!(close(e.sp, oracle.sp, 1e-8));
        assert!(close(e.c, oracle.c, 1e-8));
        assert!(close(e.cp, oracle.cp, 1e-8));
    }

    #[test]
    fn trace_zero_potential_values() {
        let q = GridFunction::zero(1.0, 513);
        let tr = solution_trace(&q, Complex64::new(PI * PI, 0.0), &[0.5], OdeOptions::default()).unwrap();
        assert!(close(tr.s[0], Complex64::new(1.0 / PI, 0.0), 1e-12));

        let tr = solution_trace(&q, Complex64::new(0.0, 0.0), &[0.0, 0.5, 1.0], OdeOptions::default()).unwrap();
        for (got, want) in tr.s.iter().zip([0.0, 0.5, 1.0]) {
            assert!(close(*got, Complex64::new(want, 0.0), 1e-13));
        }
    }

    #[test]
    fn trace_matches_oracle_at_complex_lambda() {
        let q = GridFunction::sample(1.0, 257, |x| (2.0 * PI * x).cos()).unwrap();
        let lambda = Complex64::new(4.0, 3.0);
        let tr = solution_trace_on_grid(&q, lambda, OdeOptions::default()).unwrap();
        let (_, oracle) = rk4_trace(&q, lambda, 10);
        assert_eq!(tr.s.len(), oracle.len());
        for (i, o) in oracle.iter().enumerate() {
            assert!(close(tr.s[i], o.s, 1e-8), "node {i}");
            assert!(close(tr.sp[i], o.sp, 1e-8), "node {i}");
        }
        // endpoint consistency with integrate_fundamental
        let e = integrate_fundamental(&q, lambda, OdeOptions::default()).unwrap();
        let last = tr.endpoint();
        assert!(close(e.s, last.s, 1e-12));
    }

    #[test]
    fn lambda_derivative_closed_forms() {
        let q = GridFunction::zero(1.0, 513);
        // d/dlambda of sin(rho)/rho at lambda = pi^2 is -1/(2 pi^2)
        let d = lambda_derivative(&q, Complex64::new(PI * PI, 0.0), OdeOptions::default()).unwrap();
        assert!(close(d.s, Complex64::new(-1.0 / (2.0 * PI * PI), 0.0), 1e-10), "{}", d.s);
        // S = x - lambda x^3/6 + O(lambda^2): derivative at 0 is -1/6
        let d = lambda_derivative(&q, Complex64::new(0.0, 0.0), OdeOptions::default()).unwrap();
        assert!(close(d.s, Complex64::new(-1.0 / 6.0, 0.0), 1e-12), "{}", d.s);
    }

    #[test]
    fn lambda_derivative_matches_finite_difference() {
        let q = GridFunction::sample(1.0, 513, |x| 0.7 * (2.0 * PI * x).cos() + 0.2 * (4.0 * PI * x).sin())
            .unwrap();
        for lambda in [Complex64::new(3.0, 0.0), Complex64::new(40.0, 5.0), Complex64::new(-2.0, 0.0)] {
            let d = lambda_derivative(&q, lambda, OdeOptions::default()).unwrap();
            let h = 1e-5 * (1.0 + lambda.norm());
            let ep = integrate_fundamental(&q, lambda + h, OdeOptions::default()).unwrap();
            let em = integrate_fundamental(&q, lambda - h, OdeOptions::default()).unwrap();
            let fd = |p: Complex64, m: Complex64| (p - m) / (2.0 * h);
            assert!(close(d.s, fd(ep.s, em.s), 1e-6), "S' fd at {lambda}");
            assert!(close(d.sp, fd(ep.sp, em.sp), 1e-6));
            assert!(close(d.c, fd(ep.c, em.c), 1e-6));
            assert!(close(d.cp, fd(ep.cp, em.cp), 1e-6));
        }
    }

    #[test]
    fn wronskian_defect_along_trace() {
        let q = GridFunction::sample(1.0, 513, |x| 1.4 * (2.0 * PI * x).cos() - 0.6 * (6.0 * PI * x).sin())
            .unwrap();
        for lambda in [
            Complex64::new(9000.0, 0.0),
            Complex64::new(100.0, 300.0),
            Complex64::new(-20.0, 0.0),
            Complex64::new(0.0, 1000.0),
        ] {
            let tr = solution_trace_on_grid(&q, lambda, OdeOptions::default()).unwrap();
            assert!(
                tr.max_wronskian_defect() < 1e-10,
                "defect {} at {lambda}",
                tr.max_wronskian_defect()
            );
        }
    }

    #[test]
    fn conjugate_symmetry_for_real_potential() {
        let q = GridFunction::sample(1.0, 257, |x| (2.0 * PI * x).cos()).unwrap();
        let lambda = Complex64::new(11.0, 7.0);
        let e = integrate_fundamental(&q, lambda, OdeOptions::default()).unwrap();
        let ec = integrate_fundamental(&q, lambda.conj(), OdeOptions::default()).unwrap();
        assert!(close(ec.s, e.s.conj(), 1e-12));
        assert!(close(ec.sp, e.sp.conj(), 1e-12));
        assert!(close(ec.c, e.c.conj(), 1e-12));
        assert!(close(ec.cp, e.cp.conj(), 1e-12));
    }

    #[test]
    fn overflow_guard_trips() {
        let q = GridFunction::zero(1.0, 65);
        let lambda = Complex64::new(0.0, 1e7); // Im rho ~ 2236 > 700
        let err = integrate_fundamental(&q, lambda, OdeOptions::default()).unwrap_err();
        assert!(err.to_string().contains("700"), "{err}");
    }

    #[test]
    fn step_halving_is_consistent() {
        let q = GridFunction::sample(1.0, 257, |x| (2.0 * PI * x).cos()).unwrap();
        let lambda = Complex64::new(250.0, 0.0);
        let e1 = integrate_fundamental(&q, lambda, OdeOptions { steps_per_interval: 1 }).unwrap();
        let e2 = integrate_fundamental(&q, lambda, OdeOptions { steps_per_interval: 2 }).unwrap();
        assert!(close(e1.s, e2.s, 1e-9));
    }
}
