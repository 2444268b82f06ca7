//! Real-zero location for characteristic functions.
//!
//! Zeros of the characteristic functions are roughly uniform in
//! `rho = sqrt(lambda)`, so the scan runs in the signed-root variable
//! `t = sign(lambda) sqrt(|lambda|)`. Sign changes are refined by bisection
//! plus a secant polish; dips of `|f|` that do not change sign are re-scanned
//! at 64x resolution and either split into a close pair or flagged as a
//! double zero located by a parabola fit.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Located zeros with multiplicity flags (1 = simple sign change,
/// 2 = certified local minimum / double zero).
#[derive(Debug, Clone)]
pub struct EigenvalueList {
    pub values: Vec<f64>,
    pub multiplicities: Vec<u8>,
    pub search_window: (f64, f64),
    pub refinement_tol: f64,
    pub warnings: Vec<String>,
}

impl EigenvalueList {
    /// Zeros with multiplicity-2 entries repeated.
    pub fn values_with_multiplicity(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for (v, m) in self.values.iter().zip(&self.multiplicities) {
            for _ in 0..*m {
                out.push(*v);
            }
        }
        out
    }

    pub fn count_with_multiplicity(&self) -> usize {
        self.multiplicities.iter().map(|&m| m as usize).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Scan step in the signed-root variable `t`.
    pub scan_step: f64,
    /// Relative refinement tolerance on lambda.
    pub refinement_tol: f64,
    /// Expected zero count (e.g. from the zero-potential reference);
    /// a mismatch beyond `count_slack` produces a warning.
    pub expected_count: Option<usize>,
    pub count_slack: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { scan_step: 0.1, refinement_tol: 1e-12, expected_count: None, count_slack: 3 }
    }
}

fn lambda_of(t: f64) -> f64 {
    t * t.abs()
}

fn t_of(lambda: f64) -> f64 {
    lambda.signum() * lambda.abs().sqrt()
}

/// Refine a bracketed sign change in `t`: bisection alternated with a
/// bracket-clamped secant step (halving guaranteed, superlinear near the
/// root).
fn refine_bracket(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol_t: f64) -> f64 {
    debug_assert!(fa * fb <= 0.0);
    for iter in 0..90 {
        if (b - a).abs() <= tol_t {
            break;
        }
        let mid = 0.5 * (a + b);
        let x = if iter % 2 == 1 && fb != fa {
            let s = b - fb * (b - a) / (fb - fa);
            let margin = 0.01 * (b - a);
            if s > a + margin && s < b - margin {
                s
            } else {
                mid
            }
        } else {
            mid
        };
        let fx = f(lambda_of(x));
        if fx == 0.0 {
            return x;
        }
        if fa * fx < 0.0 {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
    }
    if fa.abs() <= fb.abs() {
        a
    } else {
        b
    }
}

/// Vertex of the parabola through three points.
fn parabola_vertex(t: &[f64; 3], f: &[f64; 3]) -> (f64, f64) {
    let (x0, x1, x2) = (t[0], t[1], t[2]);
    let (y0, y1, y2) = (f[0], f[1], f[2]);
    let d0 = (x1 - x0) * (x2 - x0);
    let d1 = (x1 - x0) * (x2 - x1);
    let d2 = (x2 - x0) * (x2 - x1);
    // Newton form coefficients
    let c1 = (y1 - y0) / (x1 - x0);
    let c2 = ((y2 - y1) / (x2 - x1) - c1) / (x2 - x0);
    let _ = (d0, d1, d2);
    if c2 == 0.0 {
        return (x1, y1);
    }
    let tv = 0.5 * (x0 + x1 - c1 / c2);
    let fv = y0 + c1 * (tv - x0) + c2 * (tv - x0) * (tv - x1);
    (tv, fv)
}

/// Locate the real zeros of `f` (a function of `lambda`) in a window.
///
/// `f` is evaluated in parallel along the scan grid; refinement is serial
/// per candidate.
pub fn find_real_zeros(
    f: &(dyn Fn(f64) -> f64 + Sync),
    window: (f64, f64),
    opts: &ScanOptions,
) -> Result<EigenvalueList> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::ZeroSearch(format!("empty window ({lo}, {hi})")));
    }
    let t_lo = t_of(lo);
    let t_hi = t_of(hi);
    let n = ((t_hi - t_lo) / opts.scan_step).ceil() as usize + 1;
    if n < 3 {
        return Err(Error::ZeroSearch("scan grid has fewer than 3 points".into()));
    }
    let ts: Vec<f64> = (0..=n).map(|i| t_lo + (t_hi - t_lo) * i as f64 / n as f64).collect();
    let fs: Vec<f64> = ts.par_iter().map(|&t| f(lambda_of(t))).collect();

    let mut zeros: Vec<(f64, u8)> = Vec::new();
    let scale_near = |i: usize| -> f64 {
        let a = i.saturating_sub(2);
        let b = (i + 3).min(fs.len());
        fs[a..b].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };

    let mut i = 0;
    while i + 1 < ts.len() {
        let (fa, fb) = (fs[i], fs[i + 1]);
        if fa == 0.0 {
            zeros.push((ts[i], 1));
            i += 1;
            continue;
        }
        if fa * fb < 0.0 {
            let tol_t = opts.refinement_tol * (1.0 + ts[i].abs());
            let t = refine_bracket(f, ts[i], ts[i + 1], fa, fb, tol_t);
            zeros.push((t, 1));
            i += 1;
            continue;
        }
        // interior dip of |f| without a sign change: candidate double zero
        // or unresolved close pair
        if i >= 1
            && fs[i].abs() < fs[i - 1].abs()
            && fs[i].abs() < fs[i + 1].abs()
            && fs[i].abs() <= 0.25 * scale_near(i)
        {
            let (t_lo_s, t_hi_s) = (ts[i - 1], ts[i + 1]);
            let nsub = 128;
            let sub_ts: Vec<f64> =
                (0..=nsub).map(|j| t_lo_s + (t_hi_s - t_lo_s) * j as f64 / nsub as f64).collect();
            let sub_fs: Vec<f64> = sub_ts.par_iter().map(|&t| f(lambda_of(t))).collect();
            let mut found_pair = false;
            for j in 0..nsub {
                if sub_fs[j] * sub_fs[j + 1] < 0.0 {
                    let tol_t = opts.refinement_tol * (1.0 + sub_ts[j].abs());
                    let t = refine_bracket(f, sub_ts[j], sub_ts[j + 1], sub_fs[j], sub_fs[j + 1], tol_t);
                    zeros.push((t, 1));
                    found_pair = true;
                }
            }
            if !found_pair {
                // tangential zero or a pair below the sub-scan resolution:
                // parabola fit around the sub-scan minimum, then probe the
                // vertex to split pairs invisible to the sampling
                let jm = (1..nsub)
                    .min_by(|&a, &b| sub_fs[a].abs().total_cmp(&sub_fs[b].abs()))
                    .unwrap();
                let (tv, fv) = parabola_vertex(
                    &[sub_ts[jm - 1], sub_ts[jm], sub_ts[jm + 1]],
                    &[sub_fs[jm - 1], sub_fs[jm], sub_fs[jm + 1]],
                );
                if fv.abs() <= 1e-5 * scale_near(i).max(1e-300)
                    && tv > t_lo_s
                    && tv < t_hi_s
                {
                    let f_tv = f(lambda_of(tv));
                    let outside_sign = sub_fs[jm - 1].signum();
                    if f_tv != 0.0 && f_tv.signum() != outside_sign {
                        // the dip does cross zero: split into two simple roots
                        let tol_t = opts.refinement_tol * (1.0 + tv.abs());
                        let t1 = refine_bracket(f, sub_ts[jm - 1], tv, sub_fs[jm - 1], f_tv, tol_t);
                        let t2 = refine_bracket(f, tv, sub_ts[jm + 1], f_tv, sub_fs[jm + 1], tol_t);
                        zeros.push((t1, 1));
                        zeros.push((t2, 1));
                    } else {
                        zeros.push((tv, 2));
                    }
                }
            }
        }
        i += 1;
    }

    // dedupe (refinements from adjacent brackets can coincide)
    zeros.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut dedup: Vec<(f64, u8)> = Vec::with_capacity(zeros.len());
    for (t, m) in zeros {
        if let Some(last) = dedup.last() {
            if (t - last.0).abs() <= 1e-9 * (1.0 + t.abs()) {
                continue;
            }
        }
        dedup.push((t, m));
    }

    let values: Vec<f64> = dedup.iter().map(|&(t, _)| lambda_of(t)).collect();
    let multiplicities: Vec<u8> = dedup.iter().map(|&(_, m)| m).collect();
    let mut warnings = Vec::new();
    if let Some(expected) = opts.expected_count {
        let got: usize = multiplicities.iter().map(|&m| m as usize).sum();
        if got.abs_diff(expected) > opts.count_slack {
            warnings.push(format!(
                "zero count {got} deviates from the expected {expected} by more than {}; scan step {} may be too coarse",
                opts.count_slack, opts.scan_step
            ));
        }
    }
    Ok(EigenvalueList {
        values,
        multiplicities,
        search_window: window,
        refinement_tol: opts.refinement_tol,
        warnings,
    })
}
