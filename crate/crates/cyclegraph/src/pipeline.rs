//! End-to-end drivers: forward computation of spectral datasets,
//! potential-space perturbations, the three-step inversion, stability
//! sweeps, and the uniform-stability probe.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::boundary::{
    recover_boundary_potential, verify_msm_identity, weyl_diff, ContourSpec, MsmReport,
    ReferenceSolutions,
};
use crate::charfn::{
    delta_metric, eval_delta0, eval_delta0_k, pw_remainder, sampled_l2, signs_sigma, CharFnSet,
    Remainder,
};
use crate::config::RunConfig;
use crate::dataset::{fmt_f64, SpectralDataset};
use crate::error::{Error, Result, StepContext};
use crate::geometry::GraphGeometry;
use crate::grid::{grid_nodes, project_mean_zero, GridFunction, PotentialSet};
use crate::loopinv::{
    gl_dirichlet_reconstruct, quasi_to_dirichlet, verify_sigma_condition, QuasiData, SigmaReport,
};
use crate::ode::OdeOptions;
use crate::pw::PwExtension;
use crate::vertex::{dirichlet_from_h, extract_loop_kernels, ExtractOptions, ExtractReport};
use crate::zeros::{find_real_zeros, ScanOptions};

pub const POTENTIALS_HEADER: &str = "cyclegraph-potentials v1";

/// Serialize a potential set in the same line-oriented style as the
/// dataset format.
pub fn potentials_to_text(pots: &PotentialSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{POTENTIALS_HEADER}");
    let _ = writeln!(s, "GEOMETRY");
    let _ = writeln!(s, "m {}", pots.geometry.m);
    let _ = writeln!(s, "a {}", fmt_f64(pots.geometry.a));
    let _ = writeln!(s, "T {}", pots.geometry.t.len());
    for t in &pots.geometry.t {
        let _ = writeln!(s, "{}", fmt_f64(*t));
    }
    for (j, q) in pots.q.iter().enumerate() {
        let _ = writeln!(s, "POTENTIAL {} {}", j, q.values.len());
        for v in &q.values {
            let _ = writeln!(s, "{}", fmt_f64(*v));
        }
    }
    let _ = writeln!(s, "END");
    s
}

pub fn potentials_from_text(text: &str) -> Result<PotentialSet> {
    let mut lines = text.lines().enumerate();
    let mut next = |field: &str| -> Result<(usize, &str)> {
        for (no, line) in lines.by_ref() {
            let t = line.trim();
            if !t.is_empty() {
                return Ok((no + 1, t));
            }
        }
        Err(Error::Parse { line: 0, field: field.into(), msg: "unexpected end of file".into() })
    };
    let parse_err = |line: usize, field: &str, msg: &str| Error::Parse {
        line,
        field: field.into(),
        msg: msg.into(),
    };
    let (l, head) = next("header")?;
    if head != POTENTIALS_HEADER {
        return Err(parse_err(l, "header", "not a cyclegraph-potentials v1 file"));
    }
    let (l, sect) = next("GEOMETRY")?;
    if sect != "GEOMETRY" {
        return Err(parse_err(l, "GEOMETRY", "missing GEOMETRY section"));
    }
    let key_val = |l: usize, line: &str, key: &str| -> Result<String> {
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(parse_err(l, key, "unexpected key"));
        }
        it.next().map(str::to_owned).ok_or_else(|| parse_err(l, key, "missing value"))
    };
    let (l, line) = next("m")?;
    let m: usize = key_val(l, line, "m")?.parse().map_err(|_| parse_err(l, "m", "not an integer"))?;
    let (l, line) = next("a")?;
    let a: f64 = key_val(l, line, "a")?.parse().map_err(|_| parse_err(l, "a", "not a number"))?;
    let (l, line) = next("T")?;
    let nt: usize =
        key_val(l, line, "T")?.parse().map_err(|_| parse_err(l, "T", "not an integer"))?;
    let mut t = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (l, line) = next("T entry")?;
        t.push(line.parse::<f64>().map_err(|_| parse_err(l, "T entry", "not a number"))?);
    }
    let geometry =
        GraphGeometry::new(m, t, a).map_err(|e| parse_err(0, "GEOMETRY", &e.to_string()))?;
    let mut q = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let (l, line) = next("POTENTIAL")?;
        let mut it = line.split_whitespace();
        if it.next() != Some("POTENTIAL") {
            return Err(parse_err(l, "POTENTIAL", "missing POTENTIAL section"));
        }
        let jj: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(l, "POTENTIAL", "missing edge index"))?;
        if jj != j {
            return Err(parse_err(l, "POTENTIAL", &format!("expected edge {j}, got {jj}")));
        }
        let n: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(l, "POTENTIAL", "missing node count"))?;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, line) = next("potential value")?;
            vals.push(
                line.parse::<f64>().map_err(|_| parse_err(l, "potential value", "not a number"))?,
            );
        }
        q.push(GridFunction::new(geometry.t[j], vals)?);
    }
    let (l, end) = next("END")?;
    if end != "END" {
        return Err(parse_err(l, "END", "missing END marker"));
    }
    PotentialSet::new(geometry, q)
}

pub fn save_potentials(pots: &PotentialSet, path: &Path) -> Result<()> {
    std::fs::write(path, potentials_to_text(pots))?;
    Ok(())
}

pub fn load_potentials(path: &Path) -> Result<PotentialSet> {
    potentials_from_text(&std::fs::read_to_string(path)?)
}

fn derived_rng(seed: u64, tag: u64, j: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.rotate_left(17) ^ (j << 40),
    )
}

/// The documented smooth bump family: mixtures of
/// `sin(m pi x/T) sin(n pi x/T)` with `m != n`, which are exactly
/// mean-zero, vanish at both edge endpoints, and are band-limited.
/// Normalized to unit L2 norm.
fn smooth_bump(length: f64, nodes: usize, rng: &mut ChaCha20Rng) -> GridFunction {
    const MODES: [(f64, f64); 5] = [(1.0, 2.0), (2.0, 3.0), (1.0, 4.0), (3.0, 4.0), (2.0, 5.0)];
    let coeffs: Vec<f64> = (0..MODES.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = GridFunction::sample(length, nodes, |x| {
        let s = std::f64::consts::PI * x / length;
        MODES
            .iter()
            .zip(&coeffs)
            .map(|(&(m, n), c)| c * (m * s).sin() * (n * s).sin())
            .sum()
    })
    .expect("bump sampling");
    let norm = f.l2_norm();
    let values = f.values.iter().map(|v| v / norm).collect();
    project_mean_zero(&GridFunction { length, values, mean_zero: false })
}

/// Unit-norm perturbation directions, one per edge, deterministic in the
/// seed.
pub fn bump_family(geometry: &GraphGeometry, nodes_per_unit: usize, seed: u64) -> Vec<GridFunction> {
    geometry
        .t
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut rng = derived_rng(seed, 0xB0, j as u64);
            smooth_bump(t, grid_nodes(t, nodes_per_unit), &mut rng)
        })
        .collect()
}

/// Random smooth potential set with prescribed per-edge norms.
pub fn random_potentials(
    geometry: &GraphGeometry,
    nodes_per_unit: usize,
    seed: u64,
    norms: &[f64],
) -> Result<PotentialSet> {
    if norms.len() != geometry.m + 1 {
        return Err(Error::Validation("need one norm per edge".into()));
    }
    let q = geometry
        .t
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut rng = derived_rng(seed, 0xA0, j as u64);
            let w = smooth_bump(t, grid_nodes(t, nodes_per_unit), &mut rng);
            let values = w.values.iter().map(|v| v * norms[j]).collect();
            project_mean_zero(&GridFunction { length: t, values, mean_zero: false })
        })
        .collect();
    PotentialSet::new(geometry.clone(), q)
}

/// `q_j + eps * w_j`, re-projected onto the mean-zero class.
pub fn perturb_potentials(
    pots: &PotentialSet,
    bumps: &[GridFunction],
    eps: f64,
) -> Result<PotentialSet> {
    let q = pots
        .q
        .iter()
        .zip(bumps)
        .map(|(q, w)| {
            let values = q.values.iter().zip(&w.values).map(|(a, b)| a + eps * b).collect();
            project_mean_zero(&GridFunction { length: q.length, values, mean_zero: false })
        })
        .collect();
    PotentialSet::new(pots.geometry.clone(), q)
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub dataset: SpectralDataset,
    pub warnings: Vec<String>,
}

fn ode_options(cfg: &RunConfig) -> OdeOptions {
    OdeOptions { steps_per_interval: cfg.grids.steps_per_interval }
}

fn scan_options(cfg: &RunConfig, total_length: f64, expected: Option<usize>) -> ScanOptions {
    ScanOptions {
        scan_step: std::f64::consts::PI / (cfg.eigenvalues.scan_oversample as f64 * total_length),
        refinement_tol: cfg.tolerances.refinement_tol,
        expected_count: expected,
        count_slack: 8,
    }
}

/// Compute the full spectral dataset of a potential set.
pub fn run_forward(cfg: &RunConfig, pots: &PotentialSet) -> Result<ForwardOutput> {
    cfg.validate()?;
    let geometry = &pots.geometry;
    let cf = CharFnSet { potentials: pots, opt: ode_options(cfg) };
    let mut warnings = Vec::new();

    // remainder sections
    let n = cfg.remainders.n_samples | 1;
    let rho_max = cfg.remainders.rho_max;
    let rho_grid: Vec<f64> =
        (0..n).map(|i| -rho_max + 2.0 * rho_max * i as f64 / (n - 1) as f64).collect();
    let kappa_main = pw_remainder(&cf, Remainder::Main, &rho_grid).in_step("forward remainders")?;
    let mut kappa_k = Vec::with_capacity(geometry.m);
    for k in 1..=geometry.m {
        kappa_k.push(pw_remainder(&cf, Remainder::Pendant(k), &rho_grid).in_step("forward remainders")?);
    }

    // spectra
    let lower = geometry.spectral_lower_bound(pots.max_norm().max(0.5)) - 1.0;
    let hi = cfg.eigenvalues.rho_max.powi(2);
    let total = geometry.total_length();
    // zero-potential zero counts drive the coarse-scan sanity warning
    let count0 = |f: &(dyn Fn(f64) -> f64 + Sync)| -> Result<usize> {
        Ok(find_real_zeros(f, (lower, hi), &scan_options(cfg, total, None))?
            .count_with_multiplicity())
    };
    let g0 = geometry.clone();
    let d0 = move |lam: f64| eval_delta0(&g0, Complex64::new(lam, 0.0)).re;
    let expected_main = count0(&d0)?;
    let fmain = |lam: f64| {
        cf.eval_all(Complex64::new(lam, 0.0)).map(|v| v.delta.re).unwrap_or(f64::NAN)
    };
    let main_list =
        find_real_zeros(&fmain, (lower, hi), &scan_options(cfg, total, Some(expected_main)))
            .in_step("forward main spectrum")?;
    warnings.extend(main_list.warnings.iter().cloned());

    let mut lambda_k = Vec::with_capacity(geometry.m);
    for k in 1..=geometry.m {
        let gk = geometry.clone();
        let d0k = move |lam: f64| eval_delta0_k(&gk, k, Complex64::new(lam, 0.0)).re;
        let expected = count0(&d0k)?;
        let fk = |lam: f64| {
            cf.eval_all(Complex64::new(lam, 0.0)).map(|v| v.delta_k[k - 1].re).unwrap_or(f64::NAN)
        };
        let list = find_real_zeros(&fk, (lower, hi), &scan_options(cfg, total, Some(expected)))
            .in_step("forward pendant spectrum")?;
        warnings.extend(list.warnings.iter().cloned());
        lambda_k.push(list.values_with_multiplicity());
    }

    // loop Dirichlet zeros and signs
    let n_sigma = cfg.eigenvalues.n_sigma;
    let t0 = geometry.t[0];
    let loop_hi = ((n_sigma as f64 + 1.0) * std::f64::consts::PI / t0 + 2.0).powi(2);
    let floop = |lam: f64| {
        cf.eval_loop(Complex64::new(lam, 0.0)).map(|(h, _, _)| h.re).unwrap_or(f64::NAN)
    };
    let loop_list = find_real_zeros(&floop, (lower, loop_hi), &scan_options(cfg, t0, None))
        .in_step("forward loop spectrum")?;
    if loop_list.values.len() < n_sigma {
        return Err(Error::ZeroSearch(format!(
            "found only {} loop Dirichlet eigenvalues, need {n_sigma}",
            loop_list.values.len()
        )));
    }
    let loop_zeros = &loop_list.values[..n_sigma];
    let sigma = signs_sigma(&cf, loop_zeros, cfg.tolerances.sigma_zero_tol)
        .in_step("forward sigma")?;

    let dataset = SpectralDataset {
        geometry: geometry.clone(),
        lambda_main: main_list.values_with_multiplicity(),
        lambda_k,
        sigma,
        rho_max,
        kappa_main,
        kappa_k,
    };
    dataset.validate()?;
    Ok(ForwardOutput { dataset, warnings })
}

/// Perturb the potentials along the documented bump family and recompute
/// the dataset, enforcing sign preservation.
pub fn run_perturb(
    cfg: &RunConfig,
    pots: &PotentialSet,
    base: &SpectralDataset,
    eps: f64,
) -> Result<(PotentialSet, ForwardOutput)> {
    let bumps = bump_family(&pots.geometry, cfg.grids.nodes_per_unit, cfg.seed);
    let perturbed = perturb_potentials(pots, &bumps, eps)?;
    let fwd = run_forward(cfg, &perturbed)?;
    let n = base.sigma.len().min(fwd.dataset.sigma.len());
    if base.sigma[..n] != fwd.dataset.sigma[..n] {
        return Err(Error::SignFlip(format!(
            "sigma sequence changed under eps = {eps:.3e}"
        )));
    }
    Ok((perturbed, fwd))
}

/// Experimental data-space perturbation: jitter the stored eigenvalues and
/// rebuild the characteristic functions as zero ratios against the
/// zero-potential reference, then resample the remainder sections from the
/// rebuilt evaluators. No realizability guarantee: the output need not be
/// the data of any potential set (the sigma sequence is carried over
/// unchanged).
pub fn run_perturb_experimental(
    cfg: &RunConfig,
    ds: &SpectralDataset,
    eps: f64,
) -> Result<SpectralDataset> {
    use crate::charfn::RebuiltCharFn;
    ds.validate()?;
    let geometry = ds.geometry.clone();
    let total = geometry.total_length();
    let lower = geometry.spectral_lower_bound(1.0) - 1.0;
    let jitter = |list: &[f64], tag: u64| -> Vec<f64> {
        let mut rng = derived_rng(cfg.seed, 0xE0 ^ tag, 0);
        let mut out: Vec<f64> =
            list.iter().map(|&l| l + eps * rng.gen_range(-1.0..1.0)).collect();
        out.sort_by(f64::total_cmp);
        out
    };
    let ref_zero_list = |f: &(dyn Fn(f64) -> f64 + Sync), hi: f64| -> Result<Vec<f64>> {
        Ok(find_real_zeros(f, (lower, hi), &scan_options(cfg, total, None))?
            .values_with_multiplicity())
    };
    let window_hi = |list: &[f64]| list.last().map(|&l| l * 1.02 + 20.0).unwrap_or(50.0);

    let n = ds.kappa_main.len();
    let rho_grid: Vec<f64> =
        (0..n).map(|i| -ds.rho_max + 2.0 * ds.rho_max * i as f64 / (n - 1) as f64).collect();
    let resample = |rb: &RebuiltCharFn, power: i32| -> Vec<f64> {
        rho_grid
            .par_iter()
            .map(|&rho| {
                if rho == 0.0 {
                    return 0.0;
                }
                let lam = Complex64::new(rho * rho, 0.0);
                let ref_v = (rb.reference)(lam);
                rho.powi(power) * (rb.eval(lam) - ref_v).re
            })
            .collect()
    };

    let g_main = geometry.clone();
    let ref_main = move |lam: Complex64| eval_delta0(&g_main, lam);
    let zeros_main = jitter(&ds.lambda_main, 1);
    let ref0_main = {
        let g = geometry.clone();
        let f = move |lam: f64| eval_delta0(&g, Complex64::new(lam, 0.0)).re;
        ref_zero_list(&f, window_hi(&zeros_main))?
    };
    let rb_main = RebuiltCharFn::new(zeros_main.clone(), ref0_main, &ref_main)?;
    let kappa_main = resample(&rb_main, geometry.m as i32 + 1);

    let mut lambda_k = Vec::with_capacity(geometry.m);
    let mut kappa_k = Vec::with_capacity(geometry.m);
    for k in 1..=geometry.m {
        let g = geometry.clone();
        let ref_k = move |lam: Complex64| eval_delta0_k(&g, k, lam);
        let zeros_k = jitter(&ds.lambda_k[k - 1], 1 + k as u64);
        let ref0_k = {
            let g = geometry.clone();
            let f = move |lam: f64| eval_delta0_k(&g, k, Complex64::new(lam, 0.0)).re;
            ref_zero_list(&f, window_hi(&zeros_k))?
        };
        let rb = RebuiltCharFn::new(zeros_k.clone(), ref0_k, &ref_k)?;
        kappa_k.push(resample(&rb, geometry.m as i32));
        lambda_k.push(zeros_k);
    }

    let out = SpectralDataset {
        geometry,
        lambda_main: zeros_main,
        lambda_k,
        sigma: ds.sigma.clone(),
        rho_max: ds.rho_max,
        kappa_main,
        kappa_k,
    };
    out.validate()?;
    Ok(out)
}

/// Dataset-backed entire evaluators for `Delta` and `Delta_k`, via
/// Paley-Wiener continuation of the stored remainder samples.
pub struct DataEvaluators {
    pub geometry: GraphGeometry,
    main: PwExtension,
    pendant: Vec<PwExtension>,
}

impl DataEvaluators {
    pub fn new(ds: &SpectralDataset, kernel_time_nodes: usize) -> Result<Self> {
        let support = ds.geometry.total_length();
        let main = PwExtension::from_real_samples(ds.rho_max, &ds.kappa_main, support, kernel_time_nodes)?;
        let pendant = ds
            .kappa_k
            .iter()
            .map(|k| PwExtension::from_real_samples(ds.rho_max, k, support, kernel_time_nodes))
            .collect::<Result<Vec<_>>>()?;
        Ok(DataEvaluators { geometry: ds.geometry.clone(), main, pendant })
    }

    /// `Delta(lambda) = Delta^0(lambda) + kappa(rho)/rho^{m+1}`; valid away
    /// from `rho = 0` (the pipeline only evaluates on the contour and the
    /// Riesz ladder, where `|rho| >= tau`).
    pub fn delta(&self, lambda: Complex64) -> Complex64 {
        let rho = lambda.sqrt();
        eval_delta0(&self.geometry, lambda)
            + self.main.eval(rho) / rho.powi(self.geometry.m as i32 + 1)
    }

    pub fn delta_k(&self, k: usize, lambda: Complex64) -> Complex64 {
        let rho = lambda.sqrt();
        eval_delta0_k(&self.geometry, k, lambda)
            + self.pendant[k - 1].eval(rho) / rho.powi(self.geometry.m as i32)
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryDiag {
    pub cond_estimate: f64,
    pub f_max: f64,
    pub k_max: f64,
    pub mean_before: f64,
}

#[derive(Debug, Clone, Default)]
pub struct InvertReport {
    pub tau: f64,
    pub min_scaled_delta: f64,
    pub boundary: Vec<BoundaryDiag>,
    pub extract: Option<ExtractReport>,
    /// L2 change of the loop kernels when halving the Riesz modes.
    pub kernel_trunc_diff: Option<f64>,
    pub loop_cond: Option<f64>,
    pub loop_mean_removed: Option<f64>,
    pub sigma_check: Option<SigmaReport>,
    /// Relative L2 errors per edge (0 = loop) when the truth is supplied.
    pub per_edge_rel_error: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Contour placement from the dataset's own spectral floor.
fn contour_from_dataset(cfg: &RunConfig, ds: &SpectralDataset) -> ContourSpec {
    let mut floor: f64 = 0.0;
    for list in std::iter::once(&ds.lambda_main).chain(ds.lambda_k.iter()) {
        if let Some(&first) = list.first() {
            floor = floor.min(first);
        }
    }
    let tau = ((-floor).max(0.0).sqrt() + cfg.contour.tau_margin).max(cfg.contour.tau_min);
    ContourSpec { tau, sigma_max: cfg.contour.sigma_max, n_nodes: cfg.contour.n_nodes }
}

/// Run the full inversion on a dataset: Gelfand-Levitan per pendant edge
/// against the zero reference, Cramer/Riesz transition, quasiperiodic loop
/// recovery. `truth` adds per-edge error reporting.
pub fn run_invert(
    cfg: &RunConfig,
    ds: &SpectralDataset,
    truth: Option<&PotentialSet>,
) -> Result<(PotentialSet, InvertReport)> {
    ds.validate()?;
    let geometry = ds.geometry.clone();
    let m = geometry.m;
    let opt = ode_options(cfg);
    let mut report = InvertReport::default();

    // the Riesz ladder must stay inside the sampled band
    let needed = std::f64::consts::PI * cfg.riesz.n_modes as f64 / geometry.t[0]
        + 2.0 * (cfg.riesz.alpha + 0.5 * cfg.riesz.retries as f64);
    if ds.rho_max < needed {
        return Err(Error::Validation(format!(
            "dataset band rho_max = {:.1} cannot reach the Riesz ladder (needs {:.1}); \
             lower riesz.n_modes or re-run forward with a larger remainders.rho_max",
            ds.rho_max, needed
        )));
    }

    let evals = DataEvaluators::new(ds, cfg.remainders.kernel_time_nodes)?;
    let contour = contour_from_dataset(cfg, ds);
    report.tau = contour.tau;

    // step 1: pendant edges against the zero reference
    let mut recovered: Vec<GridFunction> = Vec::with_capacity(m + 1);
    recovered.push(GridFunction::zero(geometry.t[0], grid_nodes(geometry.t[0], cfg.grids.nodes_per_unit)));
    let mut min_scaled = f64::INFINITY;
    for k in 1..=m {
        let g = geometry.clone();
        let ref_delta = move |lam: Complex64| eval_delta0(&g, lam);
        let gk = geometry.clone();
        let ref_delta_k = move |lam: Complex64| eval_delta0_k(&gk, k, lam);
        let data_delta = |lam: Complex64| evals.delta(lam);
        let data_delta_k = |lam: Complex64| evals.delta_k(k, lam);
        let w = weyl_diff(&ref_delta, &ref_delta_k, &data_delta, &data_delta_k, m, &contour)
            .map_err(|e| e.in_step("invert step 1 (weyl difference)"))?;
        min_scaled = min_scaled.min(w.min_scaled_delta);
        let q_ref = GridFunction::zero(geometry.t[k], grid_nodes(geometry.t[k], cfg.grids.nodes_per_unit));
        let rec = recover_boundary_potential(
            &w,
            &ReferenceSolutions::ZeroPotential,
            &q_ref,
            opt,
            cfg.inversion.cond_limit,
            cfg.inversion.recenter,
        )
        .map_err(|e| e.in_step("invert step 1 (Gelfand-Levitan)"))?;
        report.boundary.push(BoundaryDiag {
            cond_estimate: rec.cond_estimate,
            f_max: rec.f_max,
            k_max: rec.k_max,
            mean_before: rec.mean_before,
        });
        recovered.push(rec.q);
    }
    report.min_scaled_delta = min_scaled;

    // steps 2-3: loop transition and quasiperiodic inversion
    if geometry.loop_inversion_enabled() {
        let data_delta = |lam: Complex64| evals.delta(lam);
        let data_delta_1 = |lam: Complex64| evals.delta_k(1, lam);
        let ex_opts = ExtractOptions {
            alpha: cfg.riesz.alpha,
            n_modes: cfg.riesz.n_modes,
            kernel_nodes: grid_nodes(1.0, cfg.grids.nodes_per_unit),
            retries: cfg.riesz.retries,
            min_e: cfg.riesz.min_e,
            ode: opt,
        };
        let (kernels, ex_report) = extract_loop_kernels(
            &data_delta,
            &data_delta_1,
            &recovered[1..],
            &geometry,
            &ex_opts,
        )
        .map_err(|e| e.in_step("invert step 2 (vertex transition)"))?;
        // truncation diagnostic: same extraction at half the modes
        let half_opts = ExtractOptions { n_modes: ex_opts.n_modes / 2, ..ex_opts.clone() };
        if let Ok((half, _)) = extract_loop_kernels(
            &data_delta,
            &data_delta_1,
            &recovered[1..],
            &geometry,
            &half_opts,
        ) {
            let dd = kernels.d_kernel.l2_distance(&half.d_kernel).unwrap_or(f64::NAN);
            let dk = kernels.k_kernel.l2_distance(&half.k_kernel).unwrap_or(f64::NAN);
            report.kernel_trunc_diff = Some(dd + dk);
        }
        report.extract = Some(ex_report);

        let lambda_hat = dirichlet_from_h(&kernels, cfg.inversion.gl_pairs)
            .map_err(|e| e.in_step("invert step 2 (loop Dirichlet zeros)"))?;
        let n_avail = ds.sigma.len().min(lambda_hat.len());
        if n_avail < cfg.inversion.gl_pairs {
            report.warnings.push(format!(
                "only {n_avail} sigma entries available for {} GL pairs",
                cfg.inversion.gl_pairs
            ));
        }
        let d_eval = |lam: f64| kernels.d_eval(Complex64::new(lam, 0.0)).re;
        let qd = QuasiData {
            d_eval: &d_eval,
            lambda_n: lambda_hat[..n_avail].to_vec(),
            sigma: ds.sigma[..n_avail].to_vec(),
            a: geometry.a,
        };
        let h_dot = |lam: f64| kernels.h_dot(Complex64::new(lam, 0.0)).re;
        let dd = quasi_to_dirichlet(&qd, &h_dot)
            .map_err(|e| e.in_step("invert step 3 (quasiperiodic data)"))?;
        let rec = gl_dirichlet_reconstruct(
            &dd,
            cfg.inversion.gl_pairs,
            grid_nodes(1.0, cfg.grids.nodes_per_unit),
            cfg.inversion.cond_limit,
            cfg.inversion.tail_extend,
        )
        .map_err(|e| e.in_step("invert step 3 (loop Gelfand-Levitan)"))?;
        report.loop_cond = Some(rec.cond_estimate);
        report.loop_mean_removed = Some(rec.mean_removed);
        if cfg.inversion.verify_sigma {
            report.sigma_check = Some(verify_sigma_condition(&qd, &rec.q0, opt)?);
        }
        // map back from the unit frame: q0(x) = q0_hat(x/T0)/T0^2
        let t0 = geometry.t[0];
        let n0 = grid_nodes(t0, cfg.grids.nodes_per_unit);
        let q0 = GridFunction::sample(t0, n0, |x| rec.q0.eval(x / t0) / (t0 * t0))?;
        recovered[0] = project_mean_zero(&q0);
    } else {
        report.warnings.push(
            "a = +/-1: quasiperiodic loop inversion disabled, loop potential left at zero".into(),
        );
    }

    let out = PotentialSet::new(geometry, recovered)?;
    if let Some(truth) = truth {
        let errs = out
            .q
            .iter()
            .zip(&truth.q)
            .map(|(rec, tru)| {
                rec.l2_distance(tru).map(|e| e / tru.l2_norm().max(f64::MIN_POSITIVE))
            })
            .collect::<Result<Vec<_>>>()?;
        report.per_edge_rel_error = Some(errs);
    }
    Ok((out, report))
}

/// One row of a stability sweep.
#[derive(Debug, Clone)]
pub struct StabilityRecord {
    pub epsilon: f64,
    /// Data metric between the base and perturbed datasets.
    pub delta: f64,
    /// Per-edge L2 distance between the two reconstructions.
    pub recovered_diff: Vec<f64>,
    /// Per-edge L2 distance between the true potentials (= eps by
    /// construction of the unit-norm bump family, up to projection).
    pub true_diff: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<StabilityRecord>,
    /// Log-log slope of recovered_diff vs delta, per edge.
    pub slopes: Vec<f64>,
    /// max/min of recovered_diff/delta across the family, per edge.
    pub ratio_spread: Vec<f64>,
}

/// Perturb-invert sweep across the epsilon family.
pub fn run_stability_sweep(
    cfg: &RunConfig,
    pots: &PotentialSet,
    epsilons: &[f64],
) -> Result<SweepResult> {
    let base = run_forward(cfg, pots)?;
    let (base_inv, _) = run_invert(cfg, &base.dataset, None)?;
    let m = pots.geometry.m;
    let mut records = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let step = || -> Result<StabilityRecord> {
            let (pert, fwd) = run_perturb(cfg, pots, &base.dataset, eps)?;
            let delta = delta_metric(&base.dataset, &fwd.dataset)?;
            let (inv, _) = run_invert(cfg, &fwd.dataset, None)?;
            let recovered_diff = inv
                .q
                .iter()
                .zip(&base_inv.q)
                .map(|(a, b)| a.l2_distance(b))
                .collect::<Result<Vec<_>>>()?;
            let true_diff = pert
                .q
                .iter()
                .zip(&pots.q)
                .map(|(a, b)| a.l2_distance(b))
                .collect::<Result<Vec<_>>>()?;
            Ok(StabilityRecord { epsilon: eps, delta, recovered_diff, true_diff, error: None })
        };
        match step() {
            Ok(rec) => records.push(rec),
            Err(e) => records.push(StabilityRecord {
                epsilon: eps,
                delta: f64::NAN,
                recovered_diff: vec![f64::NAN; m + 1],
                true_diff: vec![f64::NAN; m + 1],
                error: Some(e.to_string()),
            }),
        }
    }

    let good: Vec<&StabilityRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let mut slopes = Vec::with_capacity(m + 1);
    let mut spread = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let pts: Vec<(f64, f64)> = good
            .iter()
            .filter(|r| r.recovered_diff[j] > 0.0 && r.delta > 0.0)
            .map(|r| (r.delta.ln(), r.recovered_diff[j].ln()))
            .collect();
        slopes.push(fit_slope(&pts));
        let ratios: Vec<f64> = good.iter().map(|r| r.recovered_diff[j] / r.delta).collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        spread.push(hi / lo);
    }
    Ok(SweepResult { records, slopes, ratio_spread: spread })
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// CSV serialization of a sweep (columns documented in the README).
pub fn sweep_csv(sweep: &SweepResult, m: usize) -> String {
    let mut s = String::from("epsilon,delta");
    for j in 0..=m {
        let _ = write!(s, ",recovered_diff_q{j},ratio_q{j},true_diff_q{j}");
    }
    s.push_str(",error\n");
    for r in &sweep.records {
        let _ = write!(s, "{:.6e},{:.6e}", r.epsilon, r.delta);
        for j in 0..=m {
            let _ = write!(
                s,
                ",{:.6e},{:.6e},{:.6e}",
                r.recovered_diff[j],
                r.recovered_diff[j] / r.delta,
                r.true_diff[j]
            );
        }
        let _ = writeln!(s, ",{}", r.error.as_deref().unwrap_or(""));
    }
    s
}

/// Minimal deterministic log-log SVG scatter of recovered_diff vs delta
/// with the fitted slopes; a pure function of the sweep rows.
pub fn sweep_svg(sweep: &SweepResult, m: usize) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let good: Vec<&StabilityRecord> = sweep.records.iter().filter(|r| r.error.is_none()).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in &good {
        if r.delta > 0.0 {
            xs.push(r.delta.log10());
            for j in 0..=m {
                if r.recovered_diff[j] > 0.0 {
                    ys.push(r.recovered_diff[j].log10());
                }
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<line x1=\"{m0}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\
         <line x1=\"{m0}\" y1=\"{yt}\" x2=\"{m0}\" y2=\"{yb}\" stroke=\"black\"/>",
        m0 = MARGIN,
        xr = W - MARGIN,
        yb = H - MARGIN,
        yt = MARGIN
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\">log10 delta</text>",
        W / 2.0 - 30.0,
        H - 18.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" font-size=\"13\" transform=\"rotate(-90 14 {})\">log10 recovered diff</text>",
        H / 2.0 + 60.0,
        H / 2.0 + 60.0
    );
    for j in 0..=m {
        let color = COLORS[j % COLORS.len()];
        let mut pts = Vec::new();
        for r in &good {
            if r.delta > 0.0 && r.recovered_diff[j] > 0.0 {
                pts.push((r.delta.log10(), r.recovered_diff[j].log10()));
            }
        }
        for &(x, y) in &pts {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>",
                sx(x),
                sy(y)
            );
        }
        // fitted line across the x-range
        if pts.len() >= 2 {
            let slope = sweep.slopes[j];
            let cx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let cy: f64 = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let y_at = |x: f64| cy + slope * (x - cx);
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-dasharray=\"4 3\"/>",
                sx(x0),
                sy(y_at(x0)),
                sx(x1),
                sy(y_at(x1))
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">q{j}: slope {:.3}</text>",
            W - MARGIN - 150.0,
            MARGIN + 18.0 * (j as f64 + 1.0),
            sweep.slopes[j]
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.08 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Uniform-stability probe: for random pairs in the ball of radius
/// `q_norm`, the per-pendant-edge ratio
/// `||q_k - q~_k|| / (||rho^{m+1} Delta-hat|| + ||rho^m Delta_k-hat||)`.
#[derive(Debug, Clone)]
pub struct UniformProbe {
    /// Per pair: max over pendant edges of the stability ratio.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// max/min across pairs.
    pub spread: f64,
}

pub fn uniform_probe(cfg: &RunConfig, n_pairs: usize, q_norm: f64) -> Result<UniformProbe> {
    let geometry = cfg.graph_geometry()?;
    let n = cfg.remainders.n_samples | 1;
    let rho_max = cfg.remainders.rho_max;
    let rho_grid: Vec<f64> =
        (0..n).map(|i| -rho_max + 2.0 * rho_max * i as f64 / (n - 1) as f64).collect();
    let h = 2.0 * rho_max / (n - 1) as f64;
    let mut ratios = Vec::with_capacity(n_pairs);
    for pair in 0..n_pairs {
        let mut rng = derived_rng(cfg.seed, 0xC0, pair as u64);
        let norms_a: Vec<f64> =
            (0..=geometry.m).map(|_| q_norm * rng.gen_range(0.5..1.0)).collect();
        let norms_b: Vec<f64> =
            (0..=geometry.m).map(|_| q_norm * rng.gen_range(0.5..1.0)).collect();
        let qa = random_potentials(&geometry, cfg.grids.nodes_per_unit, cfg.seed ^ (0xA11 + pair as u64), &norms_a)?;
        let qb = random_potentials(&geometry, cfg.grids.nodes_per_unit, cfg.seed ^ (0xB22 + pair as u64), &norms_b)?;
        let cfa = CharFnSet { potentials: &qa, opt: ode_options(cfg) };
        let cfb = CharFnSet { potentials: &qb, opt: ode_options(cfg) };
        let ka = pw_remainder(&cfa, Remainder::Main, &rho_grid)?;
        let kb = pw_remainder(&cfb, Remainder::Main, &rho_grid)?;
        let dmain = sampled_l2(&sub(&ka, &kb), h);
        let mut best: f64 = 0.0;
        for k in 1..=geometry.m {
            let ka_k = pw_remainder(&cfa, Remainder::Pendant(k), &rho_grid)?;
            let kb_k = pw_remainder(&cfb, Remainder::Pendant(k), &rho_grid)?;
            let denom = dmain + sampled_l2(&sub(&ka_k, &kb_k), h);
            let qhat = qa.q[k].l2_distance(&qb.q[k])?;
            best = best.max(qhat / denom);
        }
        ratios.push(best);
    }
    let (lo, hi) =
        ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    Ok(UniformProbe { ratios, max_ratio: hi, spread: hi / lo })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One record of the spectral-mapping identity probe: the residual at the
/// default contour and at the half-count contour whose node-doubling *is*
/// the default.
#[derive(Debug, Clone)]
pub struct MsmProbeRecord {
    pub report_half: MsmReport,
    pub report: MsmReport,
}

/// MSM identity check over random pairs. The convergence clause compares
/// the half-count contour against the default (doubling the nodes of the
/// former yields the latter; the band extends with the count because pure
/// densification is already converged at the default spacing).
///
/// The pairs are sampled at 4x the base grid: the piecewise-linear kink
/// content of a coarser representation is an O(h^2) component *outside*
/// any affordable contour band, and it would floor the node-doubling
/// convergence of the residual at the representation error rather than
/// the quadrature truncation being measured.
pub fn msm_probe(cfg: &RunConfig, n_pairs: usize, q_norm: f64, edge: usize) -> Result<Vec<MsmProbeRecord>> {
    let geometry = cfg.graph_geometry()?;
    let opt = ode_options(cfg);
    let probe_nodes = cfg.grids.nodes_per_unit * 4;
    let mut out = Vec::with_capacity(n_pairs);
    for pair in 0..n_pairs {
        let mut rng = derived_rng(cfg.seed, 0xD0, pair as u64);
        let norms_a: Vec<f64> =
            (0..=geometry.m).map(|_| q_norm * rng.gen_range(0.4..1.0)).collect();
        let norms_b: Vec<f64> =
            (0..=geometry.m).map(|_| q_norm * rng.gen_range(0.4..1.0)).collect();
        let qa = random_potentials(&geometry, probe_nodes, cfg.seed ^ (0xD11 + pair as u64), &norms_a)?;
        let qb = random_potentials(&geometry, probe_nodes, cfg.seed ^ (0xD22 + pair as u64), &norms_b)?;
        let cfa = CharFnSet { potentials: &qa, opt };
        let cfb = CharFnSet { potentials: &qb, opt };
        let da = |lam: Complex64| cfa.eval_all(lam).map(|v| v.delta).unwrap_or(Complex64::new(f64::NAN, 0.0));
        let dka = |lam: Complex64| {
            cfa.eval_all(lam).map(|v| v.delta_k[edge - 1]).unwrap_or(Complex64::new(f64::NAN, 0.0))
        };
        let db = |lam: Complex64| cfb.eval_all(lam).map(|v| v.delta).unwrap_or(Complex64::new(f64::NAN, 0.0));
        let dkb = |lam: Complex64| {
            cfb.eval_all(lam).map(|v| v.delta_k[edge - 1]).unwrap_or(Complex64::new(f64::NAN, 0.0))
        };
        let contour = ContourSpec {
            tau: cfg.contour.tau_min + cfg.contour.tau_margin,
            sigma_max: cfg.contour.sigma_max,
            n_nodes: cfg.contour.n_nodes,
        };
        let half = ContourSpec {
            sigma_max: contour.sigma_max / 2.0,
            n_nodes: (contour.n_nodes | 1) / 2 + 1,
            ..contour
        };
        debug_assert_eq!(half.doubled_nodes().n_nodes, contour.n_nodes | 1);
        let probes = [(0.31, 7.3), (0.62, 23.1), (0.47, 54.2), (0.81, 3.4), (0.22, 96.0)];
        let run = |c: &ContourSpec| -> Result<MsmReport> {
            let w = weyl_diff(&da, &dka, &db, &dkb, geometry.m, c)?;
            verify_msm_identity(&qa.q[edge], &qb.q[edge], &w, opt, &probes)
        };
        let report_half = run(&half)?;
        let report = run(&contour)?;
        out.push(MsmProbeRecord { report_half, report });
    }
    Ok(out)
}

/// Human-readable inversion report.
pub fn format_invert_report(report: &InvertReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "contour tau: {:.4}", report.tau);
    let _ = writeln!(s, "min |Delta| * |rho|^m on contour: {:.4e}", report.min_scaled_delta);
    for (k, b) in report.boundary.iter().enumerate() {
        let _ = writeln!(
            s,
            "edge {}: cond {:.3e}, max|F| {:.3e}, max|K| {:.3e}, mean before recentering {:+.3e}",
            k + 1,
            b.cond_estimate,
            b.f_max,
            b.k_max,
            b.mean_before
        );
    }
    if let Some(ex) = &report.extract {
        let _ = writeln!(
            s,
            "riesz extraction: alpha {:.2}, min|E| {:.3e}, cosine-kernel mean removed {:+.3e}",
            ex.alpha_used, ex.min_abs_e, ex.k_mean_removed
        );
    }
    if let Some(d) = report.kernel_trunc_diff {
        let _ = writeln!(s, "loop kernel change at half the Riesz modes: {:.3e}", d);
    }
    if let Some(c) = report.loop_cond {
        let _ = writeln!(s, "loop GL condition estimate: {:.3e}", c);
    }
    if let Some(mu) = report.loop_mean_removed {
        let _ = writeln!(s, "loop recovery mean removed: {:+.3e}", mu);
    }
    if let Some(sc) = &report.sigma_check {
        let _ = writeln!(
            s,
            "sigma verification: {} checked, mismatches {:?}",
            sc.checked, sc.mismatches
        );
    }
    if let Some(errs) = &report.per_edge_rel_error {
        for (j, e) in errs.iter().enumerate() {
            let _ = writeln!(s, "edge {j} relative L2 error vs truth: {:.4e}", e);
        }
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
