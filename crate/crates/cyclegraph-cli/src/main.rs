//! Batch driver for the cycle-graph Sturm-Liouville problems: forward
//! spectral datasets, potential perturbations, full inversions, and
//! stability sweeps. All outputs are plain files under the output
//! directory; runs are deterministic in the config and seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cyclegraph::config::RunConfig;
use cyclegraph::dataset::SpectralDataset;
use cyclegraph::grid::PotentialSet;
use cyclegraph::pipeline::{
    format_invert_report, load_potentials, random_potentials, run_forward, run_invert,
    run_perturb, run_perturb_experimental, run_stability_sweep, save_potentials, sweep_csv,
    sweep_svg, uniform_probe,
};

#[derive(Parser)]
#[command(name = "cyclegraph", about = "Sturm-Liouville problems on a graph with a cycle", version)]
struct Cli {
    /// TOML run configuration (defaults printed by `defaults`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for the deterministic generators.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the spectral dataset of a potential set (generated from the
    /// seeded smooth family when no file is given).
    Forward {
        /// Potentials file (cyclegraph-potentials v1).
        #[arg(long)]
        potentials: Option<PathBuf>,
        /// Target per-edge norm of generated potentials.
        #[arg(long, default_value_t = 0.4)]
        norm: f64,
    },
    /// Perturb potentials along the documented bump family and recompute
    /// the dataset (sign preservation enforced), or jitter the stored
    /// eigenvalues directly with --experimental (no realizability
    /// guarantee).
    Perturb {
        #[arg(long, required_unless_present = "experimental")]
        potentials: Option<PathBuf>,
        /// Dataset to jitter in --experimental mode.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        experimental: bool,
    },
    /// Recover all edge potentials from a dataset.
    Invert {
        #[arg(long)]
        dataset: PathBuf,
        /// Ground-truth potentials for error reporting.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Perturb-invert sweep over an epsilon family; writes sweep.csv,
    /// sweep.svg and report.txt.
    StabilitySweep {
        #[arg(long)]
        potentials: Option<PathBuf>,
        /// Comma-separated epsilon list.
        #[arg(long, default_value = "1e-3,3e-3,1e-2,3e-2")]
        epsilon: String,
        /// Target per-edge norm of generated potentials.
        #[arg(long, default_value_t = 0.4)]
        norm: f64,
        /// Also run the uniform-stability probe over this many random
        /// pairs in the unit ball.
        #[arg(long)]
        uniform_pairs: Option<usize>,
    },
    /// Print the default configuration as TOML.
    Defaults,
    /// Quick self-check: zero-potential identities and a coarse round trip.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<RunConfig, cyclegraph::Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, std::io::Error> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn generated_potentials(cfg: &RunConfig, norm: f64) -> Result<PotentialSet, cyclegraph::Error> {
    let geometry = cfg.graph_geometry()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x51EE_D5);
    let norms: Vec<f64> = (0..=geometry.m).map(|_| norm * rng.gen_range(0.8..1.2)).collect();
    random_potentials(&geometry, cfg.grids.nodes_per_unit, cfg.seed, &norms)
}

fn obtain_potentials(
    cfg: &RunConfig,
    path: &Option<PathBuf>,
    norm: f64,
    dir: &Path,
) -> Result<PotentialSet, cyclegraph::Error> {
    match path {
        Some(p) => load_potentials(p),
        None => {
            let pots = generated_potentials(cfg, norm)?;
            save_potentials(&pots, &dir.join("potentials.txt"))?;
            println!("generated potentials written to {}", dir.join("potentials.txt").display());
            Ok(pots)
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let cfg = load_config(&cli).map_err(|e| e.to_string())?;
    let dir = out_dir(&cfg).map_err(|e| e.to_string())?;
    match cli.command {
        Command::Forward { potentials, norm } => {
            let pots =
                obtain_potentials(&cfg, &potentials, norm, &dir).map_err(|e| e.to_string())?;
            let fwd = run_forward(&cfg, &pots).map_err(|e| e.to_string())?;
            for w in &fwd.warnings {
                eprintln!("warning: {w}");
            }
            let path = dir.join("dataset.txt");
            fwd.dataset.save(&path).map_err(|e| e.to_string())?;
            println!("dataset written to {}", path.display());
        }
        Command::Perturb { potentials, dataset, epsilon, experimental } => {
            if experimental {
                let ds_path = dataset.ok_or("--experimental requires --dataset")?;
                let ds = SpectralDataset::load(&ds_path).map_err(|e| e.to_string())?;
                let out = run_perturb_experimental(&cfg, &ds, epsilon).map_err(|e| e.to_string())?;
                let path = dir.join("dataset_jittered.txt");
                out.save(&path).map_err(|e| e.to_string())?;
                println!("jittered dataset written to {} (no realizability guarantee)", path.display());
            } else {
                let pots = load_potentials(potentials.as_ref().expect("clap enforces"))
                    .map_err(|e| e.to_string())?;
                let base = run_forward(&cfg, &pots).map_err(|e| e.to_string())?;
                let (pert, fwd) =
                    run_perturb(&cfg, &pots, &base.dataset, epsilon).map_err(|e| e.to_string())?;
                save_potentials(&pert, &dir.join("potentials_perturbed.txt"))
                    .map_err(|e| e.to_string())?;
                fwd.dataset
                    .save(&dir.join("dataset_perturbed.txt"))
                    .map_err(|e| e.to_string())?;
                println!(
                    "perturbed potentials and dataset written to {} (epsilon = {epsilon:.3e})",
                    dir.display()
                );
            }
        }
        Command::Invert { dataset, truth } => {
            let ds = SpectralDataset::load(&dataset).map_err(|e| e.to_string())?;
            let truth_pots = match truth {
                Some(p) => Some(load_potentials(&p).map_err(|e| e.to_string())?),
                None => None,
            };
            let (recovered, report) =
                run_invert(&cfg, &ds, truth_pots.as_ref()).map_err(|e| e.to_string())?;
            save_potentials(&recovered, &dir.join("recovered_potentials.txt"))
                .map_err(|e| e.to_string())?;
            let text = format_invert_report(&report);
            std::fs::write(dir.join("report.txt"), &text).map_err(|e| e.to_string())?;
            print!("{text}");
            println!("recovered potentials written to {}", dir.join("recovered_potentials.txt").display());
        }
        Command::StabilitySweep { potentials, epsilon, norm, uniform_pairs } => {
            let eps: Vec<f64> = epsilon
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad epsilon `{s}`: {e}")))
                .collect::<Result<_, _>>()?;
            let pots =
                obtain_potentials(&cfg, &potentials, norm, &dir).map_err(|e| e.to_string())?;
            let sweep = run_stability_sweep(&cfg, &pots, &eps).map_err(|e| e.to_string())?;
            let m = pots.geometry.m;
            let csv = sweep_csv(&sweep, m);
            std::fs::write(dir.join("sweep.csv"), &csv).map_err(|e| e.to_string())?;
            std::fs::write(dir.join("sweep.svg"), sweep_svg(&sweep, m)).map_err(|e| e.to_string())?;
            let mut report = String::new();
            for j in 0..=m {
                report.push_str(&format!(
                    "edge {j}: log-log slope {:.3}, ratio spread {:.3}\n",
                    sweep.slopes[j], sweep.ratio_spread[j]
                ));
            }
            for r in &sweep.records {
                if let Some(e) = &r.error {
                    report.push_str(&format!("epsilon {:.3e} failed: {e}\n", r.epsilon));
                }
            }
            if let Some(pairs) = uniform_pairs {
                let probe = uniform_probe(&cfg, pairs, 1.0).map_err(|e| e.to_string())?;
                report.push_str(&format!(
                    "uniform probe over {pairs} pairs: max ratio {:.3}, spread {:.3}\n",
                    probe.max_ratio, probe.spread
                ));
            }
            std::fs::write(dir.join("report.txt"), &report).map_err(|e| e.to_string())?;
            print!("{report}");
            println!("sweep outputs written to {}", dir.display());
        }
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
        }
        Command::Selftest => {
            return selftest(&cfg);
        }
    }
    Ok(())
}

/// Coarse end-to-end self-check; prints one line per item.
fn selftest(base: &RunConfig) -> Result<(), String> {
    use num_complex::Complex64;
    use std::f64::consts::PI;

    let mut cfg = base.clone();
    cfg.geometry.m = 1;
    cfg.geometry.lengths = vec![1.0, 1.0];
    cfg.geometry.a = 2.0;
    cfg.grids.nodes_per_unit = 256;
    cfg.contour.n_nodes = 1536;
    cfg.contour.sigma_max = 60.0 * PI;
    cfg.remainders.rho_max = 68.0 * PI;
    cfg.remainders.n_samples = 4097;
    cfg.remainders.kernel_time_nodes = 4096;
    cfg.eigenvalues.rho_max = 12.0 * PI;
    cfg.eigenvalues.n_sigma = 44;
    cfg.riesz.n_modes = 48;
    cfg.inversion.gl_pairs = 24;

    let mut ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{}: {name} — {detail}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    let geometry = cfg.graph_geometry().map_err(|e| e.to_string())?;
    let zero = PotentialSet::zero(&geometry, cfg.grids.nodes_per_unit);
    let cf = cyclegraph::charfn::CharFnSet::new(&zero);
    let v = cf.eval_all(Complex64::new(PI * PI / 4.0, 0.0)).map_err(|e| e.to_string())?;
    let want = -4.0 / PI;
    check(
        "zero-potential characteristic value",
        (v.delta.re - want).abs() < 1e-10,
        format!("Delta((pi/2)^2) = {:.12} vs {want:.12}", v.delta.re),
    );

    let fwd = run_forward(&cfg, &zero).map_err(|e| e.to_string())?;
    let alternating = fwd
        .dataset
        .sigma
        .iter()
        .enumerate()
        .all(|(n, &s)| s == if (n + 1) % 2 == 0 { 1 } else { -1 });
    check("sigma alternation (a = 2, zero loop)", alternating, format!("{} signs", fwd.dataset.sigma.len()));

    let (inv, _) = run_invert(&cfg, &fwd.dataset, Some(&zero)).map_err(|e| e.to_string())?;
    let worst = inv.q.iter().map(|q| q.l2_norm()).fold(0.0f64, f64::max);
    check("zero-data inversion", worst < 1e-4, format!("max ||q_j|| = {worst:.2e}"));

    let pots = generated_potentials(&cfg, 0.3).map_err(|e| e.to_string())?;
    let fwd = run_forward(&cfg, &pots).map_err(|e| e.to_string())?;
    let (inv, report) = run_invert(&cfg, &fwd.dataset, Some(&pots)).map_err(|e| e.to_string())?;
    let _ = inv;
    let errs = report.per_edge_rel_error.unwrap_or_default();
    let worst = errs.iter().cloned().fold(0.0f64, f64::max);
    check("round-trip reconstruction (coarse)", worst < 0.05, format!("per-edge errors {errs:?}"));

    if ok {
        println!("selftest: all checks passed");
        Ok(())
    } else {
        Err("selftest failed".into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cyclegraph::pipeline::{self, perturb_potentials};

    #[test]
    fn epsilon_list_parses() {
        let eps: Vec<f64> =
            "1e-3, 3e-3,1e-2".split(',').map(|s| s.trim().parse().unwrap()).collect();
        assert_eq!(eps.len(), 3);
    }

    #[test]
    fn generated_potentials_respect_geometry() {
        let cfg = RunConfig::default();
        let pots = generated_potentials(&cfg, 0.4).unwrap();
        assert_eq!(pots.q.len(), 3);
        let _ = perturb_potentials(
            &pots,
            &pipeline::bump_family(&pots.geometry, cfg.grids.nodes_per_unit, cfg.seed),
            1e-3,
        )
        .unwrap();
    }
}
