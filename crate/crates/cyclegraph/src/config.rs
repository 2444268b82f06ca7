//! Run configuration: geometry, grid resolutions, contour and Riesz
//! parameters, scan windows, tolerances, seed, output directory.
//! Serialized as TOML; `RunConfig::default()` is the documented baseline
//! (printed by the `defaults` subcommand).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GraphGeometry;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub m: usize,
    pub a: f64,
    pub lengths: Vec<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        // smallest case exercising the nontrivial product/Kirchhoff
        // structure and the loop
        GeometryConfig { m: 2, a: 2.0, lengths: vec![1.0, 1.0, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridsConfig {
    /// Grid intervals per unit length (513 nodes on a unit edge).
    pub nodes_per_unit: usize,
    /// Integrator substeps per grid interval.
    pub steps_per_interval: usize,
}

impl Default for GridsConfig {
    fn default() -> Self {
        GridsConfig { nodes_per_unit: 512, steps_per_interval: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ContourConfig {
    /// `tau = sqrt(max(0, -lambda_floor)) + tau_margin`, with the floor
    /// read off the dataset spectra (clamped below by `tau_min`).
    pub tau_margin: f64,
    pub tau_min: f64,
    pub sigma_max: f64,
    pub n_nodes: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig { tau_margin: 1.5, tau_min: 1.5, sigma_max: 100.0 * PI, n_nodes: 4096 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RieszConfig {
    pub alpha: f64,
    pub n_modes: usize,
    pub retries: usize,
    pub min_e: f64,
}

impl Default for RieszConfig {
    fn default() -> Self {
        RieszConfig { alpha: 1.0, n_modes: 64, retries: 4, min_e: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RemaindersConfig {
    /// Truncation radius of the sampled remainder band (recorded in the
    /// dataset); must exceed both `contour.sigma_max` and
    /// `pi * riesz.n_modes` with margin.
    pub rho_max: f64,
    pub n_samples: usize,
    /// Time-grid nodes of the Paley-Wiener kernel used for continuation.
    pub kernel_time_nodes: usize,
}

impl Default for RemaindersConfig {
    fn default() -> Self {
        RemaindersConfig { rho_max: 108.0 * PI, n_samples: 9601, kernel_time_nodes: 8192 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenConfig {
    /// Stored spectra cover `lambda <= rho_max^2`.
    pub rho_max: f64,
    /// Scan oversampling relative to the mean zero spacing `pi / sum T_j`.
    pub scan_oversample: usize,
    /// Number of loop Dirichlet signs stored.
    pub n_sigma: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig { rho_max: 20.0 * PI, scan_oversample: 10, n_sigma: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    /// Dirichlet pairs used in the loop reconstruction.
    pub gl_pairs: usize,
    /// Asymptotic-tail modes appended to the loop GL series.
    pub tail_extend: usize,
    pub cond_limit: f64,
    /// Recenter recovered potentials to mean zero.
    pub recenter: bool,
    /// Run the sigma-condition verification forward pass after inversion.
    pub verify_sigma: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            gl_pairs: 40,
            tail_extend: 2048,
            cond_limit: 1e8,
            recenter: true,
            verify_sigma: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    pub refinement_tol: f64,
    pub sigma_zero_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig { refinement_tol: 1e-12, sigma_zero_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub grids: GridsConfig,
    pub contour: ContourConfig,
    pub riesz: RieszConfig,
    pub remainders: RemaindersConfig,
    pub eigenvalues: EigenConfig,
    pub inversion: InversionConfig,
    pub tolerances: ToleranceConfig,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig::default(),
            grids: GridsConfig::default(),
            contour: ContourConfig::default(),
            riesz: RieszConfig::default(),
            remainders: RemaindersConfig::default(),
            eigenvalues: EigenConfig::default(),
            inversion: InversionConfig::default(),
            tolerances: ToleranceConfig::default(),
            seed: 17,
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn graph_geometry(&self) -> Result<GraphGeometry> {
        GraphGeometry::new(self.geometry.m, self.geometry.lengths.clone(), self.geometry.a)
    }

    pub fn validate(&self) -> Result<()> {
        self.graph_geometry()?;
        if self.grids.nodes_per_unit < 64 {
            return Err(Error::Validation("nodes_per_unit must be at least 64".into()));
        }
        if self.grids.steps_per_interval < 1 {
            return Err(Error::Validation("steps_per_interval must be at least 1".into()));
        }
        if self.contour.n_nodes < 128 || self.remainders.n_samples < 128 {
            return Err(Error::Validation("contour/remainder resolutions are below the minimum".into()));
        }
        let needed = self
            .contour
            .sigma_max
            .max(PI * self.riesz.n_modes as f64)
            + 4.0 * PI;
        if self.remainders.rho_max < needed {
            return Err(Error::Validation(format!(
                "remainders.rho_max = {:.1} must exceed max(sigma_max, pi*n_modes) + 4pi = {:.1}",
                self.remainders.rho_max, needed
            )));
        }
        for v in [
            self.contour.tau_margin,
            self.contour.tau_min,
            self.riesz.alpha,
            self.riesz.min_e,
            self.tolerances.refinement_tol,
            self.tolerances.sigma_zero_tol,
            self.inversion.cond_limit,
        ] {
            if !(v > 0.0) {
                return Err(Error::Validation("tolerances and margins must be positive".into()));
            }
        }
        if self.eigenvalues.n_sigma < self.inversion.gl_pairs {
            return Err(Error::Validation(format!(
                "n_sigma = {} must cover the {} loop GL pairs",
                self.eigenvalues.n_sigma, self.inversion.gl_pairs
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            field: "config".into(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
