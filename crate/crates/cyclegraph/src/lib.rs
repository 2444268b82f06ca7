//! Direct and inverse Sturm-Liouville problems on a graph with one cycle.
//!
//! The graph is a loop attached to an internal vertex with `m` pendant
//! edges. The library computes characteristic functions and spectral data
//! of the coupled problem (forward direction), and reconstructs all edge
//! potentials from that data (inverse direction) in three steps: a
//! Gelfand-Levitan-type equation per pendant edge, a Cramer/Riesz-basis
//! transition through the internal vertex, and a quasiperiodic inversion
//! on the loop. Harnesses measure the local and uniform stability of the
//! reconstruction empirically.

pub mod boundary;
pub mod charfn;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod gl;
pub mod grid;
pub mod loopinv;
pub mod ode;
pub mod pipeline;
pub mod pw;
pub mod vertex;
pub mod zeros;

pub use error::{Error, Result};
pub use geometry::GraphGeometry;
pub use grid::{project_mean_zero, GridFunction, PotentialSet};
