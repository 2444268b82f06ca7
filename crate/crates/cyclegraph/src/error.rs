use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid grid function: {0}")]
    Grid(String),

    #[error("parse error at line {line}, field `{field}`: {msg}")]
    Parse { line: usize, field: String, msg: String },

    #[error("dataset validation failed: {0}")]
    Validation(String),

    #[error("overflow guard: |Im rho|*T = {budget:.3} exceeds the {limit} budget")]
    Overflow { budget: f64, limit: f64 },

    #[error("contour too low: |Delta| = {value:.3e} < {threshold:.3e} at node {node} (rho = {rho})")]
    ContourTooLow { node: usize, rho: String, value: f64, threshold: f64 },

    #[error("perturbation too large for local regime: condition estimate {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("data inconsistency: {0}")]
    DataInconsistency(String),

    #[error("data not realizable: {0}")]
    NotRealizable(String),

    #[error("node collides with pendant Dirichlet zero: min |E| = {min_e:.3e} at node n = {node}")]
    NodeCollision { node: i64, min_e: f64 },

    #[error("zero search failed: {0}")]
    ZeroSearch(String),

    #[error("sign flip detected: {0}; epsilon too large for sign preservation")]
    SignFlip(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a pipeline step label to an error.
    pub fn in_step(self, step: &'static str) -> Self {
        Error::Step { step, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attach a pipeline step label to the error side of a result.
pub trait StepContext<T> {
    fn in_step(self, step: &'static str) -> Result<T>;
}

impl<T> StepContext<T> for Result<T> {
    fn in_step(self, step: &'static str) -> Result<T> {
        self.map_err(|e| e.in_step(step))
    }
}
