use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no admissible smoothing parameter: jacobian {jac_min:.3e} < {threshold:.3e} at node (x index {ix}, z index {iz}) for the smallest trial value")]
    NoAdmissibleDelta {
        jac_min: f64,
        threshold: f64,
        ix: usize,
        iz: usize,
    },

    #[error("flattening jacobian {jac_min:.3e} below threshold {threshold:.3e} at node (x index {ix}, z index {iz})")]
    Jacobian {
        jac_min: f64,
        threshold: f64,
        ix: usize,
        iz: usize,
    },

    #[error("elliptic solver did not converge after {iterations} iterations (last relative residual {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    SolverDiverged {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("variational bound violated: gradient norm {gradient:.6e} exceeds {bound:.6e}")]
    VariationalBound { gradient: f64, bound: f64 },

    #[error("tangency violated: boundary normal velocity {residual:.3e} exceeds {limit:.3e}")]
    Tangency { residual: f64, limit: f64 },

    #[error("stability lost: {0}")]
    Stability(String),

    #[error("step failed after {retries} retries at t = {t}: {reason}")]
    StepFailed { t: f64, retries: usize, reason: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("checkpoint error at byte offset {offset}: {message}")]
    Checkpoint { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from user-provided configuration rather
    /// than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
