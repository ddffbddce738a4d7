use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates an invariant. `path` names the offending
    /// entry (config path or argument name).
    #[error("invalid `{path}`: {reason}")]
    Invalid { path: String, reason: String },

    #[error("config parse error: {0}")]
    Config(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("simulation did not settle within {t_max} s (residual {residual:.3e})")]
    NotSettled { t_max: f64, residual: f64 },

    #[error("jacobian is singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },

    /// A run blew up. `trace_prefix` holds the samples recorded before the
    /// abort when the failing run was recording a trace.
    #[error("numerical divergence at t = {t:.6} s: {detail}")]
    Diverged {
        t: f64,
        detail: String,
        trace_prefix: Option<Box<crate::sim::Trace>>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::NoConvergence { .. }
                | Self::NotSettled { .. }
                | Self::SingularJacobian { .. }
                | Self::Diverged { .. }
        )
    }
}
