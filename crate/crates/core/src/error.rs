use thiserror::Error;

/// Errors raised by the model, propagators and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model validity: {0}")]
    ModelValidity(String),

    #[error("near-degenerate eigenvalues (gap {gap:.3e} rad/s below {threshold:.3e} rad/s); refine the control step")]
    NearDegeneracy { gap: f64, threshold: f64 },

    #[error("time step {dt:.3e} s too coarse: stiffness·dt = {product:.3e} exceeds {limit}; use dt ≤ {required_dt:.3e} s")]
    StepSize {
        dt: f64,
        product: f64,
        limit: f64,
        required_dt: f64,
    },

    #[error("invariant violated: {what} = {value:.3e} exceeds {limit:.1e}")]
    Invariant { what: String, value: f64, limit: f64 },

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("root bracketing failed: no sign change of {what} on [{lo_ghz:.4}, {hi_ghz:.4}] GHz")]
    Bracket {
        what: String,
        lo_ghz: f64,
        hi_ghz: f64,
    },

    #[error("monotonicity violated at iteration {iteration}: J rose from {previous:.6e} to {current:.6e}; increase lambda")]
    Monotonicity {
        iteration: usize,
        previous: f64,
        current: f64,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearDegeneracy { .. } | Error::StepSize { .. } | Error::Invariant { .. } | Error::Monotonicity { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
