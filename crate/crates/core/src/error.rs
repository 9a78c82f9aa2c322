use thiserror::Error;

/// Errors raised by the model, solvers and file formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument is outside its admissible domain.
    #[error("domain error in `{field}`: {reason}")]
    Domain { field: String, reason: String },

    /// Out-of-range value such as a state of charge outside [0, 100].
    #[error("`{what}` = {value} is outside [{min}, {max}]")]
    Range {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A surface stoichiometry left the open interval guarded by the kinetics.
    #[error("stoichiometry guard breached at t = {time} s in {location}: c = {value}")]
    StoichiometryGuard {
        time: f64,
        location: String,
        value: f64,
    },

    /// The shifted system matrix could not be factored.
    #[error("singular factorization at omega = {omega} rad/s (soc = {soc:?})")]
    SingularSystem { omega: f64, soc: Option<f64> },

    /// Newton iterations or step-size control failed.
    #[error("integration failed at t = {time} s: {reason}")]
    Integration { time: f64, reason: String },

    /// A Fourier projection window does not span whole periods.
    #[error("spectral leakage: window holds {periods} periods, expected an integer")]
    Leakage { periods: f64 },

    /// The charge-transfer arc is not resolved by the spectrum.
    #[error("charge-transfer arc not resolved: {0}")]
    ArcNotResolved(String),

    /// Malformed input file.
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    /// Mismatched datasets or grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Unknown parameter name.
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub(crate) fn domain(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::SingularSystem { .. }
            | Error::Integration { .. }
            | Error::StoichiometryGuard { .. }
            | Error::ArcNotResolved(_)
            | Error::Leakage { .. } => ErrorCategory::Numerical,
            Error::Parse { .. } | Error::Io { .. } | Error::GridMismatch(_) => ErrorCategory::Io,
            Error::Domain { .. } | Error::Range { .. } | Error::UnknownParameter(_) => {
                ErrorCategory::Usage
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Numerical,
    Usage,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Numerical => 1,
            ErrorCategory::Usage => 2,
            ErrorCategory::Io => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Usage => "usage",
            ErrorCategory::Io => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
