use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of a constructor or operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was invoked without its documented precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A weight exponent at or below -1 makes the integral diverge.
    #[error("divergent integral: endpoint exponent {exponent} <= -1")]
    DivergentIntegral { exponent: f64 },

    /// Non-finite value met while integrating.
    #[error("numeric error: {what}{}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Numeric {
        what: String,
        location: Option<String>,
    },

    /// Requested series order exceeds the recursion plan.
    #[error("plan violation: order {requested} exceeds plan maximum {max}")]
    PlanViolation { requested: usize, max: usize },

    /// No admissible control pair (eta < 1) is available.
    #[error("no certificate: {0}")]
    NoCertificate(String),

    /// All kernel values on the grid vanish.
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    /// A function with unbounded support came without a decay bound.
    #[error("cannot truncate: {0}")]
    CannotTruncate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(what: impl Into<String>) -> Self {
        Error::Numeric {
            what: what.into(),
            location: None,
        }
    }

    pub(crate) fn numeric_at(what: impl Into<String>, location: impl Into<String>) -> Self {
        Error::Numeric {
            what: what.into(),
            location: Some(location.into()),
        }
    }

    /// Attaches (or prefixes) a location to numeric errors; other errors pass through.
    pub(crate) fn located(self, location: impl Into<String>) -> Self {
        match self {
            Error::Numeric { what, location: inner } => {
                let outer = location.into();
                let loc = match inner {
                    Some(l) => format!("{outer}; {l}"),
                    None => outer,
                };
                Error::Numeric {
                    what,
                    location: Some(loc),
                }
            }
            other => other,
        }
    }
}
