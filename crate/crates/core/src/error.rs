use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value is outside its admissible range.
    InvalidArgument(String),
    /// Kernel coefficients violate a structural requirement (negative
    /// probability, non-positive welfare weight, inconsistent overlap).
    Construction(String),
    /// The weighted welfare mass `sum_j w_j x_j` vanished.
    NumericalDomain(String),
    /// A state left the simplex during integration; reduce the step size.
    StepSize {
        time: f64,
        min_fraction: f64,
        mass_drift: f64,
    },
    /// The residual did not fall below tolerance before `max_time`.
    NonConvergence { time: f64, residual: f64 },
    /// Input admits no meaningful value (zero total income, constant abscissa).
    DegenerateInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Construction(msg) => write!(f, "kernel construction failed: {msg}"),
            Error::NumericalDomain(msg) => write!(f, "numerical domain error: {msg}"),
            Error::StepSize {
                time,
                min_fraction,
                mass_drift,
            } => write!(
                f,
                "state left the simplex at t = {time} (min fraction {min_fraction:e}, mass drift {mass_drift:e}); reduce dt"
            ),
            Error::NonConvergence { time, residual } => write!(
                f,
                "no equilibrium reached by t = {time}; last residual {residual:e}"
            ),
            Error::DegenerateInput(msg) => write!(f, "degenerate input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
