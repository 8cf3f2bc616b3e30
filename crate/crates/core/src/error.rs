use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use crate::grid::State;

/// Standing assumption on the coefficient family that a specification violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// λ ∈ (1, 2] and α ∈ [max{1/2, λ-1}, λ/2].
    ExponentRange,
    /// B ≥ 0 with unit first moment ∫ z B(z) dz = 1.
    DaughterMass,
    /// Small-size compatibility -ν-1 < α between kernel and daughter singularity.
    SmallSizeCompatibility,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::ExponentRange => "exponent range",
            Assumption::DaughterMass => "daughter mass normalization",
            Assumption::SmallSizeCompatibility => "small-size compatibility",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub enum Error {
    AssumptionViolation {
        assumption: Assumption,
        detail: String,
    },
    /// A scalar argument is outside the domain of the operation.
    Domain(String),
    /// `(m, p)` lies outside the admissible set, so the fragmentation moment diverges.
    NotInAdmissibleSet {
        m: f64,
        p: f64,
    },
    Quadrature(String),
    StepTooSmall {
        t: f64,
        dt: f64,
    },
    /// The state became non-finite; carries the last finite state.
    NonFinite {
        t: f64,
        last_state: Box<State>,
    },
    InsufficientRuns {
        needed: usize,
        got: usize,
    },
    GridMismatch,
    MissingMoment(f64),
    MissingSnapshots,
    ResourceCap(String),
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::AssumptionViolation { assumption, detail } => {
                write!(f, "assumption violation ({assumption}): {detail}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::NotInAdmissibleSet { m, p } => write!(
                f,
                "fragmentation moment diverges: (m, p) = ({m}, {p}) is not admissible"
            ),
            Error::Quadrature(msg) => write!(f, "quadrature failure: {msg}"),
            Error::StepTooSmall { t, dt } => {
                write!(f, "step size {dt:e} fell below the minimum at t = {t}")
            }
            Error::NonFinite { t, .. } => write!(f, "non-finite state encountered after t = {t}"),
            Error::InsufficientRuns { needed, got } => {
                write!(f, "insufficient runs: need at least {needed}, got {got}")
            }
            Error::GridMismatch => f.write_str("trajectories live on different grids"),
            Error::MissingMoment(m) => write!(f, "moment of order {m} was not tracked"),
            Error::MissingSnapshots => f.write_str("time series carries too few snapshots"),
            Error::ResourceCap(msg) => write!(f, "resource cap exceeded: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
