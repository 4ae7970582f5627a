use thiserror::Error;

/// Errors raised by form construction, linear algebra and simulation.
///
/// Variants are split into input-validation failures and numerical failures
/// (see [`Error::is_numerical`]); the CLI maps them onto different exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric at ({row}, {col}): {value} vs {mirror}")]
    NotSymmetric {
        row: usize,
        col: usize,
        value: f64,
        mirror: f64,
    },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("form is not Markov: {0}")]
    NotMarkov(String),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("singular interior block: vertices {component:?} are disconnected from the subset and carry no killing")]
    SingularInterior { component: Vec<usize> },

    #[error("ill-conditioned interior block: reciprocal condition estimate {rcond:e}")]
    IllConditioned { rcond: f64 },

    #[error("effective resistance requires a conservative form (vertex {vertex} has killing {killing})")]
    KillingPresent { vertex: usize, killing: f64 },

    #[error("infinite resistance: vertices {x} and {y} are not connected")]
    InfiniteResistance { x: usize, y: usize },

    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("vertices must be distinct, got {0} twice")]
    SameVertex(usize),

    #[error("zero energy: the ratio is undefined")]
    ZeroEnergy,

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),

    #[error("function is not constant on class {class} (points {a} and {b})")]
    NotClassConstant { class: usize, a: usize, b: usize },

    #[error("form does not descend to the quotient: classes ({c}, {d}) give {direct} directly and {quotient} on the quotient")]
    DescentFailure {
        c: usize,
        d: usize,
        direct: f64,
        quotient: f64,
    },

    #[error("negative energy mass {mass} at vertex {vertex}")]
    NegativeMass { vertex: usize, mass: f64 },

    #[error("energy measure cross-check failed at vertex {vertex}: closed form {closed} vs identity {identity}")]
    EnergyCrossCheck {
        vertex: usize,
        closed: f64,
        identity: f64,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("vertex {0} has zero mass; the process needs an everywhere positive measure")]
    ZeroMass(usize),

    #[error("target unreachable from vertex {from}")]
    Unreachable { from: usize },

    #[error("chain is reducible: components {0:?}")]
    Reducible(Vec<Vec<usize>>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics (singular solves, tolerance breaches,
    /// infinite resistance) as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularInterior { .. }
                | Error::IllConditioned { .. }
                | Error::InfiniteResistance { .. }
                | Error::ZeroEnergy
                | Error::DescentFailure { .. }
                | Error::NegativeMass { .. }
                | Error::EnergyCrossCheck { .. }
                | Error::Unreachable { .. }
                | Error::Reducible(_)
        )
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidNetwork(_) => "invalid_network",
            Error::NotSquare { .. } => "not_square",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NonFinite(_) => "non_finite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotMarkov(_) => "not_markov",
            Error::InvalidSubset(_) => "invalid_subset",
            Error::SingularInterior { .. } => "singular_interior",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::KillingPresent { .. } => "killing_present",
            Error::InfiniteResistance { .. } => "infinite_resistance",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::SameVertex(_) => "same_vertex",
            Error::ZeroEnergy => "zero_energy",
            Error::InvalidDecomposition(_) => "invalid_decomposition",
            Error::InvalidSequence(_) => "invalid_sequence",
            Error::InvalidAlgebra(_) => "invalid_algebra",
            Error::NotClassConstant { .. } => "not_class_constant",
            Error::DescentFailure { .. } => "descent_failure",
            Error::NegativeMass { .. } => "negative_mass",
            Error::EnergyCrossCheck { .. } => "energy_cross_check",
            Error::InvalidMeasure(_) => "invalid_measure",
            Error::ZeroMass(_) => "zero_mass",
            Error::Unreachable { .. } => "unreachable",
            Error::Reducible(_) => "reducible",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
