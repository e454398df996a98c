use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unknown vocabulary preset `{0}`")]
    UnknownPreset(String),
    #[error("malformed bit code `{0}`")]
    MalformedCode(String),
    #[error("mixed code widths: expected {expected} bits, found {found}")]
    MixedWidth { expected: usize, found: usize },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("vocabulary has {found} entries, expected {expected}")]
    IncompleteVocabulary { expected: usize, found: usize },
    #[error("bit code {0} assigned twice")]
    DuplicateCode(String),
    #[error("token {0} assigned twice")]
    DuplicateToken(String),
    #[error("line {0}: expected `token=bitcode`")]
    MalformedLine(usize),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("token {0} is not supported by the decoder")]
    UnsupportedToken(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("molecule is invalid")]
    InvalidMolecule,
    #[error("no logP atom class matches {0}")]
    UnsupportedAtomClass(String),
    #[error("gamma > 0 requires a reference fingerprint")]
    MissingReference,
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("loss weights must be nonnegative with a positive sum: {0}")]
    InvalidWeights(String),
    #[error("cannot parse reference molecule: {0}")]
    BadReference(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("{qubits} qubits exceeds the statevector cap of {cap}")]
    TooManyQubits { qubits: usize, cap: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("expected {expected} parameters, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("shots must be at least 1")]
    NoShots,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("objective returned a non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("objective failed: {0}")]
    Objective(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("space of {bits} bits is too large to enumerate (max {max})")]
    SpaceTooLarge { bits: usize, max: usize },
    #[error("reference space does not match the run: {0}")]
    ScopeMismatch(String),
    #[error("fewer than 3 distinct fingerprints")]
    DegenerateCovariance,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    /// Short stable identifier, used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Codec(_) => "codec",
            Error::Decode(_) => "decode",
            Error::Chem(_) => "chem",
            Error::Sampler(SamplerError::TooManyQubits { .. }) => "too_many_qubits",
            Error::Sampler(_) => "sampler",
            Error::Optimizer(OptimizerError::NonFiniteLoss(_)) => "non_finite_loss",
            Error::Optimizer(_) => "optimizer",
            Error::Config(_) => "config",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::SpaceTooLarge { .. } => "space_too_large",
            Error::ScopeMismatch(_) => "scope_mismatch",
            Error::DegenerateCovariance => "degenerate_covariance",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
