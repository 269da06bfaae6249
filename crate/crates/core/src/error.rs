use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad invocation or configuration value.
    Usage,
    /// Input data failed to load or validate.
    Data,
    /// Anything else, including failures writing outputs.
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Internal => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    // Embedding files and manifests.
    #[error("bad magic bytes: expected \"EMB1\"")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    VersionUnsupported(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("{extra} trailing bytes after checksum")]
    TrailingData { extra: u64 },
    #[error("checksum mismatch ({what}): expected {expected:016x}, computed {computed:016x}")]
    ChecksumMismatch {
        what: &'static str,
        expected: u64,
        computed: u64,
    },
    #[error("row {row} has zero norm")]
    ZeroNormVector { row: usize },
    #[error("row {row} contains a non-finite value")]
    NonFiniteValue { row: usize },
    #[error("embedding dimension is zero")]
    DimensionZero,
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("duplicate id in manifest: {0}")]
    DuplicateId(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    // Labels.
    #[error("no label row for image {0}")]
    MissingLabel(String),
    #[error("unknown race value {0:?}")]
    UnknownRace(String),
    #[error("unknown gender value {0:?}")]
    UnknownGender(String),
    #[error("unknown age band {0:?}")]
    UnknownAgeBand(String),
    #[error("duplicate label row for {0}")]
    DuplicateRow(String),
    #[error("label CSV is missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    // Taxonomy.
    #[error("duplicate role name {0:?}")]
    DuplicateRole(String),
    #[error("empty role name")]
    EmptyRoleName,
    #[error("role {0:?} is not in the taxonomy")]
    UnknownRole(String),
    #[error("role {0:?} has no prompt embedding")]
    MissingPrompt(String),

    // Synthetic corpora.
    #[error("invalid planted shares: {0}")]
    InvalidShares(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
    #[error("a seed is required for synthetic generation")]
    SeedRequired,

    // Retrieval.
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("k = {k} exceeds corpus size {count}")]
    KExceedsCorpus { k: usize, count: usize },
    #[error("k must be at least 1")]
    KZero,

    // Metrics and analysis.
    #[error("category mismatch: {0}")]
    CategoryMismatch(String),
    #[error("KL divergence undefined: q is zero where p is positive (index {0})")]
    UnsupportedZeroDenominator(usize),
    #[error("number of categories must be at least 1")]
    CZero,
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("at least one model is required")]
    EmptyModelSet,
    #[error("threshold {threshold} outside ({lower}, 1]")]
    ThresholdOutOfRange { threshold: f64, lower: f64 },
    #[error("volatility needs at least two models, got {0}")]
    FewerThanTwoModels(usize),

    // Configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed writing {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    At {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("{}, line {line}: {source}", path.display())]
    AtLine {
        path: PathBuf,
        line: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches a file path to an error.
    pub fn at(self, path: impl Into<PathBuf>) -> Error {
        Error::At {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any file/line context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } | Error::AtLine { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short variant name, used in diagnostics tables.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::BadMagic => "BadMagic",
            Error::VersionUnsupported(_) => "VersionUnsupported",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::TrailingData { .. } => "TrailingData",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::ZeroNormVector { .. } => "ZeroNormVector",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::DimensionZero => "DimensionZero",
            Error::ManifestMismatch(_) => "ManifestMismatch",
            Error::DuplicateId(_) => "DuplicateId",
            Error::Json(_) => "Json",
            Error::MissingLabel(_) => "MissingLabel",
            Error::UnknownRace(_) => "UnknownRace",
            Error::UnknownGender(_) => "UnknownGender",
            Error::UnknownAgeBand(_) => "UnknownAgeBand",
            Error::DuplicateRow(_) => "DuplicateRow",
            Error::MissingColumn(_) => "MissingColumn",
            Error::Csv(_) => "Csv",
            Error::DuplicateRole(_) => "DuplicateRole",
            Error::EmptyRoleName => "EmptyRoleName",
            Error::UnknownRole(_) => "UnknownRole",
            Error::MissingPrompt(_) => "MissingPrompt",
            Error::InvalidShares(_) => "InvalidShares",
            Error::InvalidSynthSpec(_) => "InvalidSynthSpec",
            Error::SeedRequired => "SeedRequired",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::KExceedsCorpus { .. } => "KExceedsCorpus",
            Error::KZero => "KZero",
            Error::CategoryMismatch(_) => "CategoryMismatch",
            Error::UnsupportedZeroDenominator(_) => "UnsupportedZeroDenominator",
            Error::CZero => "CZero",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::EmptyModelSet => "EmptyModelSet",
            Error::ThresholdOutOfRange { .. } => "ThresholdOutOfRange",
            Error::FewerThanTwoModels(_) => "FewerThanTwoModels",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Output { .. } => "Output",
            Error::At { .. } | Error::AtLine { .. } => unreachable!("root() strips context"),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self.root() {
            Error::InvalidConfig(_)
            | Error::ThresholdOutOfRange { .. }
            | Error::KZero
            | Error::SeedRequired
            | Error::InvalidSynthSpec(_)
            | Error::InvalidShares(_) => ErrorClass::Usage,
            Error::Output { .. } => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }
}

/// Adds file context to results.
pub(crate) trait ResultExt<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T, E: Into<Error>> ResultExt<T> for std::result::Result<T, E> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| e.into().at(path))
    }
}
