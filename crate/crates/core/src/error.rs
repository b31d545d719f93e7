use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One problem found while reading a manifest file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestIssue {
    Parse { line: usize, message: String },
    DuplicateId { line: usize, id: String },
}

impl fmt::Display for ManifestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestIssue::Parse { line, message } => write!(f, "line {line}: {message}"),
            ManifestIssue::DuplicateId { line, id } => {
                write!(f, "line {line}: duplicate sample id {id:?}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {}: {}", path.display(), join_issues(issues))]
    InvalidManifest {
        path: PathBuf,
        issues: Vec<ManifestIssue>,
    },

    #[error("failed to decode image {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },

    #[error("failed to encode image {}: {message}", path.display())]
    Encode { path: PathBuf, message: String },

    #[error("invalid image buffer: {0}")]
    InvalidImage(String),

    #[error("manifest {manifest:?} has {available} samples, {needed} required")]
    InsufficientSamples {
        manifest: String,
        needed: usize,
        available: usize,
    },

    #[error("image is {width}x{height}, at least {min}x{min} required")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("patch size {patch} leaves no patches in a {width}x{height} image")]
    DegenerateGrid {
        width: usize,
        height: usize,
        patch: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample {sample:?} is missing {what}")]
    MissingAnnotation { sample: String, what: &'static str },

    #[error("class {name:?} is not in the vocabulary")]
    UnknownClass { name: String },

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("feature kind mismatch: expected {expected}, model uses {found}")]
    FeatureKindMismatch { expected: &'static str, found: String },

    #[error("training needs at least two distinct classes, found {0}")]
    DegenerateLabels(usize),

    #[error("loss became non-finite at epoch {epoch}; try a lower learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("document {0} is empty")]
    EmptyDocument(usize),

    #[error("dataset {dataset} supplies {available} captions, {needed} required")]
    InsufficientCaptions {
        dataset: usize,
        needed: usize,
        available: usize,
    },

    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("could not parse model response: {0}")]
    Format(String),

    #[error("report has no {0} block")]
    MissingBlock(&'static str),

    #[error("unsupported report format version {0:?}")]
    UnsupportedVersion(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn join_issues(issues: &[ManifestIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidManifest { .. }
                | Error::InvalidConfig(_)
                | Error::InsufficientSamples { .. }
                | Error::InsufficientCaptions { .. }
                | Error::UnknownClass { .. }
                | Error::VocabularyMismatch(_)
                | Error::MissingAnnotation { .. }
                | Error::UnsupportedVersion(_)
                | Error::MissingBlock(_)
                | Error::DegenerateLabels(_)
                | Error::FeatureKindMismatch { .. }
        )
    }
}
