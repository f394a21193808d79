use thiserror::Error;

/// A single violated invariant, with the field it names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Spec validation failed; every violated invariant is listed.
    #[error("invalid chart spec: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("dimensionality mismatch: expected {expected} coordinates, got {got}")]
    Dimensionality { expected: usize, got: usize },

    #[error("pyramid factor {factor} yields a zero-dimension image")]
    DegeneratePyramidLevel { factor: f64 },

    #[error("no element record for target category {0:?}")]
    MissingTargetElement(String),

    #[error("AOI rectangle {0:?} lies outside the saliency map bounds")]
    AoiOutOfBounds(String),

    #[error("render has no foreground pixels; colour preference is undefined")]
    EmptyForeground,

    #[error("chart has no labels; text legibility is undefined")]
    NoLabels,

    #[error("gram matrix is singular even after jitter escalation to {max_jitter}")]
    SingularGram { max_jitter: f64 },

    #[error("cannot fit surrogate: {0}")]
    Surrogate(String),

    #[error("{path}: {message}")]
    Ingest { path: String, message: String },

    #[error("saliency map size {got_w}x{got_h} does not match render size {want_w}x{want_h}")]
    SaliencySize {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("malformed WAVE table: {0}")]
    WaveTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
