use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the wound measurement library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex index {index} out of range (vertex count {count})")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("non-manifold edge ({0}, {1}) shared by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("face set is empty")]
    EmptyFaceSet,
    #[error("open boundary chain: dangling vertex {vertex}")]
    OpenBoundary { vertex: usize },
    #[error("label field has {labels} entries but mesh has {faces} faces")]
    LabelCountMismatch { labels: usize, faces: usize },

    #[error("invalid camera '{view}': {reason}")]
    InvalidCamera { view: String, reason: String },
    #[error("degenerate view ray: face {face} barycenter coincides with camera center")]
    DegenerateRay { face: usize },
    #[error("triangulation needs at least 2 observations, got {0}")]
    InsufficientObservations(usize),
    #[error("triangulation is rank deficient (rays parallel or views coincide)")]
    RankDeficient,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid label id {0}")]
    InvalidLabel(u8),
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("duplicate site ({x}, {y}) with conflicting heights; use a positive smoothing parameter")]
    DuplicateSite { x: f64, y: f64 },
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no perimeter pair satisfies the width angle constraint; increase eps_angle (currently {0})")]
    NoWidthPair(f64),
    #[error("smoothing budget {alpha} exceeds loop variance {limit}")]
    SmoothingTooLarge { alpha: f64, limit: f64 },
    #[error("no wound faces")]
    NoWoundFaces,
    #[error("zero wound bed area")]
    ZeroWoundArea,

    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("marker {marker}: {reason}")]
    Marker { marker: u32, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible scene spec: {0}")]
    InfeasibleSpec(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("unsupported report schema version {0}")]
    SchemaVersion(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {reason}")]
    Image { path: PathBuf, reason: String },
}

impl Error {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyMesh => "empty_mesh",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NonManifoldEdge(..) => "non_manifold_edge",
            Error::EmptyFaceSet => "empty_face_set",
            Error::OpenBoundary { .. } => "open_boundary",
            Error::LabelCountMismatch { .. } => "label_count_mismatch",
            Error::InvalidCamera { .. } => "invalid_camera",
            Error::DegenerateRay { .. } => "degenerate_ray",
            Error::InsufficientObservations(_) => "insufficient_observations",
            Error::RankDeficient => "rank_deficient",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidLabel(_) => "invalid_label",
            Error::NotUnit(_) => "not_unit",
            Error::Degenerate(_) => "degenerate",
            Error::DuplicateSite { .. } => "duplicate_site",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::NoWidthPair(_) => "no_width_pair",
            Error::SmoothingTooLarge { .. } => "smoothing_too_large",
            Error::NoWoundFaces => "no_wound_faces",
            Error::ZeroWoundArea => "zero_wound_area",
            Error::NonPositiveScale(_) => "non_positive_scale",
            Error::Marker { .. } => "marker",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InfeasibleSpec(_) => "infeasible_spec",
            Error::Parse { .. } => "parse",
            Error::SchemaVersion(_) => "schema_version",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
