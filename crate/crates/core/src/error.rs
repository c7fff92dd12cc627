use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("undistortion did not converge at normalized radius {radius:.6}")]
    UndistortDiverged { radius: f64 },

    #[error("missing layers: {0:?}")]
    MissingLayers(Vec<usize>),

    #[error("missing field `{0}` in telemetry record")]
    MissingField(String),

    #[error("part {part} footprint [{x0}, {x1}) x [{y0}, {y1}) x [{z0}, {z1}) exceeds bed {bed_w} x {bed_h} x {layers}")]
    OutOfBed {
        part: String,
        x0: i64,
        x1: i64,
        y0: i64,
        y1: i64,
        z0: i64,
        z1: i64,
        bed_w: usize,
        bed_h: usize,
        layers: usize,
    },

    #[error("parts {0} and {1} overlap")]
    Overlap(String, String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("missing upstream artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("hash mismatch for {path}: expected {expected}, found {found}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("normalization statistics mismatch: checkpoint expects manifest {expected}, inputs carry {found}")]
    StatsMismatch { expected: String, found: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
