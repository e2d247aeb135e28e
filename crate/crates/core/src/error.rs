use thiserror::Error;

/// Errors produced anywhere in the triangulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud needs at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },

    #[error("duplicate input points at indices {}", format_groups(.0))]
    DuplicatePoints(Vec<Vec<usize>>),

    #[error("nearest neighbour of point {point} is at distance zero")]
    DegeneratePatch { point: usize },

    #[error("degenerate triangle (normalized area {normalized_area:e})")]
    DegenerateTriangle { normalized_area: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("batch contains no positive anchor cells")]
    NoPositives,

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: u64, detail: String },

    #[error("parameter `{0}` became non-finite")]
    NonFiniteParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("parse error at byte offset {offset}: {message}")]
    ParseBinary { offset: u64, message: String },

    #[error("face {face} references vertex {index}, but only {count} vertices exist")]
    IndexOutOfRange { face: usize, index: i64, count: usize },

    #[error("format mismatch: {0}")]
    FormatMismatch(String),

    #[error("mesh has no faces with positive area")]
    EmptyMesh,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_groups(groups: &[Vec<usize>]) -> String {
    groups
        .iter()
        .map(|g| {
            let items: Vec<String> = g.iter().map(usize::to_string).collect();
            format!("[{}]", items.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
