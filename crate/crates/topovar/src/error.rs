use thiserror::Error;

/// Errors shared across the crate. Variants carry enough context to point at
/// the offending axis, node, or quantity.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("axis {axis} has {count} nodes; at least {min} are required for the stencils")]
    StencilWidth { axis: usize, count: usize, min: usize },

    #[error("metric is degenerate at node {node} (|det| = {det:.3e} < floor {floor:.3e})")]
    Degenerate { node: usize, det: f64, floor: f64 },

    #[error("signature violation at node {node}: expected ({expected_neg},{expected_pos}), found ({found_neg},{found_pos})")]
    Signature {
        node: usize,
        expected_neg: usize,
        expected_pos: usize,
        found_neg: usize,
        found_pos: usize,
    },

    #[error("support error: {0}")]
    Support(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    #[error("amplitude error: {0}")]
    Amplitude(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
