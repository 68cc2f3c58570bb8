use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unsupported element type {0} (only 4-node tetrahedra are accepted)")]
    UnsupportedElement(i64),

    #[error("tetrahedron {0} is degenerate (zero volume)")]
    DegenerateTet(usize),

    #[error("face shared by {count} tetrahedra (non-manifold) at nodes {nodes:?}")]
    NonManifold { nodes: [usize; 3], count: usize },

    #[error("boundary edge {nodes:?} has {count} adjacent triangles or inconsistent orientation")]
    NonManifoldEdge { nodes: [usize; 2], count: usize },

    #[error("no relative permeability given for region tag {0}")]
    MissingMaterial(i64),

    #[error("invalid material for region tag {tag}: {msg}")]
    InvalidMaterial { tag: i64, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("surface edge ({0}, {1}) has no matching volume edge")]
    MissingVolumeEdge(usize, usize),

    #[error("degenerate boundary triangle {0} (zero area)")]
    DegenerateTriangle(usize),

    #[error("evaluation point {index} is too close to the boundary (distance {distance:.3e}, local mesh size {size:.3e})")]
    NearField { index: usize, distance: f64, size: f64 },

    #[error("evaluation point {0} lies inside the solid domain")]
    InteriorPoint(usize),

    #[error("invalid cycle: {0}")]
    InvalidCycle(String),

    #[error("cycle bounds a surface patch (trivial homology); its current sheet is a surface curl")]
    TrivialHomology,

    #[error("current sheets are linearly dependent (singular H block)")]
    SingularSheets,

    #[error("invalid rigid motion: {0}")]
    InvalidMotion(String),

    #[error("component {moved} intersects component {other} after the motion")]
    Contact { moved: usize, other: usize },

    #[error("MINRES did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("MINRES breakdown at iteration {0}: {1}")]
    Breakdown(usize, String),

    #[error("preconditioner is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("boundary has {0} edges; dense boundary blocks are limited to {1}")]
    TooLarge(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
