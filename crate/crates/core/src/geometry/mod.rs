//! Shapes, their graphs, sampling, and synthetic deformations.

mod augment;
mod generate;
mod graph;
mod sampling;
mod shape;

pub use augment::{augment, axis_angle, AugmentConfig, AugmentParams, Mat3, RotationSampling, DEFAULT_MAX_ROTATION, IDENTITY3};
pub use generate::{bend, bent_cylinder_pair, cylinder, euler_counts, icosphere, noisy_copy, standard_noise};
pub use graph::{knn_graph, mesh_graph, Edge, GeoGraph};
pub use sampling::fps;
pub use shape::{cross, distance, norm, sub, Face, Point, Shape, ShapeFormat};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("index error: {0}")]
    Index(String),
    #[error("shape has no vertices")]
    EmptyVertexSet,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("face {0} repeats a vertex")]
    DegenerateFace(usize),
    #[error("io: {0}")]
    Io(String),
}
