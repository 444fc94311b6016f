pub mod boundary;
pub mod degree;
pub mod error;
pub mod fundamental;
pub mod linalg;
pub mod morse;
pub mod oracle;
pub mod planar;
pub mod problem;
pub mod turing;

pub use error::{Error, Result};
pub use problem::{
    default_strip_height, validate, BoundaryCondition, BoundaryPreset, CoefficientField, PathKind, ProblemSpec,
    Rectangle,
};
