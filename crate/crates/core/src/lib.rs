pub mod bounds;
pub mod cli;
pub mod control_metric;
pub mod error;
pub mod geometry;
pub mod mc;
pub mod model;
pub mod norms;
pub mod parallel;
pub mod skeleton;
pub mod taylor;

pub use error::{Error, Result};
pub use geometry::{Matrix2, Point2};
