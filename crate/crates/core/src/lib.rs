pub mod energy;
pub mod error;
pub mod geometry;
pub mod homogenize;
pub mod mesh;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
