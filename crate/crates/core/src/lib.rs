pub mod bem;
pub mod case;
pub mod config;
pub mod coupling;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod post;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
