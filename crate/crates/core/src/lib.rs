pub mod autotune;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod operators;
pub mod oracles;
pub mod prox;
pub mod risk;
pub mod solvers;
pub mod st_analytics;

pub use error::{Error, Result};
pub use linalg::Vector;
