pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fda;
pub mod graphmodel;
pub mod linalg;
pub mod monitor;
pub mod seeding;
pub mod simgen;

pub use error::{MpcError, Result};
