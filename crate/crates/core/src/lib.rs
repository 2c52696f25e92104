pub mod cli;
pub mod error;
pub mod evaluator;
pub mod gradsuite;
pub mod io;
pub mod layers;
pub mod relnet;
pub mod reranker;
pub mod seed;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
