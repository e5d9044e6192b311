pub mod bench;
pub mod cpd;
pub mod discovery;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod rank_tests;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
