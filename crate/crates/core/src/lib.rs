pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fsutil;
pub mod inference;
pub mod lstm;
pub mod nn;
pub mod probe;
pub mod rnng;
pub mod train;

pub use error::{Error, Result};
