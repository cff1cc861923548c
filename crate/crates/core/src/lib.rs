pub mod corpus;
pub mod diffkit;
pub mod ekg;
pub mod embed;
mod error;
pub mod gradsuite;
pub mod graph2seq;
pub mod metrics;
pub mod pipeline;

pub use error::{Error, Result};
