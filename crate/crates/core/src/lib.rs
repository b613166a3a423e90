//! Classify sentences by the simplification strategy they need, explain the
//! classifier with Integrated Gradients, and compare attributed complex words
//! with the words removed in Easy-to-Read rewrites.

pub mod alignment;
pub mod attribution;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod task;
pub mod taxonomy;
pub mod text;
pub mod training;

pub use error::{Error, Result};
