pub mod error;
pub mod eval;
pub mod index;
pub mod inductive;
pub mod ingest;
pub mod kg;
pub mod kge;
pub mod snapshot;
mod sgns;
pub mod store;
pub mod text;

pub use error::{Error, Result};
