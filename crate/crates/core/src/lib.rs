//! Tag knowledge maintenance, logic-graph exploration and a tag-augmented
//! sequential recommender, with an evaluation harness.

pub mod coverset;
pub mod error;
pub mod inference;
pub mod eval;
pub mod knowledge;
pub mod logic;
pub mod providers;
pub mod recommender;
pub mod util;

pub use error::{Error, Result};
