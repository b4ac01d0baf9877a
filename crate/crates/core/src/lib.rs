//! Content-based movie recommendation from learned entity embeddings.
//!
//! A rating network embeds the user, the movie and the movie's first two
//! genres and keywords, and learns to predict the rating through a dense
//! ReLU stack. The trained movie, genre and keyword embeddings then define a
//! content space: a user's taste is the mean content vector of the movies
//! they rated highly, and recommendations are the nearest unseen movies by
//! cosine similarity.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod model;
pub mod recommend;
pub mod rng;
pub mod store;
pub mod training;

pub use error::{Error, Result};
