//! Multi-scale topic manifold learning: ensemble topic models over time
//! chunks, Hellinger geometry, Ward dendrograms with co-authorship link
//! probabilities, temporal alignment metrics and a diffusion embedding.

pub mod corpus;
pub mod dense;
pub mod embed;
pub mod error;
pub mod geometry;
pub mod hrg;
pub mod lda;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod relevancy;
pub mod synth;

pub use error::{Error, Result};
pub use par::Exec;
