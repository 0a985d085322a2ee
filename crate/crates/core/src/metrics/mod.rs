//! Temporal alignment metrics over the topic manifold and topic-coherence
//! evaluators.

mod alignment;
mod coherence;
mod spectral;

pub use alignment::{ncomp, tno, tno_shuffled_null};
pub use coherence::{coherence, CoherenceMeasure, CoherenceReport, WindowCounts};
pub use spectral::{
    etsg, etsg_shuffled_null, etsg_with, normalized_laplacian, temporal_weights, Eigensolver, EtsgResult,
    DENSE_SOLVER_LIMIT,
};
