//! Hellinger geometry over topic vectors: distances, the exact k-NN topic
//! graph, and the Ward dendrogram.

mod dendrogram;
mod hellinger;
pub(crate) mod knn;

pub use dendrogram::{normalize_heights, ward_agglomerate, Dendrogram, Merge, MetaTopics};
pub use hellinger::{hellinger, pairwise_hellinger, sqrt_coordinates, DistanceMatrix};
pub use knn::{knn_graph, KnnGraph};
