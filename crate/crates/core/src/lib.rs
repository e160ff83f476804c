//! Turn a collection of paper records into a labeled two-dimensional map:
//! tf-idf vectors, PCA to a variance target, k-means labels and t-SNE
//! coordinates, exported as a single JSON atlas.

pub mod atlas;
pub mod corpus;
pub mod error;
pub mod kmeans;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod synthetic;
pub mod text;
pub mod tsne;
pub mod vectorize;

pub use error::{AtlasError, Result};
