//! Gaussian geo-spatial network embeddings.
//!
//! Houses and points of interest are linked into a weighted multipartite
//! graph, every node is encoded from its attributes into a diagonal Gaussian,
//! and the encoders are trained with first- and second-order proximity
//! objectives under negative sampling. The resulting house embeddings are
//! appended to the raw house features for downstream price regression.

pub mod binio;
pub mod config;
pub mod dataprep;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geo_graph;
pub mod gradcheck;
pub mod linalg;
pub mod objective;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod trainer;

pub use error::{GsneError, Result};
pub use exec::Execution;
