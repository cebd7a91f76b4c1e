//! Unsupervised drift detection for high-dimensional streams.
//!
//! Each chunk of the stream is embedded with a projector fitted on a warm-up
//! window, every sample is described by its distances to a set of centroids,
//! those distances are summarised by the persistent entropy of their H0
//! diagram, and consecutive chunks are compared with a Mann-Whitney U test.

pub mod changepoint;
pub mod error;
pub mod linalg;
pub mod mnist;
pub mod pipeline;
pub mod projectors;
pub mod stats;
pub mod streamgen;
pub mod topology;

pub use error::{Error, Result};
pub use pipeline::{run, RunConfig, RunReport};
pub use projectors::{Projector, ProjectorKind};
pub use streamgen::{AnnotatedStream, CaseSpec, SampleSource};
