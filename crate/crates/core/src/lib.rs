//! Recover Java-module candidates from fully-qualified class names.
//!
//! The pipeline runs ingest → embed → reduce → cluster → repair → finalize,
//! and the [`metrics`] module scores a recovered [`Architecture`] against a
//! developer-created one (a2a, homogeneity/completeness, MQ).

pub mod architecture;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod reduction;
pub mod repair;
pub mod seed;
pub mod synthetic;

pub use architecture::Architecture;
pub use clustering::{ClusterAssignment, NOISE};
pub use corpus::{ClassEntity, CorpusManifest};
pub use embedding::{EmbeddingMatrix, Granularity, Provenance};
pub use error::{Error, Result};
pub use metrics::{ContingencyTable, DependencyGraph, MetricsReport, TransformCost};
pub use pipeline::{EmbedderChoice, PipelineConfig, RunReport};
pub use reduction::{ReducedMatrix, ReductionParams};
