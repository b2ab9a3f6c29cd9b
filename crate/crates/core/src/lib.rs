//! Structured sparse subspace clustering with an affine constraint and
//! multi-feature fusion.
//!
//! The pipeline alternates an ADMM solve of the self-expressive coefficient
//! problem with spectral segmentation; the segmentation feeds back as
//! structure matrices that penalize coefficients between points assigned to
//! different clusters.

pub mod admm;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod proximal;
pub mod seeds;
pub mod spectral;
pub mod structured;
pub mod synth;
pub mod types;

pub use error::{Error, ErrorClass, Result};
pub use structured::{run_pipeline, PipelineResult};
pub use types::{FeatureMatrix, Labels, SegmentationState, SolverConfig, ThetaMode};
