//! JSON run report written next to the label file.

use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use sssc_core::admm::Residuals;
use sssc_core::{PipelineResult, SolverConfig};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Serialize)]
pub struct OuterEntry {
    pub iteration: usize,
    pub inner_iterations: usize,
    pub inner_converged: bool,
    pub residuals: Residuals,
    pub objective: f64,
    pub partition_changes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_secs: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub load_secs: f64,
    pub pipeline_secs: f64,
    pub final_spectral_secs: f64,
    pub write_secs: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub labels_path: String,
    pub config: SolverConfig,
    pub num_points: usize,
    pub num_features: usize,
    pub lambdas: Vec<f64>,
    pub outer_iterations: usize,
    pub theta_converged: bool,
    pub cluster_sizes: Vec<usize>,
    pub diagnostics: Vec<OuterEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl RunReport {
    pub fn new(
        labels_path: &Path,
        config: &SolverConfig,
        num_features: usize,
        result: &PipelineResult,
        with_timings: bool,
    ) -> Self {
        let secs = |d: Duration| with_timings.then_some(d.as_secs_f64());
        let diagnostics = result
            .history
            .iter()
            .enumerate()
            .map(|(i, h)| OuterEntry {
                iteration: i + 1,
                inner_iterations: h.inner_iterations,
                inner_converged: h.inner_converged,
                residuals: h.residuals,
                objective: h.objective,
                partition_changes: h.partition_changes,
                inner_secs: secs(h.inner_time),
                spectral_secs: secs(h.spectral_time),
            })
            .collect();
        Self {
            schema: SCHEMA,
            labels_path: labels_path.display().to_string(),
            config: config.clone(),
            num_points: result.labels.len(),
            num_features,
            lambdas: result.lambdas.clone(),
            outer_iterations: result.outer_iterations,
            theta_converged: result.theta_converged,
            cluster_sizes: result.labels.cluster_sizes(),
            diagnostics,
            timings: None,
        }
    }
}
