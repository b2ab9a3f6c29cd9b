//! Shared containers and configuration.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One view of the data: an `n x N` matrix whose columns are data points.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    feature_id: usize,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, feature_id: usize) -> Result<Self> {
        if data.nrows() < 1 || data.ncols() < 2 {
            return Err(Error::InvalidSpec(format!(
                "feature matrix must have at least 1 row and 2 columns, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "feature {feature_id} contains non-finite entry {bad}"
            )));
        }
        Ok(Self { data, feature_id })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn feature_id(&self) -> usize {
        self.feature_id
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of data points `N`.
    pub fn num_points(&self) -> usize {
        self.data.ncols()
    }
}

/// Checks that every view shares the same number of points and returns it.
pub fn shared_num_points(features: &[FeatureMatrix]) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidSpec("at least one feature matrix is required".into()))?;
    let n = first.num_points();
    for f in features {
        if f.num_points() != n {
            return Err(Error::shape(
                format!("{n} points"),
                format!("{} points in feature {}", f.num_points(), f.feature_id()),
            ));
        }
    }
    Ok(n)
}

/// How the outer loop turns coefficient matrices into structure matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    /// One segmentation of the fused affinity sets every feature's structure matrix.
    #[default]
    Fused,
    /// Each feature is segmented on its own affinity.
    PerFeature,
}

impl std::str::FromStr for ThetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(ThetaMode::Fused),
            "per-feature" => Ok(ThetaMode::PerFeature),
            other => Err(Error::InvalidSpec(format!("unknown theta mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight of the structure term in the subspace-structured l1 norm.
    pub alpha: f64,
    /// Weight of the cross-feature l2,1 coupling.
    pub beta: f64,
    /// Numerator of the per-feature noise weight, see [`derive_lambda`].
    pub lambda_scale: f64,
    /// Growth factor of the penalty parameter.
    pub rho: f64,
    pub mu0: f64,
    pub mu_max: f64,
    /// Tolerance on the primal residual infinity norms.
    pub eps_inner: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub num_clusters: usize,
    pub affine_constraint: bool,
    pub theta_mode: ThetaMode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1e-5,
            lambda_scale: 20.0,
            rho: 1.2,
            mu0: 0.1,
            mu_max: 1e8,
            eps_inner: 1e-6,
            max_inner: 200,
            max_outer: 10,
            num_clusters: 2,
            affine_constraint: true,
            theta_mode: ThetaMode::Fused,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_clusters(num_clusters: usize) -> Self {
        Self {
            num_clusters,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(what.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and nonnegative");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and nonnegative");
        }
        if !(self.lambda_scale > 0.0 && self.lambda_scale.is_finite()) {
            return bad("lambda_scale must be positive");
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return bad("rho must be at least 1");
        }
        if !(self.mu0 > 0.0 && self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return bad("require 0 < mu0 <= mu_max < inf");
        }
        if !(self.eps_inner > 0.0) {
            return bad("eps_inner must be positive");
        }
        if self.num_clusters < 1 {
            return bad("num_clusters must be at least 1");
        }
        Ok(())
    }
}

/// Cluster assignment of each data point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labels {
    values: Vec<usize>,
    num_clusters: usize,
}

impl Labels {
    pub fn new(values: Vec<usize>, num_clusters: usize) -> Result<Self> {
        if let Some(&v) = values.iter().find(|&&v| v >= num_clusters) {
            return Err(Error::InvalidSpec(format!(
                "label {v} out of range for {num_clusters} clusters"
            )));
        }
        Ok(Self {
            values,
            num_clusters,
        })
    }

    /// Infers the cluster count as `max + 1`.
    pub fn from_values(values: Vec<usize>) -> Self {
        let num_clusters = values.iter().max().map_or(0, |m| m + 1);
        Self {
            values,
            num_clusters,
        }
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Relabels clusters in order of first appearance, keeping the partition.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.num_clusters];
        let mut next = 0;
        let values = self
            .values
            .iter()
            .map(|&v| {
                if map[v] == usize::MAX {
                    map[v] = next;
                    next += 1;
                }
                map[v]
            })
            .collect();
        Self {
            values,
            num_clusters: self.num_clusters,
        }
    }

    /// Number of points in each cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &v in &self.values {
            sizes[v] += 1;
        }
        sizes
    }
}

/// Binary segmentation matrix and the structure matrix derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationState {
    pub q: DMatrix<f64>,
    pub theta: DMatrix<f64>,
}

impl SegmentationState {
    pub fn from_labels(labels: &Labels) -> Result<Self> {
        let q = crate::structured::labels_to_q(labels, labels.num_clusters())?;
        let theta = crate::structured::q_to_theta(&q);
        Ok(Self { q, theta })
    }
}

/// Noise weight for one view: `lambda_scale / mu` with
/// `mu = min_j max_{i != j} |x_i^T x_j|`.
pub fn derive_lambda(x: &FeatureMatrix, lambda_scale: f64) -> Result<f64> {
    let gram = x.data().tr_mul(x.data());
    let n = gram.ncols();
    let mut mu = f64::INFINITY;
    for j in 0..n {
        let col = gram.column(j);
        let best = (0..n)
            .filter(|&i| i != j)
            .map(|i| col[i].abs())
            .fold(0.0_f64, f64::max);
        mu = mu.min(best);
    }
    if !(mu > 0.0) {
        return Err(Error::DegenerateData(format!(
            "feature {}: some column is orthogonal to every other column",
            x.feature_id()
        )));
    }
    Ok(lambda_scale / mu)
}
