//! Outer loop: alternate inner ADMM solves with spectral segmentation until the
//! structure matrices stop changing, then cluster the fused affinity.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::admm::{InnerSolver, Residuals};
use crate::error::{dims, Error, Result};
use crate::proximal::{stacked_l21, structured_l1};
use crate::seeds::derive_seed;
use crate::spectral::spectral_cluster;
use crate::types::{shared_num_points, FeatureMatrix, Labels, SolverConfig, ThetaMode};

/// Attempts of the spectral step (each with a fresh seed) before an empty
/// cluster is reported.
const SPECTRAL_ATTEMPTS: u64 = 3;

pub fn labels_to_q(labels: &Labels, m: usize) -> Result<DMatrix<f64>> {
    let n = labels.len();
    let mut q = DMatrix::zeros(n, m);
    let mut counts = vec![0usize; m];
    for (i, &l) in labels.values().iter().enumerate() {
        if l >= m {
            return Err(Error::InvalidSpec(format!(
                "label {l} out of range for {m} clusters"
            )));
        }
        q[(i, l)] = 1.0;
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster(format!(
            "cluster {empty} has no members"
        )));
    }
    Ok(q)
}

/// `Theta_ij = ||q_i - q_j||^2 / 2`, i.e. 1 when rows `i` and `j` sit in
/// different clusters.
pub fn q_to_theta(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (q.row(i) - q.row(j)).norm_squared())
}

pub fn labels_to_theta(labels: &Labels) -> DMatrix<f64> {
    let v = labels.values();
    DMatrix::from_fn(v.len(), v.len(), |i, j| (v[i] != v[j]) as u8 as f64)
}

/// `S_ij = (||((Z_k)_ij)_k||_2 + ||((Z_k)_ji)_k||_2) / 2`.
pub fn fuse_affinity(zs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = zs
        .first()
        .ok_or_else(|| Error::InvalidSpec("no coefficient matrices to fuse".into()))?;
    let n = first.nrows();
    if first.ncols() != n {
        return Err(Error::shape("square matrix", dims(first)));
    }
    if let Some(bad) = zs.iter().find(|z| z.shape() != first.shape()) {
        return Err(Error::shape(dims(first), dims(bad)));
    }
    let mag = DMatrix::from_fn(n, n, |i, j| {
        zs.iter().map(|z| z[(i, j)].powi(2)).sum::<f64>().sqrt()
    });
    Ok((&mag + mag.transpose()) * 0.5)
}

/// `W = |Z| + |Z|^T`.
pub fn single_affinity(z: &DMatrix<f64>) -> DMatrix<f64> {
    let a = z.abs();
    &a + a.transpose()
}

fn zero_diagonal(mut z: DMatrix<f64>) -> DMatrix<f64> {
    z.fill_diagonal(0.0);
    z
}

/// Number of unordered point pairs whose co-membership differs.
pub fn partition_changes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] != b[(i, j)] {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct OuterDiagnostics {
    pub inner_iterations: usize,
    pub inner_converged: bool,
    pub residuals: Residuals,
    pub objective: f64,
    /// Pairs whose co-membership flipped relative to the previous structure
    /// matrices (summed over features in per-feature mode).
    pub partition_changes: usize,
    #[serde(skip)]
    pub inner_time: Duration,
    #[serde(skip)]
    pub spectral_time: Duration,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub labels: Labels,
    pub z_list: Vec<DMatrix<f64>>,
    pub fused_affinity: DMatrix<f64>,
    pub outer_iterations: usize,
    pub theta_converged: bool,
    pub lambdas: Vec<f64>,
    pub history: Vec<OuterDiagnostics>,
    pub final_spectral_time: Duration,
}

fn cluster_with_retry(w: &DMatrix<f64>, m: usize, seed: u64) -> Result<Labels> {
    let mut last = None;
    for attempt in 0..SPECTRAL_ATTEMPTS {
        let s = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, 0x5EC7_0000 + attempt)
        };
        match spectral_cluster(w, m, s) {
            Err(e @ Error::EmptyCluster(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

/// `sum_k ||Z_k||_{1,Theta_k} + lambda_k ||E_k||_1 + beta ||Z||_{2,1}`.
fn objective(
    sol: &crate::admm::InnerSolution,
    thetas: &[DMatrix<f64>],
    config: &SolverConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for ((f, theta), lambda) in sol.features.iter().zip(thetas).zip(&sol.lambdas) {
        total += structured_l1(&f.z, theta, config.alpha)?;
        total += lambda * f.e.iter().map(|e| e.abs()).sum::<f64>();
    }
    Ok(total + config.beta * stacked_l21(&sol.z_list()))
}

pub fn run_pipeline(features: &[FeatureMatrix], config: &SolverConfig) -> Result<PipelineResult> {
    config.validate()?;
    let n = shared_num_points(features)?;
    let m = config.num_clusters;
    if m > n {
        return Err(Error::InvalidSpec(format!(
            "{m} clusters requested for {n} points"
        )));
    }
    let k = features.len();
    let solver = InnerSolver::new(features, config)?;
    let spectral_seed = derive_seed(config.seed, 1);

    let mut thetas = vec![DMatrix::zeros(n, n); k];
    let mut history = Vec::new();
    let mut theta_converged = false;
    let mut z_list = Vec::new();

    let passes = config.max_outer.max(1);
    for pass in 0..passes {
        let t0 = Instant::now();
        let sol = solver.solve(&thetas)?;
        let inner_time = t0.elapsed();
        let obj = objective(&sol, &thetas, config)?;
        z_list = sol.z_list().into_iter().map(zero_diagonal).collect();

        let t1 = Instant::now();
        let mut changes = 0;
        if config.max_outer > 0 {
            let seed = derive_seed(spectral_seed, pass as u64);
            let new_thetas: Vec<DMatrix<f64>> = match config.theta_mode {
                ThetaMode::Fused => {
                    let s = fuse_affinity(&z_list)?;
                    let theta = labels_to_theta(&cluster_with_retry(&s, m, seed)?);
                    vec![theta; k]
                }
                ThetaMode::PerFeature => z_list
                    .iter()
                    .map(|z| {
                        cluster_with_retry(&single_affinity(z), m, seed)
                            .map(|l| labels_to_theta(&l))
                    })
                    .collect::<Result<_>>()?,
            };
            changes = thetas
                .iter()
                .zip(&new_thetas)
                .map(|(a, b)| partition_changes(a, b))
                .sum();
            theta_converged = changes == 0;
            thetas = new_thetas;
        }
        history.push(OuterDiagnostics {
            inner_iterations: sol.iterations_used,
            inner_converged: sol.converged,
            residuals: sol.worst_residuals(),
            objective: obj,
            partition_changes: changes,
            inner_time,
            spectral_time: t1.elapsed(),
        });
        if theta_converged {
            break;
        }
    }

    let t2 = Instant::now();
    let fused_affinity = fuse_affinity(&z_list)?;
    let last_pass = history.len().saturating_sub(1) as u64;
    let labels = cluster_with_retry(&fused_affinity, m, derive_seed(spectral_seed, last_pass))?;
    Ok(PipelineResult {
        labels,
        z_list,
        fused_affinity,
        outer_iterations: history.len(),
        theta_converged,
        lambdas: solver.lambdas().to_vec(),
        history,
        final_spectral_time: t2.elapsed(),
    })
}
