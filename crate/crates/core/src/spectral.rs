//! Spectral clustering on the symmetric normalized Laplacian.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{dims, Error, Result};
use crate::seeds::{derive_seed, rng_for};
use crate::types::Labels;

const SYMMETRY_TOL: f64 = 1e-10;
const ZERO_ROW: f64 = 1e-12;
pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_MAX_ITER: usize = 300;
/// Extra restart batches (with a perturbed seed) before giving up on empty clusters.
const RESTART_BATCHES: u64 = 3;

/// `L = I - D^{-1/2} W D^{-1/2}`; isolated vertices get an identity row.
pub fn normalized_laplacian(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::shape("square affinity", dims(w)));
    }
    let asym = (w - w.transpose()).amax();
    if !(asym <= SYMMETRY_TOL) {
        return Err(Error::AsymmetricInput(asym));
    }
    if w.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidSpec("affinity has negative entries".into()));
    }
    let inv_sqrt: Vec<f64> = w
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        if inv_sqrt[i] == 0.0 || inv_sqrt[j] == 0.0 {
            id
        } else {
            id - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
        }
    }))
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// `N x M`, one row per point.
    pub vectors: DMatrix<f64>,
    /// The `M` smallest Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    /// Rows scaled to unit norm; numerically zero rows are set to zero.
    pub fn row_normalized(&self) -> DMatrix<f64> {
        let mut out = self.vectors.clone();
        for mut row in out.row_iter_mut() {
            let norm = row.norm();
            if norm > ZERO_ROW {
                row /= norm;
            } else {
                row.fill(0.0);
            }
        }
        out
    }
}

/// Eigenvalues of a symmetric matrix with eigenvectors, sorted ascending
/// (ties keep the solver's order).
pub fn sorted_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn spectral_embedding(w: &DMatrix<f64>, m: usize) -> Result<SpectralEmbedding> {
    let l = normalized_laplacian(w)?;
    let n = l.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidSpec(format!(
            "cannot embed {n} points into {m} clusters"
        )));
    }
    let (values, vectors) = sorted_eigen(l);
    Ok(SpectralEmbedding {
        vectors: vectors.columns(0, m).into_owned(),
        eigenvalues: values[..m].to_vec(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub centroids: Vec<Vec<f64>>,
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One seeded k-means++ / Lloyd run. Returns `None` if a cluster ends up empty.
pub fn kmeans_once(points: &[Vec<f64>], k: usize, seed: u64) -> Option<KMeansFit> {
    let mut rng = rng_for(seed, 0);
    let dim = points.first().map_or(0, Vec::len);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    if counts.contains(&0) {
        return None;
    }
    let cost = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Some(KMeansFit {
        assignment,
        cost,
        centroids,
    })
}

/// Best of `restarts` seeded runs by cost; ties go to the earlier restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Option<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts {
        if let Some(fit) = kmeans_once(points, k, derive_seed(seed, r as u64)) {
            if best.as_ref().is_none_or(|b| fit.cost < b.cost) {
                best = Some(fit);
            }
        }
    }
    best
}

/// Normalized spectral clustering of `w` into `m` groups.
pub fn spectral_cluster(w: &DMatrix<f64>, m: usize, seed: u64) -> Result<Labels> {
    let n = w.nrows();
    if m == 1 {
        normalized_laplacian(w)?;
        return Labels::new(vec![0; n], 1);
    }
    let embedding = spectral_embedding(w, m)?.row_normalized();
    let rows: Vec<Vec<f64>> = embedding
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let nonzero: Vec<usize> = (0..n)
        .filter(|&i| rows[i].iter().any(|v| *v != 0.0))
        .collect();
    let fit_idx: Vec<usize> = if nonzero.len() >= m {
        nonzero
    } else {
        (0..n).collect()
    };
    let fit_points: Vec<Vec<f64>> = fit_idx.iter().map(|&i| rows[i].clone()).collect();

    for batch in 0..RESTART_BATCHES {
        let batch_seed = if batch == 0 {
            seed
        } else {
            derive_seed(seed, 0xBA7C_0000 + batch)
        };
        let Some(fit) = kmeans(&fit_points, m, batch_seed, KMEANS_RESTARTS) else {
            continue;
        };
        let mut assignment = vec![usize::MAX; n];
        for (&i, &a) in fit_idx.iter().zip(&fit.assignment) {
            assignment[i] = a;
        }
        for (i, a) in assignment.iter_mut().enumerate() {
            if *a == usize::MAX {
                *a = nearest(&rows[i], &fit.centroids).0;
            }
        }
        return Ok(Labels::new(assignment, m)?.canonical());
    }
    Err(Error::EmptyCluster(format!(
        "k-means could not populate {m} clusters from {n} points"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::clustering_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigenvalues of a symmetric matrix.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum();
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn block_affinity(sizes: &[usize], seed: u64) -> (DMatrix<f64>, Labels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| vec![b; s])
            .collect();
        let n = labels.len();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] == labels[j] {
                    let v = rng.random_range(0.1..1.0);
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
        }
        let m = sizes.len();
        (w, Labels::new(labels, m).unwrap())
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(
            normalized_laplacian(&DMatrix::zeros(3, 3)).unwrap(),
            DMatrix::identity(3, 3)
        );
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let l = normalized_laplacian(&w).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let (vals, _) = sorted_eigen(l);
        assert!(vals[0].abs() < 1e-14 && (vals[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_rejects_bad_input() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(
            normalized_laplacian(&asym),
            Err(Error::AsymmetricInput(_))
        ));
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(normalized_laplacian(&neg).is_err());
        assert!(normalized_laplacian(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn block_diagonal_zero_multiplicity() {
        for (sizes, seed) in [(vec![3, 4], 1), (vec![2, 3, 4], 2), (vec![5, 2, 3, 2], 3)] {
            let (w, _) = block_affinity(&sizes, seed);
            let l = normalized_laplacian(&w).unwrap();
            let oracle = jacobi_eigenvalues(l.clone());
            let zeros = oracle.iter().filter(|v| v.abs() < 1e-9).count();
            assert_eq!(zeros, sizes.len());
            let (vals, _) = sorted_eigen(l);
            for (a, b) in vals.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recovers_exact_blocks() {
        let (w, truth) = block_affinity(&[50, 50, 150], 4);
        let labels = spectral_cluster(&w, 3, 0).unwrap();
        assert_eq!(clustering_error(&truth, &labels, 3).unwrap(), 0.0);
    }

    #[test]
    fn single_cluster_and_one_per_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = DMatrix::from_fn(6, 6, |_, _| rng.random_range(0.0..1.0));
        w = &w + w.transpose();
        assert_eq!(spectral_cluster(&w, 1, 0).unwrap().values(), &[0; 6]);
        let l = spectral_cluster(&w, 6, 0).unwrap();
        let mut v = l.values().to_vec();
        v.sort();
        assert_eq!(v, (0..6).collect::<Vec<_>>());
        assert!(spectral_cluster(&w, 7, 0).is_err());
    }

    #[test]
    fn permutation_and_scale_invariant() {
        let (mut w, truth) = block_affinity(&[10, 12, 8], 6);
        // Weak cross-block links so the problem is not trivially disconnected.
        for i in 0..30 {
            let j = (i * 7 + 3) % 30;
            if i != j && truth.values()[i] != truth.values()[j] {
                w[(i, j)] = 0.01;
                w[(j, i)] = 0.01;
            }
        }
        let base = spectral_cluster(&w, 3, 9).unwrap();
        let n = 30;
        let perm: Vec<usize> = (0..n).map(|i| (i * 11) % n).collect();
        let pw = DMatrix::from_fn(n, n, |i, j| w[(perm[i], perm[j])]);
        let pl = spectral_cluster(&pw, 3, 9).unwrap();
        let mut unperm = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            unperm[p] = pl.values()[i];
        }
        let unperm = Labels::new(unperm, 3).unwrap();
        assert_eq!(clustering_error(&base, &unperm, 3).unwrap(), 0.0);
        let scaled = spectral_cluster(&(&w * 7.5), 3, 9).unwrap();
        assert_eq!(clustering_error(&base, &scaled, 3).unwrap(), 0.0);
        assert_eq!(clustering_error(&truth, &base, 3).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_and_canonical() {
        let (w, _) = block_affinity(&[7, 9, 5], 8);
        let a = spectral_cluster(&w, 3, 42).unwrap();
        let b = spectral_cluster(&w, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values()[0], 0);
    }

    #[test]
    fn kmeans_separates_obvious_groups() {
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                if i < 5 {
                    vec![i as f64 * 0.01, 0.0]
                } else {
                    vec![5.0 + i as f64 * 0.01, 5.0]
                }
            })
            .collect();
        let fit = kmeans(&pts, 2, 1, KMEANS_RESTARTS).unwrap();
        assert!(fit.assignment[..5].iter().all(|&a| a == fit.assignment[0]));
        assert!(fit.assignment[5..].iter().all(|&a| a == fit.assignment[5]));
        assert_ne!(fit.assignment[0], fit.assignment[5]);
        assert!(kmeans_once(&pts[..1], 2, 0).is_none());
    }
}
