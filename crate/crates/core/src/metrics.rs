//! Co-segmentation IoU score and permutation-matched clustering error.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::types::Labels;

/// Largest cluster count for which the error is computed by enumerating permutations.
pub const EXHAUSTIVE_MAX_CLUSTERS: usize = 8;

fn check_lengths(a: &Labels, b: &Labels) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `counts[p][g]` = points with predicted label `p` and ground-truth label `g`.
pub fn contingency(predicted: &[usize], truth: &[usize], mp: usize, mg: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; mg]; mp];
    for (&p, &g) in predicted.iter().zip(truth) {
        counts[p][g] += 1;
    }
    counts
}

fn iou_table(predicted: &Labels, truth: &Labels) -> Vec<Vec<f64>> {
    let (mp, mg) = (predicted.num_clusters(), truth.num_clusters());
    let counts = contingency(predicted.values(), truth.values(), mp, mg);
    let psize = predicted.cluster_sizes();
    let gsize = truth.cluster_sizes();
    (0..mp)
        .map(|p| {
            (0..mg)
                .map(|g| {
                    let inter = counts[p][g];
                    let union = psize[p] + gsize[g] - inter;
                    if union == 0 {
                        0.0
                    } else {
                        inter as f64 / union as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// `(1/C) sum_j max_i |S_i ∩ G_j| / |S_i ∪ G_j|` with `G_j` the predicted
/// classes, `S_i` the ground-truth classes and `C` the ground-truth class count.
/// The sum runs over predicted classes, so the value can exceed 1 when the
/// prediction has more classes than the ground truth.
pub fn coseg_score(predicted: &Labels, truth: &Labels) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let table = iou_table(predicted, truth);
    let c = truth.num_clusters();
    if c == 0 {
        return Ok(0.0);
    }
    let sum: f64 = table
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .sum();
    Ok(sum / c as f64)
}

/// Mean over ground-truth classes of the best IoU against any predicted class.
pub fn coseg_score_symmetric(predicted: &Labels, truth: &Labels) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let table = iou_table(predicted, truth);
    let c = truth.num_clusters();
    if c == 0 {
        return Ok(0.0);
    }
    let sum: f64 = (0..c)
        .map(|g| table.iter().map(|row| row[g]).fold(0.0, f64::max))
        .sum();
    Ok(sum / c as f64)
}

fn checked_counts(truth: &Labels, predicted: &Labels, m: usize) -> Result<Vec<Vec<usize>>> {
    check_lengths(truth, predicted)?;
    for v in truth.values().iter().chain(predicted.values()) {
        if *v >= m {
            return Err(Error::InvalidSpec(format!(
                "label {v} out of range for {m} clusters"
            )));
        }
    }
    Ok(contingency(predicted.values(), truth.values(), m, m))
}

/// Best agreement by enumerating all `m!` maps predicted -> truth, in
/// lexicographic order (the first maximum wins).
pub fn best_agreement_exhaustive(counts: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let m = counts.len();
    let mut best = (0, (0..m).collect::<Vec<_>>());
    let mut first = true;
    for perm in (0..m).permutations(m) {
        let total: usize = perm.iter().enumerate().map(|(p, &g)| counts[p][g]).sum();
        if first || total > best.0 {
            best = (total, perm);
            first = false;
        }
    }
    best
}

/// Maximum-weight perfect matching on a square count matrix (Hungarian
/// method with potentials). Returns the matched total and `assignment[row]`.
pub fn best_agreement_hungarian(counts: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let n = counts.len();
    if n == 0 {
        return (0, Vec::new());
    }
    // minimize cost = -count; 1-based arrays with a virtual column 0
    let cost = |i: usize, j: usize| -(counts[i - 1][j - 1] as i64);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(p, &g)| counts[p][g])
        .sum();
    (total, assignment)
}

fn error_from(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        1.0 - total as f64 / n as f64
    }
}

pub fn clustering_error_exhaustive(truth: &Labels, predicted: &Labels, m: usize) -> Result<f64> {
    let counts = checked_counts(truth, predicted, m)?;
    Ok(error_from(
        best_agreement_exhaustive(&counts).0,
        truth.len(),
    ))
}

pub fn clustering_error_hungarian(truth: &Labels, predicted: &Labels, m: usize) -> Result<f64> {
    let counts = checked_counts(truth, predicted, m)?;
    Ok(error_from(best_agreement_hungarian(&counts).0, truth.len()))
}

/// `1 - max_pi (1/N) sum_i 1{pi(predicted_i) = truth_i}`.
pub fn clustering_error(truth: &Labels, predicted: &Labels, m: usize) -> Result<f64> {
    if m <= EXHAUSTIVE_MAX_CLUSTERS {
        clustering_error_exhaustive(truth, predicted, m)
    } else {
        clustering_error_hungarian(truth, predicted, m)
    }
}

/// Uses `max(label) + 1` over both labelings as the cluster count.
pub fn clustering_error_auto(truth: &Labels, predicted: &Labels) -> Result<f64> {
    let m = truth.num_clusters().max(predicted.num_clusters()).max(1);
    clustering_error(truth, predicted, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[usize]) -> Labels {
        Labels::from_values(v.to_vec())
    }

    #[test]
    fn perfect_and_permuted_scores() {
        let gt = labels(&[0, 0, 1, 1, 2]);
        assert_eq!(coseg_score(&gt, &gt).unwrap(), 1.0);
        let perm = labels(&[2, 2, 0, 0, 1]);
        assert_eq!(coseg_score(&perm, &gt).unwrap(), 1.0);
        assert_eq!(coseg_score_symmetric(&perm, &gt).unwrap(), 1.0);
    }

    #[test]
    fn constant_prediction_score() {
        let gt = labels(&[0, 0, 1, 1]);
        let pred = labels(&[0, 0, 0, 0]);
        // direct set counts: G_0 = {0,1,2,3}; S_0 = {0,1}, S_1 = {2,3}
        let s0 = 2.0 / 4.0;
        let s1 = 2.0 / 4.0;
        assert_eq!(coseg_score(&pred, &gt).unwrap(), f64::max(s0, s1) / 2.0);
        assert_eq!(coseg_score(&pred, &gt).unwrap(), 0.25);
    }

    #[test]
    fn score_can_exceed_one_when_over_segmented() {
        let gt = labels(&[0, 0, 0, 0]);
        let pred = labels(&[0, 0, 1, 1]);
        assert_eq!(coseg_score(&pred, &gt).unwrap(), 1.0);
        let gt2 = labels(&[0, 0, 0, 0, 1, 1]);
        let pred2 = labels(&[0, 0, 1, 1, 2, 2]);
        assert!(coseg_score(&pred2, &gt2).unwrap() > coseg_score_symmetric(&pred2, &gt2).unwrap());
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            coseg_score(&labels(&[0, 1]), &labels(&[0])),
            Err(Error::LengthMismatch(2, 1))
        ));
        assert!(matches!(
            clustering_error(&labels(&[0, 1]), &labels(&[0]), 2),
            Err(Error::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn error_examples() {
        let l = labels(&[0, 0, 1, 1]);
        assert_eq!(clustering_error(&l, &l, 2).unwrap(), 0.0);
        assert_eq!(
            clustering_error(&l, &labels(&[1, 1, 0, 0]), 2).unwrap(),
            0.0
        );
        assert_eq!(
            clustering_error(&l, &labels(&[0, 1, 1, 1]), 2).unwrap(),
            0.25
        );
    }

    #[test]
    fn hungarian_used_for_many_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 10;
        let truth: Vec<usize> = (0..200).map(|_| rng.random_range(0..m)).collect();
        let mut sigma: Vec<usize> = (0..m).collect();
        sigma.rotate_left(3);
        let pred: Vec<usize> = truth.iter().map(|&t| sigma[t]).collect();
        assert_eq!(
            clustering_error(&labels(&truth), &labels(&pred), m).unwrap(),
            0.0
        );
    }

    #[test]
    fn hungarian_matches_exhaustive_up_to_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let m = rng.random_range(1..=EXHAUSTIVE_MAX_CLUSTERS);
            let n = rng.random_range(1..40);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
            let (t, p) = (labels(&t), labels(&p));
            assert_eq!(
                clustering_error_exhaustive(&t, &p, m).unwrap(),
                clustering_error_hungarian(&t, &p, m).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn error_invariant_under_relabeling(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
            shift_a in 0usize..4,
            shift_b in 0usize..4,
        ) {
            let t: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let ts: Vec<usize> = t.iter().map(|v| (v + shift_a) % 4).collect();
            let ps: Vec<usize> = p.iter().map(|v| 3 - (v + shift_b) % 4).collect();
            let base = clustering_error(&labels(&t), &labels(&p), 4).unwrap();
            let moved = clustering_error(&labels(&ts), &labels(&ps), 4).unwrap();
            prop_assert_eq!(base, moved);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn score_is_one_for_equal_partitions(t in proptest::collection::vec(0usize..5, 1..40)) {
            let relabeled: Vec<usize> = t.iter().map(|v| (v * 3 + 1) % 5).collect();
            let gt = Labels::new(t.clone(), 5).unwrap().canonical();
            let gt = Labels::from_values(gt.values().to_vec());
            let pred = Labels::from_values(Labels::new(relabeled, 5).unwrap().canonical().values().to_vec());
            prop_assert!((coseg_score(&pred, &gt).unwrap() - 1.0).abs() < 1e-15);
        }
    }
}
