//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::io::Write;

/// Minimizer of `tau|x| + (x - v)^2 / 2` by bisection on the subgradient.
pub fn scalar_prox(v: f64, tau: f64) -> f64 {
    let (mut lo, mut hi) = (-v.abs() - tau - 1.0, v.abs() + tau + 1.0);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let left = mid - v + if mid > 0.0 { tau } else { -tau };
        let right = mid - v + if mid >= 0.0 { tau } else { -tau };
        if left > 0.0 {
            hi = mid;
        } else if right < 0.0 {
            lo = mid;
        } else {
            return mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of `tau ||z|| + ||z - p||^2 / 2` by cyclic coordinate descent;
/// each coordinate subproblem is solved by bisection on its derivative.
pub fn group_prox(p: &[f64], tau: f64) -> Vec<f64> {
    let mut z = p.to_vec();
    for _ in 0..2000 {
        for i in 0..z.len() {
            let rest: f64 = z
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v * v)
                .sum();
            if rest == 0.0 {
                z[i] = scalar_prox(p[i], tau);
                continue;
            }
            let deriv = |x: f64| tau * x / (x * x + rest).sqrt() + x - p[i];
            let (mut lo, mut hi) = (-p[i].abs() - 1.0, p[i].abs() + 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if deriv(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            z[i] = 0.5 * (lo + hi);
        }
    }
    z
}

/// Fraction of points misassigned under the best of all label permutations,
/// enumerated by hand (Heap's algorithm).
pub fn brute_error(truth: &[usize], pred: &[usize], m: usize) -> f64 {
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = 0;
    let score = |p: &[usize]| {
        truth
            .iter()
            .zip(pred)
            .filter(|(t, q)| p[**q] == **t)
            .count()
    };
    best = best.max(score(&perm));
    let mut c = vec![0; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.max(score(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    1.0 - best as f64 / truth.len() as f64
}

/// Writes one line straight to the process stderr so it survives the test
/// harness's output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}
