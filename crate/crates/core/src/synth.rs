//! Synthetic unions of subspaces with known ground truth.
//!
//! Every generator is a pure function of its spec and seed and verifies the
//! subspace membership of its noise-free points before returning.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Rotation3, Unit, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{TrajectoryPoint, TrajectorySet};
use crate::seeds::rng_for;
use crate::types::{FeatureMatrix, Labels};

const MEMBERSHIP_TOL: f64 = 1e-10;
pub const RANK_TOL: f64 = 1e-8;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, rows, cols).qr().q()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    pub dims: Vec<usize>,
    pub counts: Vec<usize>,
    pub ambient: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Scale the in-subspace part of every point to unit norm.
    pub unit_norm: bool,
    /// Norm of each subspace's offset from the origin (0 gives linear subspaces).
    /// Parallel subspaces sit at multiples `2i - (M-1)` of it along one direction.
    pub offsets_scale: f64,
    /// All subspaces share one direction basis and differ only by offset.
    pub parallel: bool,
}

impl SubspaceSpec {
    pub fn linear(
        dims: &[usize],
        counts: &[usize],
        ambient: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            dims: dims.to_vec(),
            counts: counts.to_vec(),
            ambient,
            noise_sigma,
            seed,
            unit_norm: true,
            offsets_scale: 0.0,
            parallel: false,
        }
    }

    /// Affine subspaces keep raw coefficients: unit-norm scaling would shrink a
    /// 1-D affine subspace to at most two distinct points.
    pub fn affine(
        dims: &[usize],
        counts: &[usize],
        ambient: usize,
        offsets_scale: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            offsets_scale,
            unit_norm: false,
            ..Self::linear(dims, counts, ambient, noise_sigma, seed)
        }
    }

    /// Two lines and one plane through the origin of R^3 with 50, 50 and 150 points.
    pub fn three_subspaces_in_r3(seed: u64) -> Self {
        Self::linear(&[1, 1, 2], &[50, 50, 150], 3, 0.0, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.dims.is_empty() || self.dims.len() != self.counts.len() {
            return bad(format!(
                "need matching nonempty dims and counts, got {} and {}",
                self.dims.len(),
                self.counts.len()
            ));
        }
        for (&d, &c) in self.dims.iter().zip(&self.counts) {
            if d == 0 || d >= self.ambient {
                return bad(format!(
                    "subspace dimension {d} must lie in 1..{}",
                    self.ambient
                ));
            }
            if c < d + 1 {
                return bad(format!(
                    "{c} points cannot populate a {d}-dimensional subspace"
                ));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and nonnegative".into());
        }
        if !(self.offsets_scale >= 0.0 && self.offsets_scale.is_finite()) {
            return bad("offsets_scale must be finite and nonnegative".into());
        }
        if self.parallel {
            let d = self.dims[0];
            if self.dims.iter().any(|&x| x != d) {
                return bad("parallel subspaces must share one dimension".into());
            }
            if d + 1 > self.ambient {
                return bad(format!(
                    "parallel mode needs ambient >= dim + 1 ({})",
                    d + 1
                ));
            }
            if self.offsets_scale == 0.0 {
                return bad("parallel subspaces need a positive offset".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub features: Vec<FeatureMatrix>,
    pub ground_truth: Labels,
    pub spec: SubspaceSpec,
    /// Per subspace: orthonormal basis and offset.
    pub bases: Vec<(DMatrix<f64>, DVector<f64>)>,
    /// Points before noise is added.
    pub clean: DMatrix<f64>,
}

/// Distance of `x` from the affine subspace `offset + span(basis)`.
pub fn subspace_residual(x: &DVector<f64>, basis: &DMatrix<f64>, offset: &DVector<f64>) -> f64 {
    let centered = x - offset;
    let proj = basis * (basis.tr_mul(&centered));
    (centered - proj).norm()
}

/// Points drawn from a union of subspaces; each subspace gets an orthonormal
/// basis from the QR factor of a Gaussian matrix and coefficients uniform in
/// `[-1, 1]`.
pub fn generate_subspaces(spec: &SubspaceSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let m = spec.dims.len();
    let n_total: usize = spec.counts.iter().sum();
    let amb = spec.ambient;

    let mut bases = Vec::with_capacity(m);
    if spec.parallel {
        let d = spec.dims[0];
        let mut rng = rng_for(spec.seed, 10);
        let q = orthonormal_columns(&mut rng, amb, d + 1);
        let basis = q.columns(0, d).into_owned();
        // Offsets along one shared normal direction, so the linear spans of
        // all subspaces coincide and only the offsets tell them apart.
        for i in 0..m {
            let step = 2.0 * i as f64 - (m - 1) as f64;
            bases.push((basis.clone(), q.column(d) * (step * spec.offsets_scale)));
        }
    } else {
        for (i, &d) in spec.dims.iter().enumerate() {
            let mut rng = rng_for(spec.seed, 100 + i as u64);
            let q = orthonormal_columns(&mut rng, amb, d + 1);
            let offset = q.column(d) * spec.offsets_scale;
            bases.push((q.columns(0, d).into_owned(), offset));
        }
    }

    let mut clean = DMatrix::zeros(amb, n_total);
    let mut labels = Vec::with_capacity(n_total);
    let mut col = 0;
    for (i, (&d, &count)) in spec.dims.iter().zip(&spec.counts).enumerate() {
        let mut rng = rng_for(spec.seed, 1000 + i as u64);
        let (basis, offset) = &bases[i];
        for _ in 0..count {
            let coeffs = loop {
                let c = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                if !spec.unit_norm || c.norm() > 1e-6 {
                    break c;
                }
            };
            let mut v = basis * &coeffs;
            if spec.unit_norm {
                // Orient into the half-space of the first basis vector so a
                // 1-D subspace does not split into two antipodal points.
                if coeffs[0] < 0.0 {
                    v = -v;
                }
                v /= v.norm();
            }
            clean.set_column(col, &(v + offset));
            labels.push(i);
            col += 1;
        }
    }

    col = 0;
    for (i, &count) in spec.counts.iter().enumerate() {
        let (basis, offset) = &bases[i];
        for _ in 0..count {
            let r = subspace_residual(&clean.column(col).into_owned(), basis, offset);
            if !(r < MEMBERSHIP_TOL) {
                return Err(Error::NumericalFailure(format!(
                    "generated point {col} is {r:e} away from subspace {i}"
                )));
            }
            col += 1;
        }
    }

    let mut data = clean.clone();
    if spec.noise_sigma > 0.0 {
        let mut rng = rng_for(spec.seed, 7);
        for v in data.iter_mut() {
            *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(SyntheticInstance {
        features: vec![FeatureMatrix::new(data, 1)?],
        ground_truth: Labels::new(labels, m)?,
        spec: spec.clone(),
        bases,
        clean,
    })
}

pub fn gen_linear_subspaces(
    dims: &[usize],
    counts: &[usize],
    ambient: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticInstance> {
    generate_subspaces(&SubspaceSpec::linear(
        dims,
        counts,
        ambient,
        noise_sigma,
        seed,
    ))
}

pub fn gen_affine_subspaces(
    dims: &[usize],
    counts: &[usize],
    ambient: usize,
    offsets_scale: f64,
    noise_sigma: f64,
    seed: u64,
    parallel: bool,
) -> Result<SyntheticInstance> {
    let spec = SubspaceSpec {
        parallel,
        ..SubspaceSpec::affine(dims, counts, ambient, offsets_scale, noise_sigma, seed)
    };
    generate_subspaces(&spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub frames: usize,
    pub motions: usize,
    pub points_per: usize,
    pub missing_frac: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.frames < 3 {
            return bad("need at least 3 frames");
        }
        if self.motions < 1 || self.points_per < 1 {
            return bad("need at least one motion with one point");
        }
        if self.motions * self.points_per < 2 {
            return bad("need at least two points");
        }
        if !(0.0..1.0).contains(&self.missing_frac) {
            return bad("missing_frac must lie in [0, 1)");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn num_points(&self) -> usize {
        self.motions * self.points_per
    }

    pub fn num_truncated(&self) -> usize {
        (self.missing_frac * self.num_points() as f64).ceil() as usize
    }
}

#[derive(Debug, Clone)]
pub struct MotionInstance {
    pub trajectories: TrajectorySet,
    pub ground_truth: Labels,
    pub spec: MotionSpec,
    /// Complete noise-free `2F x N` trajectory matrix.
    pub clean: DMatrix<f64>,
    pub truncated: Vec<bool>,
}

/// Numerical rank: singular values above `tol` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}

/// Rank of the columns after subtracting their mean (the affine rank).
pub fn affine_rank(block: &DMatrix<f64>, tol: f64) -> usize {
    let mean = block.column_mean();
    let mut centered = block.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    numerical_rank(&centered, tol)
}

/// Per-motion column ranges of a motion instance.
pub fn motion_blocks(spec: &MotionSpec) -> Vec<std::ops::Range<usize>> {
    (0..spec.motions)
        .map(|m| m * spec.points_per..(m + 1) * spec.points_per)
        .collect()
}

/// Rigid motions seen by an affine camera. Frame `f` of motion `m` maps shape
/// point `s` to `s_f P R_m(f) s + t_m(f)` with `P` an orthographic projection,
/// `R_m` a slow rotation about a random axis and `t_m` a drifting translation,
/// so each motion's trajectories lie in a 3-dimensional affine subspace.
pub fn gen_rigid_motion_trajectories(spec: &MotionSpec) -> Result<MotionInstance> {
    spec.validate()?;
    let f_count = spec.frames;
    let n = spec.num_points();
    let mut clean = DMatrix::zeros(2 * f_count, n);
    let mut labels = Vec::with_capacity(n);

    for m in 0..spec.motions {
        let mut rng = rng_for(spec.seed, 200 + m as u64);
        let cam = Rotation3::from_scaled_axis(Vector3::from_fn(|_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let axis = Unit::new_normalize(Vector3::from_fn(|_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let omega = rng.random_range(0.03..0.08);
        let mut trans = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let vel = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
        let shape = DMatrix::from_fn(3, spec.points_per, |_, _| rng.random_range(-1.0..1.0));
        let mut scale = 1.0;
        for f in 0..f_count {
            let rot = cam * Rotation3::from_axis_angle(&axis, omega * f as f64);
            let proj = rot.matrix().fixed_rows::<2>(0).into_owned() * scale;
            for p in 0..spec.points_per {
                let s = Vector3::new(shape[(0, p)], shape[(1, p)], shape[(2, p)]);
                let xy = proj * s;
                let col = m * spec.points_per + p;
                clean[(2 * f, col)] = xy[0] + trans[0];
                clean[(2 * f + 1, col)] = xy[1] + trans[1];
            }
            trans[0] += vel[0] + 0.005 * rng.sample::<f64, _>(StandardNormal);
            trans[1] += vel[1] + 0.005 * rng.sample::<f64, _>(StandardNormal);
            scale *= 1.0 + 0.005 * rng.sample::<f64, _>(StandardNormal);
        }
        labels.extend(std::iter::repeat_n(m, spec.points_per));
    }

    for (m, block) in motion_blocks(spec).into_iter().enumerate() {
        let cols = clean.columns(block.start, block.len()).into_owned();
        let r = affine_rank(&cols, RANK_TOL);
        if r > 3 {
            return Err(Error::NumericalFailure(format!(
                "motion {m} has affine rank {r} > 3"
            )));
        }
    }

    // Truncated observation spans: points that appear late, die early, or both.
    let mut rng = rng_for(spec.seed, 300);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut truncated = vec![false; n];
    let mut spans = vec![(1usize, f_count); n];
    for &j in order.iter().take(spec.num_truncated()) {
        truncated[j] = true;
        let half = f_count / 2;
        let kind = rng.random_range(0..3);
        let first = if kind != 1 {
            rng.random_range(2..=half.max(2))
        } else {
            1
        };
        let last = if kind != 0 {
            rng.random_range((half + 1).min(f_count - 1)..f_count)
        } else {
            f_count
        };
        spans[j] = (first, last.max(first + 1).min(f_count));
    }

    let mut noise_rng = rng_for(spec.seed, 400);
    let points = (0..n)
        .map(|j| {
            let (first, last) = spans[j];
            let observations: BTreeMap<usize, (f64, f64)> = (first..=last)
                .map(|f| {
                    let mut x = clean[(2 * (f - 1), j)];
                    let mut y = clean[(2 * (f - 1) + 1, j)];
                    if spec.noise_sigma > 0.0 {
                        x += spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal);
                        y += spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal);
                    }
                    (f, (x, y))
                })
                .collect();
            TrajectoryPoint {
                point_id: j as u64,
                observations,
            }
        })
        .collect();

    Ok(MotionInstance {
        trajectories: TrajectorySet {
            num_frames: f_count,
            points,
        },
        ground_truth: Labels::new(labels, spec.motions)?,
        spec: spec.clone(),
        clean,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_and_plane_configuration() {
        let inst = generate_subspaces(&SubspaceSpec::three_subspaces_in_r3(0)).unwrap();
        assert_eq!(inst.features[0].num_points(), 250);
        assert_eq!(inst.features[0].dim(), 3);
        assert_eq!(inst.ground_truth.cluster_sizes(), vec![50, 50, 150]);
        for (j, &l) in inst.ground_truth.values().iter().enumerate() {
            let x = inst.features[0].data().column(j).into_owned();
            let (basis, offset) = &inst.bases[l];
            // Projector residual computed from scratch.
            let p = basis * basis.transpose();
            let r = (&x - &p * &x).norm();
            assert!(r < 1e-12 && offset.norm() == 0.0);
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_subspace_labels() {
        let inst = gen_linear_subspaces(&[2], &[10], 4, 0.1, 3).unwrap();
        assert!(inst.ground_truth.values().iter().all(|&l| l == 0));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_linear_subspaces(&[3], &[10], 3, 0.0, 0).is_err());
        assert!(gen_linear_subspaces(&[2], &[2], 4, 0.0, 0).is_err());
        assert!(gen_linear_subspaces(&[1, 1], &[5], 3, 0.0, 0).is_err());
        assert!(gen_linear_subspaces(&[1], &[5], 3, -1.0, 0).is_err());
        assert!(gen_affine_subspaces(&[1, 2], &[5, 5], 4, 1.0, 0.0, 0, true).is_err());
        assert!(gen_affine_subspaces(&[1, 1], &[5, 5], 3, 0.0, 0.0, 0, true).is_err());
    }

    #[test]
    fn parallel_lines_lie_on_their_affine_hulls() {
        let inst = gen_affine_subspaces(&[1, 1], &[100, 100], 3, 1.0, 0.0, 0, true).unwrap();
        let (b0, o0) = &inst.bases[0];
        let (b1, o1) = &inst.bases[1];
        assert_eq!(b0, b1);
        assert!((o0.norm() - 1.0).abs() < 1e-12 && (o1.norm() - 1.0).abs() < 1e-12);
        assert!(b0.tr_mul(o0).amax() < 1e-12);
        for (j, &l) in inst.ground_truth.values().iter().enumerate() {
            let x = inst.clean.column(j).into_owned();
            let (b, o) = &inst.bases[l];
            let c = &x - o;
            assert!((&c - b * b.tr_mul(&c)).norm() < 1e-12);
        }
        // Both lines lie in the same 2-D linear subspace.
        assert_eq!(numerical_rank(&inst.clean, 1e-10), 2);
    }

    #[test]
    fn affine_planes_reconstruct_from_neighbors() {
        let inst = gen_affine_subspaces(&[2, 2, 2], &[30, 30, 30], 5, 1.0, 0.0, 1, false).unwrap();
        let x = &inst.clean;
        for l in 0..3 {
            let members: Vec<usize> = (0..90)
                .filter(|&j| inst.ground_truth.values()[j] == l)
                .collect();
            let target = members[0];
            let nbrs = &members[1..4];
            // Affine least squares: min ||x - A c|| with sum c = 1, solved by
            // eliminating the last weight.
            let base = x.column(nbrs[2]).into_owned();
            let a = DMatrix::from_fn(5, 2, |r, c| x[(r, nbrs[c])] - base[r]);
            let rhs = x.column(target) - &base;
            let w = a.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
            let recon = &a * &w + &base;
            assert!((recon - x.column(target)).norm() < 1e-8);
        }
    }

    #[test]
    fn zero_offsets_give_linear_subspaces() {
        let inst = gen_affine_subspaces(&[1, 2], &[10, 10], 4, 0.0, 0.0, 2, false).unwrap();
        let lin = gen_linear_subspaces(&[1, 2], &[10, 10], 4, 0.0, 2).unwrap();
        for ((b, o), (bl, _)) in inst.bases.iter().zip(&lin.bases) {
            assert_eq!(b, bl);
            assert_eq!(o.norm(), 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SubspaceSpec::affine(&[1, 2], &[10, 10], 4, 0.5, 0.01, 9);
        let a = generate_subspaces(&spec).unwrap();
        let b = generate_subspaces(&spec).unwrap();
        assert_eq!(a.features[0].data(), b.features[0].data());
    }

    fn motion(missing: f64, motions: usize, seed: u64) -> MotionInstance {
        gen_rigid_motion_trajectories(&MotionSpec {
            frames: 30,
            motions,
            points_per: 40,
            missing_frac: missing,
            noise_sigma: 0.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn motion_blocks_have_affine_rank_three() {
        for seed in 0..3 {
            let inst = motion(0.0, 3, seed);
            assert_eq!(inst.clean.shape(), (60, 120));
            for block in motion_blocks(&inst.spec) {
                let cols = inst.clean.columns(block.start, block.len()).into_owned();
                assert!(affine_rank(&cols, 1e-8) <= 3);
            }
            // The union is not low rank.
            assert!(affine_rank(&inst.clean, 1e-8) > 3);
            assert!(inst
                .trajectories
                .points
                .iter()
                .all(|p| p.observations.len() == 30));
        }
    }

    #[test]
    fn single_motion_labels() {
        let inst = motion(0.0, 1, 0);
        assert!(inst.ground_truth.values().iter().all(|&l| l == 0));
    }

    #[test]
    fn truncation_count_is_exact() {
        let inst = motion(0.2, 3, 4);
        let truncated = inst
            .trajectories
            .points
            .iter()
            .filter(|p| p.observations.len() < 30)
            .count();
        assert_eq!(truncated, 24);
        assert_eq!(inst.truncated.iter().filter(|&&t| t).count(), 24);
        inst.trajectories.validate().unwrap();
    }

    #[test]
    fn motion_spec_validation() {
        let ok = MotionSpec {
            frames: 30,
            motions: 2,
            points_per: 5,
            missing_frac: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        assert!(ok.validate().is_ok());
        assert!(MotionSpec {
            frames: 2,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(MotionSpec {
            motions: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(MotionSpec {
            missing_frac: 1.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
    }
}
