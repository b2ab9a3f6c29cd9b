//! Inner ADMM solver for fixed structure matrices.
//!
//! For every feature `k` the solver works on the split problem
//!
//! ```text
//! min  sum_k ||J_k||_{1,Theta_k} + lambda_k ||E_k||_1 + beta ||Z||_{2,1}
//! s.t. X_k = X_k C_k + E_k,  C_k = J_k - diag(J_k),  J_k = Z_k,  C_k^T 1 = 1
//! ```
//!
//! where `Z` stacks the `Z_k` so that entry `(i, j)` of all features forms one
//! group. One iteration updates J, C, E (per feature), then Z (jointly), then
//! the four multipliers and the penalty `mu`, each step seeing the newest
//! values of the others.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{dims, Error, Result};
use crate::proximal::{
    group_shrink_stacked, max_abs, soft_threshold, stacked_l21, structured_l1, uniform_shrink,
};
use crate::types::{derive_lambda, shared_num_points, FeatureMatrix, SolverConfig};

/// Reusable solver for `(X^T X + I [+ 1 1^T]) C = R`.
///
/// The system does not depend on `mu`, so one factorization serves every
/// inner iteration.
#[derive(Debug, Clone)]
pub struct SystemFactor {
    inverse: DMatrix<f64>,
    affine: bool,
}

impl SystemFactor {
    pub fn affine(&self) -> bool {
        self.affine
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(Error::shape(
                format!("{} rows", self.dim()),
                format!("{} rows", rhs.nrows()),
            ));
        }
        Ok(&self.inverse * rhs)
    }
}

pub fn system_matrix(x: &DMatrix<f64>, affine: bool) -> DMatrix<f64> {
    let n = x.ncols();
    let mut a = x.tr_mul(x);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    if affine {
        a.add_scalar_mut(1.0);
    }
    a
}

pub fn precompute_system(x: &DMatrix<f64>, affine: bool) -> Result<SystemFactor> {
    let a = system_matrix(x, affine);
    let chol = Cholesky::new(a)
        .ok_or_else(|| Error::NumericalFailure("Cholesky factorization failed".into()))?;
    let inverse = chol.inverse();
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite system inverse".into()));
    }
    Ok(SystemFactor { inverse, affine })
}

fn check_square(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::shape(format!("{what} {n}x{n}"), dims(m)));
    }
    Ok(())
}

/// Closed-form J-update.
///
/// Off the diagonal `J_ij = S_{tau_ij}(U_ij + W_ij) / 2`, on the diagonal
/// `J_ii = S_{1/mu}(W_ii)`, with `U = C + Y2/mu`, `W = Z - Y3/mu` and
/// `tau_ij = (1 + alpha Theta_ij) / mu`.
pub fn update_j(
    c: &DMatrix<f64>,
    y2: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y3: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    alpha: f64,
    mu: f64,
) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    for (m, what) in [(c, "C"), (y2, "Y2"), (z, "Z"), (y3, "Y3"), (theta, "Theta")] {
        check_square(m, n, what)?;
    }
    let inv_mu = 1.0 / mu;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let w = z[(i, j)] - y3[(i, j)] * inv_mu;
        let tau = (1.0 + alpha * theta[(i, j)]) * inv_mu;
        if i == j {
            soft_threshold(w, tau)
        } else {
            let u = c[(i, j)] + y2[(i, j)] * inv_mu;
            0.5 * soft_threshold(u + w, tau)
        }
    }))
}

/// Exact minimizer of the augmented Lagrangian in `C`.
#[allow(clippy::too_many_arguments)]
pub fn update_c(
    factor: &SystemFactor,
    x: &DMatrix<f64>,
    e: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    j: &DMatrix<f64>,
    y2: &DMatrix<f64>,
    y4: &DVector<f64>,
    mu: f64,
) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if e.shape() != x.shape() {
        return Err(Error::shape(dims(x), dims(e)));
    }
    if y1.shape() != x.shape() {
        return Err(Error::shape(dims(x), dims(y1)));
    }
    check_square(j, n, "J")?;
    check_square(y2, n, "Y2")?;
    let inv_mu = 1.0 / mu;
    let target = x - e + y1 * inv_mu;
    let mut rhs = x.tr_mul(&target);
    rhs += j;
    rhs -= y2 * inv_mu;
    for i in 0..n {
        rhs[(i, i)] -= j[(i, i)];
    }
    if factor.affine() {
        if y4.len() != n {
            return Err(Error::shape(
                format!("Y4 of length {n}"),
                y4.len().to_string(),
            ));
        }
        // + 1 1^T - 1 Y4^T / mu: column c gets 1 - y4_c / mu in every row.
        for (c, mut col) in rhs.column_iter_mut().enumerate() {
            col.add_scalar_mut(1.0 - y4[c] * inv_mu);
        }
    }
    factor.solve(&rhs)
}

/// `E = S_{lambda/mu}(X - XC + Y1/mu)`.
pub fn update_e(
    x: &DMatrix<f64>,
    c: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    lambda: f64,
    mu: f64,
) -> DMatrix<f64> {
    let v = x - x * c + y1 / mu;
    uniform_shrink(&v, lambda / mu)
}

/// Joint Z-update: group shrinkage of `P_k = J_k + Y3_k / mu` across features
/// with threshold `beta / mu`.
pub fn update_z_joint(
    js: &[DMatrix<f64>],
    y3s: &[DMatrix<f64>],
    beta: f64,
    mu: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if js.len() != y3s.len() {
        return Err(Error::LengthMismatch(js.len(), y3s.len()));
    }
    let ps: Vec<DMatrix<f64>> = js
        .iter()
        .zip(y3s)
        .map(|(j, y3)| {
            if j.shape() != y3.shape() {
                Err(Error::shape(dims(j), dims(y3)))
            } else {
                Ok(j + y3 / mu)
            }
        })
        .collect::<Result<_>>()?;
    group_shrink_stacked(&ps, beta / mu)
}

/// Infinity norms of the four primal residuals of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Residuals {
    /// `X - XC - E`
    pub data: f64,
    /// `C - J + diag(J)`
    pub split: f64,
    /// `J - Z`
    pub coupling: f64,
    /// `C^T 1 - 1`, zero when the affine constraint is off
    pub affine: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.data
            .max(self.split)
            .max(self.coupling)
            .max(self.affine)
    }

    pub fn all_below(&self, eps: f64) -> bool {
        self.data < eps && self.split < eps && self.coupling < eps && self.affine < eps
    }

    fn is_finite(&self) -> bool {
        self.max().is_finite()
    }

    /// Entrywise maximum.
    pub fn worst(items: impl IntoIterator<Item = Residuals>) -> Residuals {
        items
            .into_iter()
            .fold(Residuals::default(), |a, b| Residuals {
                data: a.data.max(b.data),
                split: a.split.max(b.split),
                coupling: a.coupling.max(b.coupling),
                affine: a.affine.max(b.affine),
            })
    }
}

/// Residual matrices `(X - XC - E, C - J + diag(J), J - Z, C^T 1 - 1)`.
pub(crate) struct ResidualMatrices {
    pub data: DMatrix<f64>,
    pub split: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
    pub affine: Option<DVector<f64>>,
}

impl ResidualMatrices {
    fn norms(&self) -> Residuals {
        Residuals {
            data: max_abs(&self.data),
            split: max_abs(&self.split),
            coupling: max_abs(&self.coupling),
            affine: self
                .affine
                .as_ref()
                .map_or(0.0, |v| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))),
        }
    }
}

/// ADMM variables for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVars {
    pub j: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    pub y3: DMatrix<f64>,
    pub y4: DVector<f64>,
}

impl FeatureVars {
    pub fn zeros(dim: usize, num_points: usize) -> Self {
        let sq = DMatrix::zeros(num_points, num_points);
        Self {
            j: sq.clone(),
            c: sq.clone(),
            e: DMatrix::zeros(dim, num_points),
            z: sq.clone(),
            y1: DMatrix::zeros(dim, num_points),
            y2: sq.clone(),
            y3: sq,
            y4: DVector::zeros(num_points),
        }
    }

    pub(crate) fn residual_matrices(&self, x: &DMatrix<f64>, affine: bool) -> ResidualMatrices {
        let data = x - x * &self.c - &self.e;
        let mut split = &self.c - &self.j;
        for i in 0..split.nrows() {
            split[(i, i)] += self.j[(i, i)];
        }
        let coupling = &self.j - &self.z;
        let affine = affine.then(|| {
            let mut v = self.c.row_sum_tr();
            v.add_scalar_mut(-1.0);
            v
        });
        ResidualMatrices {
            data,
            split,
            coupling,
            affine,
        }
    }

    pub fn residuals(&self, x: &DMatrix<f64>, affine: bool) -> Residuals {
        self.residual_matrices(x, affine).norms()
    }

    fn is_finite(&self) -> bool {
        [
            &self.j, &self.c, &self.e, &self.z, &self.y1, &self.y2, &self.y3,
        ]
        .iter()
        .all(|m| m.iter().all(|v| v.is_finite()))
            && self.y4.iter().all(|v| v.is_finite())
    }

    /// Dual ascent step with step size `mu`; returns the residual norms used.
    fn ascend(&mut self, x: &DMatrix<f64>, mu: f64, affine: bool) -> Residuals {
        let r = self.residual_matrices(x, affine);
        self.y1 += &r.data * mu;
        self.y2 += &r.split * mu;
        self.y3 += &r.coupling * mu;
        if let Some(a) = &r.affine {
            self.y4 += a * mu;
        }
        r.norms()
    }
}

/// All per-feature variables plus the shared penalty parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub vars: Vec<FeatureVars>,
    pub mu: f64,
    pub iteration: usize,
}

impl AdmmState {
    pub fn zeros(features: &[FeatureMatrix], mu0: f64) -> Self {
        Self {
            vars: features
                .iter()
                .map(|f| FeatureVars::zeros(f.dim(), f.num_points()))
                .collect(),
            mu: mu0,
            iteration: 0,
        }
    }

    /// Multiplier ascent for every feature followed by `mu <- min(rho mu, mu_max)`.
    /// Returns the residual norms of the current primal iterate.
    pub fn update_multipliers(
        &mut self,
        xs: &[&DMatrix<f64>],
        affine: bool,
        rho: f64,
        mu_max: f64,
    ) -> Vec<Residuals> {
        let mu = self.mu;
        let res = self
            .vars
            .iter_mut()
            .zip(xs)
            .map(|(v, x)| v.ascend(x, mu, affine))
            .collect();
        self.mu = (rho * mu).min(mu_max);
        res
    }
}

/// Value of the augmented Lagrangian at `state` (with its current `mu`).
pub fn augmented_lagrangian(
    state: &AdmmState,
    xs: &[&DMatrix<f64>],
    thetas: &[DMatrix<f64>],
    lambdas: &[f64],
    alpha: f64,
    beta: f64,
    affine: bool,
) -> Result<f64> {
    let mu = state.mu;
    let mut total = 0.0;
    for (((v, x), theta), &lambda) in state.vars.iter().zip(xs).zip(thetas).zip(lambdas) {
        let r = v.residual_matrices(x, affine);
        total += structured_l1(&v.j, theta, alpha)?;
        total += lambda * v.e.iter().map(|e| e.abs()).sum::<f64>();
        total += v.y1.dot(&r.data) + v.y2.dot(&r.split) + v.y3.dot(&r.coupling);
        let mut sq = r.data.norm_squared() + r.split.norm_squared() + r.coupling.norm_squared();
        if let Some(a) = &r.affine {
            total += v.y4.dot(a);
            sq += a.norm_squared();
        }
        total += 0.5 * mu * sq;
    }
    let zs: Vec<DMatrix<f64>> = state.vars.iter().map(|v| v.z.clone()).collect();
    Ok(total + beta * stacked_l21(&zs))
}

#[derive(Debug, Clone)]
pub struct FeatureSolution {
    pub z: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub residuals: Residuals,
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub features: Vec<FeatureSolution>,
    pub iterations_used: usize,
    pub converged: bool,
    pub lambdas: Vec<f64>,
}

impl InnerSolution {
    pub fn z_list(&self) -> Vec<DMatrix<f64>> {
        self.features.iter().map(|f| f.z.clone()).collect()
    }

    pub fn worst_residuals(&self) -> Residuals {
        Residuals::worst(self.features.iter().map(|f| f.residuals))
    }
}

/// Inner solver bound to a fixed set of features. Factorizations and noise
/// weights are computed once and reused across solves.
#[derive(Debug, Clone)]
pub struct InnerSolver<'a> {
    features: &'a [FeatureMatrix],
    factors: Vec<SystemFactor>,
    lambdas: Vec<f64>,
    config: SolverConfig,
}

impl<'a> InnerSolver<'a> {
    pub fn new(features: &'a [FeatureMatrix], config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        shared_num_points(features)?;
        let factors = features
            .iter()
            .map(|f| precompute_system(f.data(), config.affine_constraint))
            .collect::<Result<_>>()?;
        let lambdas = features
            .iter()
            .map(|f| derive_lambda(f, config.lambda_scale))
            .collect::<Result<_>>()?;
        Ok(Self {
            features,
            factors,
            lambdas,
            config: config.clone(),
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn solve(&self, thetas: &[DMatrix<f64>]) -> Result<InnerSolution> {
        let cfg = &self.config;
        let affine = cfg.affine_constraint;
        if thetas.len() != self.features.len() {
            return Err(Error::LengthMismatch(self.features.len(), thetas.len()));
        }
        let n = self.features[0].num_points();
        for t in thetas {
            check_square(t, n, "Theta")?;
        }
        let xs: Vec<&DMatrix<f64>> = self.features.iter().map(|f| f.data()).collect();

        let mut state = AdmmState::zeros(self.features, cfg.mu0);
        let mut residuals: Vec<Residuals> = state
            .vars
            .iter()
            .zip(&xs)
            .map(|(v, x)| v.residuals(x, affine))
            .collect();
        let mut converged = false;

        while state.iteration < cfg.max_inner {
            let mu = state.mu;
            for (k, v) in state.vars.iter_mut().enumerate() {
                v.j = update_j(&v.c, &v.y2, &v.z, &v.y3, &thetas[k], cfg.alpha, mu)?;
                v.c = update_c(&self.factors[k], xs[k], &v.e, &v.y1, &v.j, &v.y2, &v.y4, mu)?;
                v.e = update_e(xs[k], &v.c, &v.y1, self.lambdas[k], mu);
            }
            let js: Vec<DMatrix<f64>> = state.vars.iter().map(|v| v.j.clone()).collect();
            let y3s: Vec<DMatrix<f64>> = state.vars.iter().map(|v| v.y3.clone()).collect();
            let zs = update_z_joint(&js, &y3s, cfg.beta, mu)?;
            for (v, z) in state.vars.iter_mut().zip(zs) {
                v.z = z;
            }
            residuals = state.update_multipliers(&xs, affine, cfg.rho, cfg.mu_max);
            state.iteration += 1;

            if !residuals.iter().all(Residuals::is_finite)
                || !state.vars.iter().all(FeatureVars::is_finite)
            {
                return Err(Error::NumericalFailure(format!(
                    "non-finite ADMM iterate at iteration {}",
                    state.iteration
                )));
            }
            if residuals.iter().all(|r| r.all_below(cfg.eps_inner)) {
                converged = true;
                break;
            }
        }

        Ok(InnerSolution {
            features: state
                .vars
                .into_iter()
                .zip(residuals)
                .map(|(v, residuals)| FeatureSolution {
                    z: v.z,
                    c: v.c,
                    e: v.e,
                    residuals,
                })
                .collect(),
            iterations_used: state.iteration,
            converged,
            lambdas: self.lambdas.clone(),
        })
    }
}

/// One-shot convenience wrapper around [`InnerSolver`].
pub fn solve_inner(
    features: &[FeatureMatrix],
    thetas: &[DMatrix<f64>],
    config: &SolverConfig,
) -> Result<InnerSolution> {
    InnerSolver::new(features, config)?.solve(thetas)
}
