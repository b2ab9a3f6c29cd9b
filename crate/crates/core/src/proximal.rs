//! Norms and shrinkage operators.

use nalgebra::DMatrix;

use crate::error::{dims, Error, Result};

/// Per-entry shrinkage thresholds, all finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatrix(DMatrix<f64>);

impl ThresholdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidSpec(
                "thresholds must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(entries))
    }

    pub fn uniform(nrows: usize, ncols: usize, tau: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(nrows, ncols, tau))
    }

    /// Composite thresholds `(1 + alpha * theta_ij) / mu` of the structured J-update.
    pub fn structured(theta: &DMatrix<f64>, alpha: f64, mu: f64) -> Result<Self> {
        Self::new(theta.map(|t| (1.0 + alpha * t) / mu))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `S_tau(v) = (|v| - tau)_+ sgn(v)`.
#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    let m = v.abs() - tau;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

pub fn elementwise_shrink(a: &DMatrix<f64>, t: &ThresholdMatrix) -> Result<DMatrix<f64>> {
    let t = t.entries();
    if a.shape() != t.shape() {
        return Err(Error::shape(dims(a), dims(t)));
    }
    Ok(a.zip_map(t, soft_threshold))
}

/// Shrinks every entry of `a` by the same threshold.
pub fn uniform_shrink(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    a.map(|v| soft_threshold(v, tau))
}

/// Scale factor applied to a group whose l2 norm is `norm`.
#[inline]
fn group_scale(norm: f64, tau: f64) -> f64 {
    if norm > tau {
        (norm - tau) / norm
    } else {
        0.0
    }
}

/// Proximal operator of `tau * sum_i ||p_{:,i}||_2`: each column is either
/// scaled by `(||p|| - tau) / ||p||` or zeroed.
pub fn group_column_shrink(p: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut out = p.clone();
    for mut col in out.column_iter_mut() {
        let s = group_scale(col.norm(), tau);
        col *= s;
    }
    out
}

/// Same operator on the stacked view of `K` equally shaped matrices, where
/// group `(i, j)` collects entry `(i, j)` of every matrix.
pub fn group_shrink_stacked(mats: &[DMatrix<f64>], tau: f64) -> Result<Vec<DMatrix<f64>>> {
    let Some(first) = mats.first() else {
        return Ok(Vec::new());
    };
    let shape = first.shape();
    if let Some(bad) = mats.iter().find(|m| m.shape() != shape) {
        return Err(Error::shape(dims(first), dims(bad)));
    }
    let mut out: Vec<DMatrix<f64>> = mats.to_vec();
    let len = first.len();
    for idx in 0..len {
        let norm = mats
            .iter()
            .map(|m| m.as_slice()[idx].powi(2))
            .sum::<f64>()
            .sqrt();
        let s = group_scale(norm, tau);
        for m in out.iter_mut() {
            m.as_mut_slice()[idx] *= s;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l21: f64,
    pub linf: f64,
}

pub fn norms(a: &DMatrix<f64>) -> Norms {
    Norms {
        l1: a.iter().map(|v| v.abs()).sum(),
        l21: a.column_iter().map(|c| c.norm()).sum(),
        linf: max_abs(a),
    }
}

/// Largest absolute entry (0 for an empty matrix).
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `||Z||_1 + alpha ||Theta .* Z||_1 = sum |z_ij| (1 + alpha theta_ij)`.
pub fn structured_l1(z: &DMatrix<f64>, theta: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    if z.shape() != theta.shape() {
        return Err(Error::shape(dims(z), dims(theta)));
    }
    Ok(z.iter()
        .zip(theta.iter())
        .map(|(z, t)| z.abs() * (1.0 + alpha * t))
        .sum())
}

/// `sum_{ij} ||((Z_1)_ij, ..., (Z_K)_ij)||_2` over the stacked view.
pub fn stacked_l21(mats: &[DMatrix<f64>]) -> f64 {
    let Some(first) = mats.first() else {
        return 0.0;
    };
    (0..first.len())
        .map(|idx| {
            mats.iter()
                .map(|m| m.as_slice()[idx].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}
