//! Closed-form alignment of weighted 3D correspondences.
//!
//! Both solvers take the same route: weighted centroids, the centered
//! cross-covariance, and its SVD with the reflection removed by
//! `diag(1, 1, det(U·Vᵀ))`. Sums are accumulated in two passes (mean first,
//! then centered products).
use alloc::format;
use alloc::vec::Vec;
use nalgebra::SymmetricEigen;

use crate::{Degeneracy, Error, Mat3, PoseSE3, Result, SimTransform, Vec3};

/// Second singular value of the cross-covariance must exceed this fraction of the first.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Weighted point pairs for `dst ≈ T(src)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub src: Vec<Vec3>,
    pub dst: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn new(src: Vec<Vec3>, dst: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        if src.len() != dst.len() {
            return Err(Error::CountMismatch { context: "correspondence src/dst", left: src.len(), right: dst.len() });
        }
        if src.len() != weights.len() {
            return Err(Error::CountMismatch {
                context: "correspondence weights",
                left: src.len(),
                right: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "correspondence weight {w} is not a finite non-negative number"
            )));
        }
        if src.iter().chain(&dst).any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { term: "correspondence points" });
        }
        Ok(CorrespondenceSet { src, dst, weights })
    }

    pub fn uniform(src: Vec<Vec3>, dst: Vec<Vec3>) -> Result<Self> {
        let n = src.len();
        Self::new(src, dst, alloc::vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Number of pairs with positive weight.
    pub fn effective_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// `Σ wₖ‖dstₖ − T(srcₖ)‖²`.
    pub fn residual(&self, t: &SimTransform) -> f64 {
        self.iter().map(|(s, d, w)| w * (d - t.apply(s)).norm_squared()).sum()
    }

    fn iter(&self) -> impl Iterator<Item = (&Vec3, &Vec3, f64)> + '_ {
        self.src.iter().zip(&self.dst).zip(&self.weights).map(|((s, d), &w)| (s, d, w))
    }
}

struct Moments {
    src_mean: Vec3,
    dst_mean: Vec3,
    /// `Σ w (dst − μ_d)(src − μ_s)ᵀ / Σw`
    cross: Mat3,
    /// `Σ w ‖src − μ_s‖² / Σw`
    src_var: f64,
}

fn moments(c: &CorrespondenceSet) -> Result<Moments> {
    let found = c.effective_count();
    if found < 3 {
        return Err(Degeneracy::TooFewCorrespondences { found }.into());
    }
    let mut total = 0.0;
    let mut src_sum = Vec3::zeros();
    let mut dst_sum = Vec3::zeros();
    for (s, d, w) in c.iter().filter(|t| t.2 > 0.0) {
        total += w;
        src_sum += s * w;
        dst_sum += d * w;
    }
    let src_mean = src_sum / total;
    let dst_mean = dst_sum / total;
    let mut cross = Mat3::zeros();
    let mut src_var = 0.0;
    for (s, d, w) in c.iter().filter(|t| t.2 > 0.0) {
        let cs = s - src_mean;
        let cd = d - dst_mean;
        cross += (cd * cs.transpose()) * w;
        src_var += w * cs.norm_squared();
    }
    Ok(Moments { src_mean, dst_mean, cross: cross / total, src_var: src_var / total })
}

struct OrthogonalFactor {
    rotation: Mat3,
    /// `tr(D·S)` of the corrected decomposition.
    trace: f64,
}

fn orthogonal_factor(cross: &Mat3) -> Result<OrthogonalFactor> {
    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    // nalgebra does not sort singular values.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    let second = svd.singular_values[order[1]];
    if !(largest > 0.0) {
        return Err(Degeneracy::ZeroVariance.into());
    }
    if second <= RANK_TOLERANCE * largest {
        let row = v_t.row(order[1]);
        return Err(Degeneracy::RankDeficient { axis: [row[0], row[1], row[2]], ratio: second / largest }.into());
    }
    let mut fix = Mat3::identity();
    let det = (u * v_t).determinant();
    let smallest = order[2];
    if det < 0.0 {
        fix[(smallest, smallest)] = -1.0;
    }
    let mut trace = 0.0;
    for i in 0..3 {
        trace += svd.singular_values[i] * fix[(i, i)];
    }
    Ok(OrthogonalFactor { rotation: u * fix * v_t, trace })
}

/// Rigid `(R, t)` minimizing `Σ wₖ‖dstₖ − (R·srcₖ + t)‖²`.
pub fn weighted_procrustes(c: &CorrespondenceSet) -> Result<PoseSE3> {
    let m = moments(c)?;
    let f = orthogonal_factor(&m.cross)?;
    let translation = m.dst_mean - f.rotation * m.src_mean;
    Ok(PoseSE3 { rotation: f.rotation, translation })
}

/// Similarity `(s, R, T)` minimizing `Σ wₖ‖dstₖ − (s·R·srcₖ + T)‖²`.
/// With `with_scale = false` the scale is pinned to 1 and this is the rigid solve.
pub fn umeyama_similarity(c: &CorrespondenceSet, with_scale: bool) -> Result<SimTransform> {
    let m = moments(c)?;
    if !(m.src_var > 0.0) {
        return Err(Degeneracy::ZeroVariance.into());
    }
    let f = orthogonal_factor(&m.cross)?;
    let scale = if with_scale { f.trace / m.src_var } else { 1.0 };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Degeneracy::ZeroVariance.into());
    }
    let translation = m.dst_mean - f.rotation * m.src_mean * scale;
    Ok(SimTransform { scale, rotation: f.rotation, translation })
}

/// First principal direction of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxis {
    /// Standard deviation along `axis`.
    pub scale: f64,
    pub axis: Vec3,
    pub mean: Vec3,
}

/// Spread of a point set: standard deviation along its first principal axis
/// (square root of the largest eigenvalue of the population covariance).
pub fn principal_scale(points: &[Vec3]) -> Result<f64> {
    principal_axis(points).map(|a| a.scale)
}

pub fn principal_axis(points: &[Vec3]) -> Result<PrincipalAxis> {
    let (mean, cov) = covariance(points)?;
    let (largest, axis) = top_eigen(&cov)?;
    Ok(PrincipalAxis { scale: num_traits::Float::sqrt(largest), axis, mean })
}

/// Mean and population covariance of a point set.
pub fn covariance(points: &[Vec3]) -> Result<(Vec3, Mat3)> {
    if points.len() < 2 {
        return Err(Degeneracy::ZeroVariance.into());
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let cov = points.iter().fold(Mat3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    Ok((mean, cov))
}

/// Largest eigenvalue of a symmetric matrix and its unit eigenvector.
pub(crate) fn top_eigen(cov: &Mat3) -> Result<(f64, Vec3)> {
    let eig = SymmetricEigen::new(*cov);
    let (idx, &largest) =
        eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("three eigenvalues");
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Degeneracy::ZeroVariance.into());
    }
    Ok((largest, eig.eigenvectors.column(idx).into_owned()))
}
