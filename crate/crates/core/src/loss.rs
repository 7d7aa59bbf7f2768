//! Self-supervised consistency objectives and their weighted sum.
use alloc::format;
use alloc::vec::Vec;

use crate::align::{principal_scale, umeyama_similarity, CorrespondenceSet};
use crate::camera::CameraIntrinsics;
use crate::corr::{flow_pairs, sample_point, track_pairs, ConfidenceMask, FlowField, PixelPairs, TrackSet};
use crate::{Error, FrameCloud, PoseSE3, Result, SimTransform, Vec3};
// Float math for no_std builds; std, when linked anywhere in the graph, provides it inherently.
#[allow(unused_imports)]
use num_traits::Float;

/// Confidence clamp for the binary cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

/// Minimum number of positively weighted correspondences for a photometric term.
pub const MIN_SUPPORT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 4.0, beta: 5.0, gamma: 5.0, lambda: 1.0, mu: 0.005 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("loss weight {name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Raw values of the five terms, plus how many correspondences (or frames) fed each.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub shape: f64,
    pub flow: f64,
    pub track: f64,
    pub mask: f64,
    pub consistency: f64,
    pub counts: LossCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossCounts {
    pub shape: usize,
    pub flow: usize,
    pub track: usize,
    pub mask: usize,
    pub consistency: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub shape: f64,
    pub flow: f64,
    pub track: f64,
    pub mask: f64,
    pub consistency: f64,
    pub total: f64,
    pub counts: LossCounts,
}

impl LossReport {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.alpha * self.shape
            + w.beta * self.flow
            + w.gamma * self.track
            + w.lambda * self.mask
            + w.mu * self.consistency
    }
}

/// Correspondence source for [`photometric_3d_loss`].
#[derive(Debug, Clone, Copy)]
pub enum Correspondence<'a> {
    /// Dense flow from frame i to frame j.
    Flow(&'a FlowField),
    /// Track positions at two frames of a track set.
    Track { tracks: &'a TrackSet, frame_i: usize, frame_j: usize },
}

/// Scale-normalized 3D reprojection error between two frames:
/// `Σ w‖X_i − P_{j→i}·X_j^{←i}‖ / (F(X_j) · Σ w)`, where `F` is the principal scale
/// of all valid points of `cloud_j`. `mask` lives in frame i's pixel grid.
pub fn photometric_3d_loss(
    cloud_i: &FrameCloud,
    cloud_j: &FrameCloud,
    correspondence: Correspondence<'_>,
    mask: &ConfidenceMask,
    pose_ji: &PoseSE3,
) -> Result<f64> {
    let (w, h) = cloud_i.dims();
    let ones = ConfidenceMask::ones(w, h);
    let pairs = match correspondence {
        Correspondence::Flow(flow) => flow_pairs(flow, mask, &ones)?,
        Correspondence::Track { tracks, frame_i, frame_j } => track_pairs(tracks, frame_i, frame_j, mask, &ones)?,
    };
    let scale = principal_scale(&cloud_j.valid_points())?;
    pair_loss(cloud_i, cloud_j, &pairs, pose_ji, scale).map(|(l, _)| l)
}

/// Pairs resolved to 3D points; pairs that sample an invalid point are dropped.
#[derive(Debug, Clone, Default)]
pub struct PairSamples {
    pub a: Vec<Vec3>,
    pub b: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl PairSamples {
    pub fn resolve(cloud_i: &FrameCloud, cloud_j: &FrameCloud, pairs: &PixelPairs) -> Self {
        let mut out = PairSamples::default();
        for ((s, d), &w) in pairs.src.iter().zip(&pairs.dst).zip(&pairs.weights) {
            if let (Some(a), Some(b)) = (sample_point(cloud_i, s[0], s[1]), sample_point(cloud_j, d[0], d[1])) {
                out.a.push(a);
                out.b.push(b);
                out.weights.push(w);
            }
        }
        out
    }

    pub fn support(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Correspondences for a solve `a ≈ P·b`.
    pub fn correspondences(&self) -> Result<CorrespondenceSet> {
        CorrespondenceSet::new(self.b.clone(), self.a.clone(), self.weights.clone())
    }
}

/// Photometric loss on resolved pairs with the target-frame scale supplied.
/// Returns the loss and its support.
pub fn pair_loss(
    cloud_i: &FrameCloud,
    cloud_j: &FrameCloud,
    pairs: &PixelPairs,
    pose_ji: &PoseSE3,
    scale_j: f64,
) -> Result<(f64, usize)> {
    let samples = PairSamples::resolve(cloud_i, cloud_j, pairs);
    samples_loss(&samples, pose_ji, scale_j)
}

pub fn samples_loss(samples: &PairSamples, pose_ji: &PoseSE3, scale_j: f64) -> Result<(f64, usize)> {
    let support = samples.support();
    if support < MIN_SUPPORT {
        return Err(Error::InsufficientSupport { found: support, required: MIN_SUPPORT });
    }
    let mut num = crate::CompensatedSum::new();
    let mut mass = crate::CompensatedSum::new();
    for ((a, b), &w) in samples.a.iter().zip(&samples.b).zip(&samples.weights) {
        num += w * (a - pose_ji.apply(b)).norm();
        mass += w;
    }
    let loss = num.value() / (scale_j * mass.value());
    if !loss.is_finite() {
        return Err(Error::NonFinite { term: "photometric loss" });
    }
    Ok((loss, support))
}

/// Mean residual distance (meters) after the best similarity alignment of `cloud`
/// onto `reference`, over jointly valid pixels.
pub fn shape_loss(cloud: &FrameCloud, reference: &FrameCloud) -> Result<f64> {
    let (align, src, dst) = shape_alignment(cloud, reference)?;
    Ok(mean_residual(&align, &src, &dst))
}

/// The alignment used by [`shape_loss`] together with the jointly valid point pairs.
pub fn shape_alignment(cloud: &FrameCloud, reference: &FrameCloud) -> Result<(SimTransform, Vec<Vec3>, Vec<Vec3>)> {
    cloud.points.expect_dims(&reference.points, "shape_loss")?;
    let (src, dst) = joint_points(cloud, reference);
    if src.len() < MIN_SUPPORT {
        return Err(Error::InsufficientSupport { found: src.len(), required: MIN_SUPPORT });
    }
    let align = umeyama_similarity(&CorrespondenceSet::uniform(src.clone(), dst.clone())?, true)?;
    Ok((align, src, dst))
}

pub(crate) fn joint_points(a: &FrameCloud, b: &FrameCloud) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (i, (p, q)) in a.points.as_slice().iter().zip(b.points.as_slice()).enumerate() {
        if a.valid.as_slice()[i] && b.valid.as_slice()[i] {
            src.push(*p);
            dst.push(*q);
        }
    }
    (src, dst)
}

pub(crate) fn mean_residual(t: &SimTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    let sum: crate::CompensatedSum = src.iter().zip(dst).map(|(s, d)| (t.apply(s) - d).norm()).sum();
    sum.value() / src.len() as f64
}

/// Mean binary cross-entropy of `predicted` against the pseudo labels, with the
/// prediction clamped to `[ε, 1 − ε]`.
pub fn mask_bce_loss(predicted: &ConfidenceMask, pseudo: &ConfidenceMask) -> Result<f64> {
    predicted.values().expect_dims(pseudo.values(), "mask_bce_loss")?;
    let n = predicted.values().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: crate::CompensatedSum = predicted
        .values()
        .as_slice()
        .iter()
        .zip(pseudo.values().as_slice())
        .map(|(&p, &q)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(q * p.ln() + (1.0 - q) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum.value() / n as f64)
}

/// Frobenius norm of `K₁ − K₂`.
pub fn intrinsic_consistency_loss(k1: &CameraIntrinsics, k2: &CameraIntrinsics) -> Result<f64> {
    if (k1.width, k1.height) != (k2.width, k2.height) {
        return Err(Error::shape("intrinsic_consistency_loss", (k1.width, k1.height), (k2.width, k2.height)));
    }
    Ok((k1.matrix() - k2.matrix()).norm())
}

pub fn total_loss(terms: &LossTerms, weights: &LossWeights) -> Result<LossReport> {
    weights.validate()?;
    for (term, v) in [
        ("shape", terms.shape),
        ("flow", terms.flow),
        ("track", terms.track),
        ("mask", terms.mask),
        ("consistency", terms.consistency),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite { term });
        }
    }
    let mut report = LossReport {
        shape: terms.shape,
        flow: terms.flow,
        track: terms.track,
        mask: terms.mask,
        consistency: terms.consistency,
        total: 0.0,
        counts: terms.counts,
    };
    report.total = report.weighted_total(weights);
    Ok(report)
}
