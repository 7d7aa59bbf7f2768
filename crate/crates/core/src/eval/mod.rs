//! Pointcloud-sequence and long-term scene-flow metrics.
//!
//! Distances inside the geometry are meters; reported Chamfer and trajectory errors
//! are millimeters, F-scores and precisions are percentages.
use alloc::format;
use alloc::vec::Vec;

use crate::align::{umeyama_similarity, CorrespondenceSet};
use crate::corr::{flying_pixel_mask, sample_point, TrackSet};
use crate::sum::CompensatedSum;
use crate::{CloudSequence, DepthMap, Error, PoseSE3, Result, SimTransform, Vec3};

pub mod knn;

use knn::KdTree;

/// F-score thresholds of record, in centimeters.
pub const FSCORE_THRESHOLDS_CM: [f64; 3] = [1.0, 2.5, 5.0];
/// Trajectory precision thresholds, in centimeters.
pub const PRECISION_THRESHOLDS_CM: [f64; 2] = [5.0, 10.0];

/// A 3D point trajectory over `T` frames. Positions are meaningful only where visible.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory3D {
    pub positions: Vec<Vec3>,
    pub visible: Vec<bool>,
}

impl Trajectory3D {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Whichever suites were run; absent metrics serialize as `null`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub cd_mm: Option<f64>,
    pub f1: Option<f64>,
    pub f2_5: Option<f64>,
    pub f5: Option<f64>,
    pub ade_mm: Option<f64>,
    pub fde_mm: Option<f64>,
    pub p5: Option<f64>,
    pub p10: Option<f64>,
}

impl MetricReport {
    pub fn with_clouds(mut self, m: &CloudMetrics) -> Self {
        self.cd_mm = Some(m.cd_mm);
        self.f1 = Some(m.f1);
        self.f2_5 = Some(m.f2_5);
        self.f5 = Some(m.f5);
        self
    }

    pub fn with_flow(mut self, m: &FlowMetrics) -> Self {
        self.ade_mm = Some(m.ade_mm);
        self.fde_mm = Some(m.fde_mm);
        self.p5 = Some(m.p5);
        self.p10 = Some(m.p10);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AlignMode {
    /// One similarity over every frame.
    Global,
    /// One similarity fitted on the first frame only.
    FirstFrame,
}

impl AlignMode {
    pub fn name(self) -> &'static str {
        match self {
            AlignMode::Global => "global",
            AlignMode::FirstFrame => "first-frame",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "global" => Ok(AlignMode::Global),
            "first-frame" => Ok(AlignMode::FirstFrame),
            other => Err(Error::InvalidParameter(format!("unknown alignment mode {other:?}"))),
        }
    }
}

fn check_pairing(pred: &CloudSequence, gt: &CloudSequence) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::CountMismatch {
            context: "predicted vs ground-truth frames",
            left: pred.len(),
            right: gt.len(),
        });
    }
    for (t, (p, g)) in pred.frames.iter().zip(&gt.frames).enumerate() {
        g.points.expect_dims(&p.points, "evaluated frame").map_err(|e| e.in_frame(t))?;
    }
    Ok(())
}

/// Similarity taking `pred` onto `gt`, fitted over pixelwise correspondences of all
/// jointly valid pixels (every frame, or the first frame only).
pub fn align_for_eval(pred: &CloudSequence, gt: &CloudSequence, mode: AlignMode) -> Result<SimTransform> {
    check_pairing(pred, gt)?;
    let frames = match mode {
        AlignMode::Global => pred.len(),
        AlignMode::FirstFrame => pred.len().min(1),
    };
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for t in 0..frames {
        let (p, g) = (&pred.frames[t], &gt.frames[t]);
        for i in 0..p.points.len() {
            if p.valid.as_slice()[i] && g.valid.as_slice()[i] {
                src.push(p.points.as_slice()[i]);
                dst.push(g.points.as_slice()[i]);
            }
        }
    }
    umeyama_similarity(&CorrespondenceSet::uniform(src, dst)?, true)
}

/// Every point and pose of `seq` mapped through `sim`.
pub fn apply_similarity(seq: &CloudSequence, sim: &SimTransform) -> CloudSequence {
    CloudSequence {
        frames: seq.frames.iter().map(|f| f.map_points(|p| sim.apply(p))).collect(),
        poses: seq.poses.iter().map(|p| sim.transform_pose(p)).collect(),
        intrinsics: seq.intrinsics,
    }
}

fn non_empty(pred: &[Vec3], gt: &[Vec3]) -> Result<()> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::InsufficientSupport { found: 0, required: 1 });
    }
    Ok(())
}

/// Nearest-neighbor distance from every point of `from` into `to`.
fn nearest_distances(from: &[Vec3], to: &KdTree) -> Vec<f64> {
    from.iter().map(|p| to.nearest(p).map_or(f64::INFINITY, |n| n.distance)).collect()
}

fn mean(values: &[f64]) -> f64 {
    let s: CompensatedSum = values.iter().copied().sum();
    s.value() / values.len() as f64
}

/// Symmetric Chamfer distance in millimeters: the mean nearest-neighbor distance from
/// `gt` to `pred` plus the mean from `pred` to `gt`.
pub fn chamfer_mm(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    non_empty(pred, gt)?;
    let to_gt = nearest_distances(pred, &KdTree::new(gt));
    let to_pred = nearest_distances(gt, &KdTree::new(pred));
    Ok(1000.0 * (mean(&to_pred) + mean(&to_gt)))
}

fn percent_within(distances: &[f64], delta: f64) -> f64 {
    100.0 * distances.iter().filter(|&&d| d < delta).count() as f64 / distances.len() as f64
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn check_delta(delta_cm: f64) -> Result<f64> {
    if !(delta_cm > 0.0) || !delta_cm.is_finite() {
        return Err(Error::InvalidParameter(format!("F-score threshold must be positive, got {delta_cm} cm")));
    }
    Ok(delta_cm / 100.0)
}

/// F-score (percent) at `delta_cm`: harmonic mean of the share of `pred` within δ of
/// `gt` and the share of `gt` within δ of `pred`.
pub fn fscore(pred: &[Vec3], gt: &[Vec3], delta_cm: f64) -> Result<f64> {
    let delta = check_delta(delta_cm)?;
    non_empty(pred, gt)?;
    let precision = percent_within(&nearest_distances(pred, &KdTree::new(gt)), delta);
    let recall = percent_within(&nearest_distances(gt, &KdTree::new(pred)), delta);
    Ok(harmonic(precision, recall))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CloudMetrics {
    pub cd_mm: f64,
    pub f1: f64,
    pub f2_5: f64,
    pub f5: f64,
}

/// Chamfer and the three F-scores of record, sharing one pair of nearest-neighbor passes.
pub fn cloud_metrics(pred: &[Vec3], gt: &[Vec3]) -> Result<CloudMetrics> {
    non_empty(pred, gt)?;
    let to_gt = nearest_distances(pred, &KdTree::new(gt));
    let to_pred = nearest_distances(gt, &KdTree::new(pred));
    let f = |cm: f64| harmonic(percent_within(&to_gt, cm / 100.0), percent_within(&to_pred, cm / 100.0));
    let [a, b, c] = FSCORE_THRESHOLDS_CM;
    Ok(CloudMetrics { cd_mm: 1000.0 * (mean(&to_pred) + mean(&to_gt)), f1: f(a), f2_5: f(b), f5: f(c) })
}

/// Per-frame [`cloud_metrics`] between two already aligned sequences.
pub fn per_frame_metrics(pred: &CloudSequence, gt: &CloudSequence) -> Result<Vec<CloudMetrics>> {
    check_pairing(pred, gt)?;
    pred.frames
        .iter()
        .zip(&gt.frames)
        .enumerate()
        .map(|(t, (p, g))| cloud_metrics(&p.valid_points(), &g.valid_points()).map_err(|e| e.in_frame(t)))
        .collect()
}

/// Frame-averaged cloud metrics of two already aligned sequences.
pub fn sequence_metrics(pred: &CloudSequence, gt: &CloudSequence) -> Result<CloudMetrics> {
    let frames = per_frame_metrics(pred, gt)?;
    let avg = |f: fn(&CloudMetrics) -> f64| mean(&frames.iter().map(f).collect::<Vec<_>>());
    Ok(CloudMetrics { cd_mm: avg(|m| m.cd_mm), f1: avg(|m| m.f1), f2_5: avg(|m| m.f2_5), f5: avg(|m| m.f5) })
}

/// 3D trajectories obtained by sampling the sequence at every visible track position.
/// Samples on invalid points, and frames beyond the sequence, are not visible.
pub fn recover_scene_flow(seq: &CloudSequence, tracks: &TrackSet) -> Vec<Trajectory3D> {
    (0..tracks.num_tracks)
        .map(|n| {
            let mut traj = Trajectory3D {
                positions: Vec::with_capacity(tracks.num_frames),
                visible: Vec::with_capacity(tracks.num_frames),
            };
            for t in 0..tracks.num_frames {
                let p = tracks
                    .position(n, t)
                    .and_then(|xy| seq.frames.get(t).and_then(|cloud| sample_point(cloud, xy[0], xy[1])));
                traj.positions.push(p.unwrap_or_else(Vec3::zeros));
                traj.visible.push(p.is_some());
            }
            traj
        })
        .collect()
}

/// Drops tracks whose query-frame position lies on a pixel zeroed by the flying-pixel
/// mask of the ground-truth depth, or outside the image. Returns the kept tracks and
/// their indices in `tracks`.
pub fn filter_flying_tracks(
    tracks: &TrackSet,
    gt_depth: &[DepthMap],
    rel_threshold: f64,
) -> Result<(TrackSet, Vec<usize>)> {
    let q = tracks.query_frame;
    let depth = gt_depth.get(q).ok_or_else(|| {
        Error::InvalidParameter(format!("query frame {q} has no ground-truth depth ({} frames)", gt_depth.len()))
    })?;
    let mask = flying_pixel_mask(depth, rel_threshold)?;
    let (w, h) = mask.dims();
    let kept: Vec<usize> = (0..tracks.num_tracks)
        .filter(|&n| {
            let [x, y] = tracks.positions[n * tracks.num_frames + q];
            if !(x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64) {
                return false;
            }
            mask.get(y as usize, x as usize) > 0.0
        })
        .collect();
    Ok((tracks.select(&kept), kept))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowMetrics {
    pub ade_mm: f64,
    pub fde_mm: f64,
    pub p5: f64,
    pub p10: f64,
    /// Trajectories with at least one jointly visible step.
    pub evaluated: usize,
}

/// Trajectory errors over the steps where both prediction and ground truth are
/// visible. ADE averages each trajectory's mean per-step distance; FDE uses the last
/// jointly visible step; `P_δ` is the share of trajectories whose mean error is below
/// δ. Trajectories with no jointly visible step are skipped.
pub fn flow_metrics(pred: &[Trajectory3D], gt: &[Trajectory3D]) -> Result<FlowMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::CountMismatch {
            context: "predicted vs ground-truth trajectories",
            left: pred.len(),
            right: gt.len(),
        });
    }
    let mut mean_errors = Vec::with_capacity(pred.len());
    let mut final_errors = Vec::with_capacity(pred.len());
    for (n, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.len() != g.len() {
            return Err(Error::InvalidParameter(format!(
                "trajectory {n} has {} predicted and {} ground-truth steps",
                p.len(),
                g.len()
            )));
        }
        let errors: Vec<f64> = (0..p.len())
            .filter(|&t| p.visible[t] && g.visible[t])
            .map(|t| (p.positions[t] - g.positions[t]).norm())
            .collect();
        if let Some(&last) = errors.last() {
            mean_errors.push(mean(&errors));
            final_errors.push(last);
        }
    }
    if mean_errors.is_empty() {
        return Err(Error::InsufficientSupport { found: 0, required: 1 });
    }
    let [p5, p10] = PRECISION_THRESHOLDS_CM.map(|cm| percent_within(&mean_errors, cm / 100.0));
    Ok(FlowMetrics {
        ade_mm: 1000.0 * mean(&mean_errors),
        fde_mm: 1000.0 * mean(&final_errors),
        p5,
        p10,
        evaluated: mean_errors.len(),
    })
}

/// Every position of every trajectory mapped through `sim`.
pub fn transform_trajectories(trajectories: &[Trajectory3D], sim: &SimTransform) -> Vec<Trajectory3D> {
    trajectories
        .iter()
        .map(|t| Trajectory3D {
            positions: t.positions.iter().map(|p| sim.apply(p)).collect(),
            visible: t.visible.clone(),
        })
        .collect()
}

/// Diagonal of the bounding box of all valid points.
pub fn scene_diameter(seq: &CloudSequence) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in seq.frames.iter().flat_map(|f| f.valid_points()) {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    if lo.x > hi.x {
        0.0
    } else {
        (hi - lo).norm()
    }
}

/// Absolute trajectory error: RMSE of camera centers after the best similarity
/// alignment of `pred` onto `gt`.
pub fn trajectory_ate(pred: &[PoseSE3], gt: &[PoseSE3]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::CountMismatch {
            context: "predicted vs ground-truth poses",
            left: pred.len(),
            right: gt.len(),
        });
    }
    let src: Vec<Vec3> = pred.iter().map(|p| p.center()).collect();
    let dst: Vec<Vec3> = gt.iter().map(|p| p.center()).collect();
    let sim = umeyama_similarity(&CorrespondenceSet::uniform(src.clone(), dst.clone())?, true)?;
    let sq: CompensatedSum = src.iter().zip(&dst).map(|(s, d)| (sim.apply(s) - d).norm_squared()).sum();
    Ok(num_traits::Float::sqrt(sq.value() / src.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_cloud, random_points, random_pose};
    use crate::{CameraIntrinsics, FrameCloud, Grid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_nearest(p: &Vec3, set: &[Vec3]) -> f64 {
        set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
    }

    fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let ab: f64 = a.iter().map(|p| brute_nearest(p, b)).sum::<f64>() / a.len() as f64;
        let ba: f64 = b.iter().map(|p| brute_nearest(p, a)).sum::<f64>() / b.len() as f64;
        1000.0 * (ab + ba)
    }

    fn brute_fscore(a: &[Vec3], b: &[Vec3], cm: f64) -> f64 {
        let d = cm / 100.0;
        let p = 100.0 * a.iter().filter(|x| brute_nearest(x, b) < d).count() as f64 / a.len() as f64;
        let r = 100.0 * b.iter().filter(|x| brute_nearest(x, a) < d).count() as f64 / b.len() as f64;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn sequence(rng: &mut impl Rng, frames: usize) -> CloudSequence {
        let k = CameraIntrinsics::new(4.0, 4.0, 3.0, 2.0, 6, 4).unwrap();
        CloudSequence {
            frames: (0..frames).map(|_| random_cloud(rng, 6, 4)).collect(),
            poses: (0..frames).map(|_| random_pose(rng)).collect(),
            intrinsics: k,
        }
    }

    #[test]
    fn chamfer_examples() {
        let a = [Vec3::zeros()];
        let b = [Vec3::new(0.0, 0.0, 0.003)];
        assert!((chamfer_mm(&a, &b).unwrap() - 6.0).abs() < 1e-9);
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let pts = random_points(&mut rng, 100);
        assert_eq!(chamfer_mm(&pts, &pts).unwrap(), 0.0);
        assert!(chamfer_mm(&[], &pts).is_err());
    }

    #[test]
    fn metrics_match_exhaustive_oracles() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        for _ in 0..8 {
            let n = rng.random_range(1..500);
            let m = rng.random_range(1..500);
            let a: Vec<Vec3> = random_points(&mut rng, n).iter().map(|p| p * 0.1).collect();
            let b: Vec<Vec3> = random_points(&mut rng, m).iter().map(|p| p * 0.1).collect();
            assert!((chamfer_mm(&a, &b).unwrap() - brute_chamfer(&a, &b)).abs() < 1e-9);
            for cm in FSCORE_THRESHOLDS_CM {
                assert!((fscore(&a, &b, cm).unwrap() - brute_fscore(&a, &b, cm)).abs() < 1e-9);
            }
            let m = cloud_metrics(&a, &b).unwrap();
            assert_eq!(m.cd_mm, chamfer_mm(&a, &b).unwrap());
            assert_eq!(m.f2_5, fscore(&a, &b, 2.5).unwrap());
        }
    }

    #[test]
    fn fscore_examples() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let pts = random_points(&mut rng, 50);
        assert_eq!(fscore(&pts, &pts, 1.0).unwrap(), 100.0);
        let far: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(10.0, 0.0, 0.0)).collect();
        assert_eq!(fscore(&pts, &far, 5.0).unwrap(), 0.0);
        assert!(fscore(&pts, &pts, 0.0).is_err());
    }

    #[test]
    fn alignment_examples() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let gt = sequence(&mut rng, 3);
        let id = align_for_eval(&gt, &gt, AlignMode::Global).unwrap();
        assert!((id.scale - 1.0).abs() < 1e-9 && id.translation.norm() < 1e-9);
        let q = random_pose(&mut rng);
        let sim = SimTransform::new(2.5, q.rotation, q.translation);
        let pred = apply_similarity(&gt, &sim);
        for mode in [AlignMode::Global, AlignMode::FirstFrame] {
            let back = align_for_eval(&pred, &gt, mode).unwrap();
            let inv = sim.inverse();
            assert!((back.scale - inv.scale).abs() < 1e-9);
            assert!((back.rotation - inv.rotation).norm() < 1e-9);
            assert!((back.translation - inv.translation).norm() < 1e-9);
        }
        let single = sequence(&mut rng, 1);
        let moved = apply_similarity(&single, &sim);
        assert_eq!(
            align_for_eval(&moved, &single, AlignMode::Global).unwrap(),
            align_for_eval(&moved, &single, AlignMode::FirstFrame).unwrap()
        );
        let short = sequence(&mut rng, 2);
        assert!(matches!(
            align_for_eval(&short, &gt, AlignMode::Global),
            Err(Error::CountMismatch { left: 2, right: 3, .. })
        ));
    }

    fn trajectories(rng: &mut impl Rng, n: usize, t: usize) -> Vec<Trajectory3D> {
        (0..n)
            .map(|_| Trajectory3D {
                positions: random_points(rng, t),
                visible: (0..t).map(|_| rng.random_bool(0.8)).collect(),
            })
            .collect()
    }

    #[test]
    fn flow_metric_examples() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let gt = trajectories(&mut rng, 20, 6);
        let same = flow_metrics(&gt, &gt).unwrap();
        assert_eq!((same.ade_mm, same.fde_mm, same.p5, same.p10), (0.0, 0.0, 100.0, 100.0));
        let shifted =
            transform_trajectories(&gt, &SimTransform::new(1.0, crate::Mat3::identity(), Vec3::new(0.0, 0.003, 0.0)));
        let m = flow_metrics(&shifted, &gt).unwrap();
        assert!((m.ade_mm - 3.0).abs() < 1e-9 && (m.fde_mm - 3.0).abs() < 1e-9);
        assert_eq!(m.p5, 100.0);
        assert!(flow_metrics(&[], &[]).is_err());
    }

    #[test]
    fn flow_metrics_match_a_direct_formula() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        let gt = trajectories(&mut rng, 40, 8);
        let pred: Vec<Trajectory3D> = gt
            .iter()
            .map(|t| Trajectory3D {
                positions: t.positions.iter().map(|p| p + random_points(&mut rng, 1)[0] * 0.08).collect(),
                visible: t.visible.iter().map(|&v| v && rng.random_bool(0.9)).collect(),
            })
            .collect();
        let got = flow_metrics(&pred, &gt).unwrap();
        let (mut ade, mut fde, mut p5, mut p10, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, g) in pred.iter().zip(&gt) {
            let mut sum = 0.0;
            let mut count = 0.0;
            let mut last = None;
            for t in 0..p.positions.len() {
                if p.visible[t] && g.visible[t] {
                    let e = ((p.positions[t].x - g.positions[t].x).powi(2)
                        + (p.positions[t].y - g.positions[t].y).powi(2)
                        + (p.positions[t].z - g.positions[t].z).powi(2))
                    .sqrt();
                    sum += e;
                    count += 1.0;
                    last = Some(e);
                }
            }
            if let Some(last) = last {
                let e = sum / count;
                ade += e;
                fde += last;
                p5 += if e < 0.05 { 1.0 } else { 0.0 };
                p10 += if e < 0.10 { 1.0 } else { 0.0 };
                n += 1.0;
            }
        }
        assert_eq!(got.evaluated, n as usize);
        assert!((got.ade_mm - 1000.0 * ade / n).abs() < 1e-9);
        assert!((got.fde_mm - 1000.0 * fde / n).abs() < 1e-9);
        assert!((got.p5 - 100.0 * p5 / n).abs() < 1e-9);
        assert!((got.p10 - 100.0 * p10 / n).abs() < 1e-9);
    }

    #[test]
    fn scene_flow_of_a_fixed_pixel_is_its_point() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let seq = sequence(&mut rng, 1);
        let tracks = TrackSet::new(1, 1, alloc::vec![[2.5, 1.5]], alloc::vec![true], 0).unwrap();
        let traj = recover_scene_flow(&seq, &tracks);
        assert_eq!(traj[0].positions[0], seq.frames[0].points[(1, 2)]);
        assert!(traj[0].visible[0]);
        let hidden = TrackSet::new(1, 1, alloc::vec![[2.5, 1.5]], alloc::vec![false], 0).unwrap();
        assert!(!recover_scene_flow(&seq, &hidden)[0].visible[0]);
    }

    #[test]
    fn flying_track_filter_examples() {
        let flat = DepthMap::new(Grid::filled(8, 8, 2.0));
        let positions: Vec<[f64; 2]> = (0..8).map(|k| [k as f64 + 0.5, 3.5]).collect();
        let tracks = TrackSet::new(8, 1, positions, alloc::vec![true; 8], 0).unwrap();
        let (kept, idx) = filter_flying_tracks(&tracks, &[flat], 0.05).unwrap();
        assert_eq!(kept.num_tracks, 8);
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
        let step = DepthMap::new(Grid::from_fn(8, 8, |_, c| if c < 4 { 1.0 } else { 3.0 }));
        let (kept, idx) = filter_flying_tracks(&tracks, &[step], 0.05).unwrap();
        assert_eq!(idx, alloc::vec![0, 1, 2, 5, 6, 7]);
        assert_eq!(kept.num_tracks, 6);
    }

    #[test]
    fn diameter_and_ate() {
        let k = CameraIntrinsics::new(1.0, 1.0, 1.0, 0.5, 2, 1).unwrap();
        let cloud = FrameCloud::new(
            Grid::from_vec(2, 1, alloc::vec![Vec3::zeros(), Vec3::new(1.0, 2.0, 2.0)]).unwrap(),
            Grid::filled(2, 1, true),
        )
        .unwrap();
        let seq = CloudSequence { frames: alloc::vec![cloud], poses: alloc::vec![PoseSE3::identity()], intrinsics: k };
        assert!((scene_diameter(&seq) - 3.0).abs() < 1e-12);
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let poses: Vec<PoseSE3> = (0..6).map(|_| random_pose(&mut rng)).collect();
        let q = random_pose(&mut rng);
        let sim = SimTransform::new(0.3, q.rotation, q.translation);
        let moved: Vec<PoseSE3> = poses.iter().map(|p| sim.transform_pose(p)).collect();
        assert!(trajectory_ate(&moved, &poses).unwrap() < 1e-9);
    }

    fn cloud_strategy() -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..60)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z) * 0.05).collect())
    }

    proptest! {
        #[test]
        fn chamfer_is_symmetric(a in cloud_strategy(), b in cloud_strategy()) {
            prop_assert!((chamfer_mm(&a, &b).unwrap() - chamfer_mm(&b, &a).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn fscore_grows_with_the_threshold(a in cloud_strategy(), b in cloud_strategy(), d in 0.1..5.0f64, extra in 0.0..5.0f64) {
            prop_assert!(fscore(&a, &b, d).unwrap() <= fscore(&a, &b, d + extra).unwrap());
        }

        #[test]
        fn metrics_ignore_a_joint_rigid_motion(a in cloud_strategy(), b in cloud_strategy(), seed in 0u64..1000) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let p = random_pose(&mut rng);
            let ma: Vec<Vec3> = a.iter().map(|x| p.apply(x)).collect();
            let mb: Vec<Vec3> = b.iter().map(|x| p.apply(x)).collect();
            prop_assert!((chamfer_mm(&a, &b).unwrap() - chamfer_mm(&ma, &mb).unwrap()).abs() < 1e-9);
            let before = cloud_metrics(&a, &b).unwrap();
            let after = cloud_metrics(&ma, &mb).unwrap();
            // Points sitting exactly on a threshold could flip; the generator makes that measure-zero.
            prop_assert_eq!((before.f1, before.f2_5, before.f5), (after.f1, after.f2_5, after.f5));
        }

        #[test]
        fn alignment_absorbs_a_similarity(seed in 0u64..500, scale in 0.2..5.0f64) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let gt = sequence(&mut rng, 2);
            let noisy = CloudSequence {
                frames: gt.frames.iter().map(|f| f.map_points(|p| p + random_points(&mut rng, 1)[0] * 0.01)).collect(),
                ..gt.clone()
            };
            let q = random_pose(&mut rng);
            let moved = apply_similarity(&noisy, &SimTransform::new(scale, q.rotation, q.translation));
            let eval = |pred: &CloudSequence| {
                let sim = align_for_eval(pred, &gt, AlignMode::Global).unwrap();
                sequence_metrics(&apply_similarity(pred, &sim), &gt).unwrap().cd_mm
            };
            prop_assert!((eval(&noisy) - eval(&moved)).abs() < 1e-6);
        }
    }
}
