//! Per-scene refinement of depth scales and focal length against the total loss.
//!
//! The parameters are one log-scale per frame (frame 0 pinned at zero) and one
//! log-focal correction shared by the whole scene. Frame `t` is reconstructed as
//! `e^{σ_t} · d_t` unprojected with focal lengths `e^{φ} · f`, which in camera
//! coordinates is `e^{σ_t} · diag(e^{−φ}, e^{−φ}, 1) · X⁰_t` with `X⁰_t` the
//! unprojection of the input. Sampling is linear in the cloud, so every
//! correspondence is resolved once up front and re-scaled per evaluation.
//!
//! Each iteration alternates two blocks. First the closed-form quantities are
//! re-solved at the current parameters: camera poses by chained Procrustes and the
//! per-frame shape similarities by Umeyama. Then, with those held, one gradient step
//! is taken on the parameters, halving the step until the fully re-solved loss does
//! not increase.
use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

// Float math for no_std builds; std, when linked anywhere in the graph, provides it inherently.
#[allow(unused_imports)]
use num_traits::Float;

use crate::align::{covariance, top_eigen, umeyama_similarity, weighted_procrustes, CorrespondenceSet};
use crate::corr::{flow_pairs, track_pairs, ConfidenceMask, FlowField, DEFAULT_EDGE_THRESHOLD};
use crate::loss::{
    intrinsic_consistency_loss, mask_bce_loss, total_loss, LossCounts, LossReport, LossTerms, LossWeights, PairSamples,
    MIN_SUPPORT,
};
use crate::pose::PoseChain;
use crate::sum::CompensatedSum;
use crate::{
    assemble_global, unproject, CameraIntrinsics, CloudSequence, DepthMap, Error, FrameCloud, Mat3, PoseSE3, Result,
    SceneInputs, SimTransform, Vec3,
};

/// Backtracking gives up after this many halvings of the step.
pub const MAX_HALVINGS: usize = 20;

/// Residuals shorter than this fraction of the points they compare are treated as
/// exactly zero, where the norm has no gradient.
const KINK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RefineParams {
    /// Per-frame depth log-scales; entry 0 stays at zero.
    pub log_scales: Vec<f64>,
    /// Shared log correction of both focal lengths.
    pub log_focal: f64,
    pub max_iterations: usize,
    pub step_size: f64,
    /// Stop once an accepted step lowers the total by less than this fraction.
    pub tolerance: f64,
}

impl RefineParams {
    pub fn new(num_frames: usize) -> Self {
        RefineParams {
            log_scales: alloc::vec![0.0; num_frames],
            log_focal: 0.0,
            max_iterations: 200,
            step_size: 0.05,
            tolerance: 1e-7,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.log_scales.len()
    }

    pub fn validate(&self, num_frames: usize) -> Result<()> {
        if self.log_scales.len() != num_frames {
            return Err(Error::CountMismatch {
                context: "log-scales vs frames",
                left: num_frames,
                right: self.log_scales.len(),
            });
        }
        if self.log_scales.first() != Some(&0.0) {
            return Err(Error::InvalidParameter("frame 0 log-scale is pinned to 0".into()));
        }
        if !self.log_scales.iter().all(|s| s.is_finite()) || !self.log_focal.is_finite() {
            return Err(Error::InvalidParameter("refinement parameters must be finite".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.tolerance >= 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidParameter(format!("tolerance must be non-negative, got {}", self.tolerance)));
        }
        Ok(())
    }

    /// Optimized coordinates in gradient order: `[σ_1, …, σ_{T−1}, φ]`.
    pub fn free_parameters(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.log_scales[1..].to_vec();
        x.push(self.log_focal);
        x
    }

    /// Copy with the optimized coordinates replaced.
    pub fn with_free_parameters(&self, x: &[f64]) -> RefineParams {
        assert_eq!(x.len(), self.log_scales.len(), "one log-scale per frame after the first, plus the log-focal");
        let mut out = self.clone();
        out.log_scales[1..].copy_from_slice(&x[..x.len() - 1]);
        out.log_focal = x[x.len() - 1];
        out
    }

    /// Depth map of frame `t` after applying its scale.
    pub fn apply_depth(&self, t: usize, depth: &DepthMap) -> DepthMap {
        depth.scaled(self.log_scales[t].exp())
    }

    pub fn apply_intrinsics(&self, k: &CameraIntrinsics) -> CameraIntrinsics {
        k.with_focal_scale(self.log_focal.exp())
    }
}

/// Closed-form camera poses of a window: weighted Procrustes between each adjacent
/// pair over flow-induced 3D correspondences, chained into camera-to-world poses with
/// frame 0 at the identity. `flows[t]` maps frame `t` to `t + 1`; `masks` are per-frame
/// confidences.
pub fn solve_window_poses(
    clouds: &[FrameCloud],
    flows: &[FlowField],
    masks: &[ConfidenceMask],
) -> Result<Vec<PoseSE3>> {
    if clouds.len() < 2 {
        return Err(Error::InvalidParameter(format!("a pose solve needs at least 2 frames, got {}", clouds.len())));
    }
    if flows.len() + 1 != clouds.len() {
        return Err(Error::CountMismatch {
            context: "flows vs frames - 1",
            left: clouds.len() - 1,
            right: flows.len(),
        });
    }
    if masks.len() != clouds.len() {
        return Err(Error::CountMismatch { context: "masks vs frames", left: clouds.len(), right: masks.len() });
    }
    let mut chain = PoseChain::new(PoseSE3::identity());
    let mut poses = alloc::vec![PoseSE3::identity()];
    for t in 0..flows.len() {
        let relative = (|| {
            let pairs = flow_pairs(&flows[t], &masks[t], &masks[t + 1])?;
            let samples = PairSamples::resolve(&clouds[t], &clouds[t + 1], &pairs);
            weighted_procrustes(&samples.correspondences()?)
        })()
        .map_err(|e| e.in_pair(t, t + 1))?;
        poses.push(chain.push(&relative));
    }
    Ok(poses)
}

/// Central finite differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], epsilon: f64) -> Vec<f64> {
    assert!(epsilon > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + epsilon;
            let up = f(&probe);
            probe[k] = x[k] - epsilon;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// Correspondences of one frame pair resolved on the unscaled clouds.
#[derive(Debug, Clone)]
struct PairTerm {
    i: usize,
    j: usize,
    a: Vec<Vec3>,
    b: Vec<Vec3>,
    w: Vec<f64>,
    mass: f64,
}

#[derive(Debug, Clone)]
struct ShapeTerm {
    frame: usize,
    predicted: Vec<Vec3>,
    reference: Vec<Vec3>,
}

/// Quantities held fixed during a gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    /// Camera-to-world poses, frame 0 at the identity.
    pub poses: Vec<PoseSE3>,
    /// Per reference frame, the similarity taking the prediction onto the reference.
    pub shape: Vec<SimTransform>,
}

/// A scene prepared for repeated loss and gradient evaluation.
#[derive(Debug, Clone)]
pub struct RefineProblem {
    num_frames: usize,
    intrinsics: CameraIntrinsics,
    weights: LossWeights,
    flow: Vec<PairTerm>,
    track: Vec<PairTerm>,
    shape: Vec<ShapeTerm>,
    /// Population covariance of each unscaled frame cloud.
    covariances: Vec<Mat3>,
    mask: f64,
    mask_count: usize,
}

#[inline]
fn focal_diag(phi: f64) -> Vec3 {
    let k = (-phi).exp();
    Vec3::new(k, k, 1.0)
}

/// `J = diag(−1, −1, 0)`, the derivative of `diag(e^{−φ}, e^{−φ}, 1)` at `φ`, applied to `x`
/// already carrying that factor.
#[inline]
fn focal_tangent(x: &Vec3) -> Vec3 {
    Vec3::new(-x.x, -x.y, 0.0)
}

/// Derivative of `‖r‖` with respect to `r`: the unit residual, or zero at a kink.
/// With `smoothing > 0` it is the derivative of `√(‖r‖² + smoothing²)` instead.
#[inline]
fn unit(r: &Vec3, scale: f64, smoothing: f64) -> Vec3 {
    let n = r.norm();
    if smoothing > 0.0 {
        r / (n * n + smoothing * smoothing).sqrt()
    } else if n > KINK * scale {
        r / n
    } else {
        Vec3::zeros()
    }
}

struct Gradient<'a> {
    out: &'a mut [f64],
    smoothing: f64,
}

impl Gradient<'_> {
    fn scale(&mut self, t: usize, v: f64) {
        if t > 0 {
            self.out[t - 1] += v;
        }
    }

    fn focal(&mut self, v: f64) {
        let n = self.out.len();
        self.out[n - 1] += v;
    }
}

impl RefineProblem {
    pub fn new(inputs: &SceneInputs, weights: LossWeights) -> Result<Self> {
        inputs.validate()?;
        weights.validate()?;
        let n = inputs.num_frames();
        let k = inputs.intrinsics;
        let clouds: Vec<FrameCloud> = inputs.depths.iter().map(|d| unproject(d, &k)).collect::<Result<_>>()?;
        let masks = inputs.pseudo_masks(DEFAULT_EDGE_THRESHOLD)?;

        let pair = |i: usize, j: usize, samples: PairSamples| PairTerm {
            i,
            j,
            mass: samples.weights.iter().sum(),
            a: samples.a,
            b: samples.b,
            w: samples.weights,
        };
        let mut flow = Vec::with_capacity(n.saturating_sub(1));
        for t in 0..inputs.flows.len() {
            let pairs = flow_pairs(&inputs.flows[t], &masks[t], &masks[t + 1])?;
            flow.push(pair(t, t + 1, PairSamples::resolve(&clouds[t], &clouds[t + 1], &pairs)));
        }
        let mut track = Vec::new();
        if let Some(tracks) = &inputs.tracks {
            for t in 1..n {
                let pairs = track_pairs(tracks, 0, t, &masks[0], &masks[t])?;
                let samples = PairSamples::resolve(&clouds[0], &clouds[t], &pairs);
                if samples.support() >= MIN_SUPPORT {
                    track.push(pair(0, t, samples));
                }
            }
        }
        let mut shape = Vec::new();
        if let Some(refs) = &inputs.references {
            for (t, r) in refs.iter().enumerate() {
                let reference = unproject(r, &k)?;
                let (predicted, reference) = crate::loss::joint_points(&clouds[t], &reference);
                if predicted.len() >= MIN_SUPPORT {
                    shape.push(ShapeTerm { frame: t, predicted, reference });
                }
            }
        }
        let covariances = clouds
            .iter()
            .enumerate()
            .map(|(t, c)| covariance(&c.valid_points()).map(|(_, cov)| cov).map_err(|e| e.in_frame(t)))
            .collect::<Result<_>>()?;
        let mut mask = CompensatedSum::new();
        for m in &masks {
            mask += mask_bce_loss(m, m)?;
        }
        Ok(RefineProblem {
            num_frames: n,
            intrinsics: k,
            weights,
            flow,
            track,
            shape,
            covariances,
            mask: mask.value() / n as f64,
            mask_count: masks.iter().map(|m| m.values().len()).sum(),
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Length of the gradient: one log-scale per frame after the first, plus the log-focal.
    pub fn num_free_parameters(&self) -> usize {
        self.num_frames
    }

    fn check(&self, params: &RefineParams) -> Result<()> {
        params.validate(self.num_frames)
    }

    fn scaled(points: &[Vec3], sigma: f64, d: &Vec3) -> Vec<Vec3> {
        let e = sigma.exp();
        points.iter().map(|p| d.component_mul(p) * e).collect()
    }

    /// Re-solves poses and shape similarities at `params`.
    pub fn solve(&self, params: &RefineParams) -> Result<ClosedForm> {
        self.check(params)?;
        let d = focal_diag(params.log_focal);
        let s = &params.log_scales;
        let mut chain = PoseChain::new(PoseSE3::identity());
        let mut poses = alloc::vec![PoseSE3::identity()];
        for p in &self.flow {
            let set =
                CorrespondenceSet::new(Self::scaled(&p.b, s[p.j], &d), Self::scaled(&p.a, s[p.i], &d), p.w.clone())
                    .and_then(|c| weighted_procrustes(&c))
                    .map_err(|e| e.in_pair(p.i, p.j))?;
            poses.push(chain.push(&set));
        }
        let shape = self
            .shape
            .iter()
            .map(|t| {
                let c = CorrespondenceSet::uniform(Self::scaled(&t.predicted, s[t.frame], &d), t.reference.clone())?;
                umeyama_similarity(&c, true).map_err(|e| e.in_frame(t.frame))
            })
            .collect::<Result<_>>()?;
        Ok(ClosedForm { poses, shape })
    }

    /// Principal scale of frame `t` at the given parameters, and its derivative with
    /// respect to the log-focal.
    fn frame_scale(&self, t: usize, sigma: f64, d: &Vec3) -> Result<(f64, f64)> {
        let dm = Mat3::from_diagonal(d);
        let cov = dm * self.covariances[t] * dm * (2.0 * sigma).exp();
        let (lambda, v) = top_eigen(&cov).map_err(|e| e.in_frame(t))?;
        let f = lambda.sqrt();
        Ok((f, -f * (v.x * v.x + v.y * v.y)))
    }

    /// Photometric term of one pair; gradient contributions are scaled by `weight`.
    fn pair_term(
        &self,
        p: &PairTerm,
        params: &RefineParams,
        closed: &ClosedForm,
        grad: Option<(&mut Gradient<'_>, f64)>,
    ) -> Result<f64> {
        let d = focal_diag(params.log_focal);
        let (si, sj) = (params.log_scales[p.i].exp(), params.log_scales[p.j].exp());
        let pose = closed.poses[p.i].inverse().compose(&closed.poses[p.j]);
        let r = &pose.rotation;
        let (f, df_phi) = self.frame_scale(p.j, params.log_scales[p.j], &d)?;

        let mut num = CompensatedSum::new();
        let (mut g_i, mut g_j, mut g_phi) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
        for ((a0, b0), &w) in p.a.iter().zip(&p.b).zip(&p.w) {
            let a = d.component_mul(a0) * si;
            let b = d.component_mul(b0) * sj;
            let rb = r * b;
            let res = a - rb - pose.translation;
            num += w * res.norm();
            if let Some((g, _)) = &grad {
                let u = unit(&res, a.norm() + rb.norm(), g.smoothing);
                g_i += w * u.dot(&a);
                g_j += -w * u.dot(&rb);
                g_phi += w * u.dot(&(focal_tangent(&a) - r * focal_tangent(&b)));
            }
        }
        let loss = num.value() / (f * p.mass);
        if let Some((g, weight)) = grad {
            let norm = f * p.mass;
            g.scale(p.i, weight * g_i.value() / norm);
            // dF/dσ_j = F.
            g.scale(p.j, weight * (g_j.value() / norm - loss));
            g.focal(weight * (g_phi.value() / norm - loss * df_phi / f));
        }
        Ok(loss)
    }

    fn shape_term(
        &self,
        k: usize,
        params: &RefineParams,
        closed: &ClosedForm,
        grad: Option<(&mut Gradient<'_>, f64)>,
    ) -> f64 {
        let term = &self.shape[k];
        let sim = &closed.shape[k];
        let d = focal_diag(params.log_focal);
        let e = params.log_scales[term.frame].exp();
        let sr = sim.rotation * sim.scale;
        let mut sum = CompensatedSum::new();
        let (mut g_s, mut g_phi) = (CompensatedSum::new(), CompensatedSum::new());
        for (x0, q) in term.predicted.iter().zip(&term.reference) {
            let x = d.component_mul(x0) * e;
            let sx = sr * x;
            let res = sx + sim.translation - q;
            sum += res.norm();
            if let Some((g, _)) = &grad {
                // Shape residuals live in reference units; the similarity scale converts.
                let u = unit(&res, sx.norm() + q.norm(), g.smoothing * sim.scale);
                g_s += u.dot(&sx);
                g_phi += u.dot(&(sr * focal_tangent(&x)));
            }
        }
        let n = term.predicted.len() as f64;
        if let Some((g, weight)) = grad {
            g.scale(term.frame, weight * g_s.value() / n);
            g.focal(weight * g_phi.value() / n);
        }
        sum.value() / n
    }

    fn evaluate_inner(
        &self,
        params: &RefineParams,
        closed: &ClosedForm,
        mut grad: Option<&mut [f64]>,
        smoothing: f64,
    ) -> Result<LossReport> {
        self.check(params)?;
        if closed.poses.len() != self.num_frames || closed.shape.len() != self.shape.len() {
            return Err(Error::InvalidParameter("closed-form state does not belong to this scene".into()));
        }
        let w = self.weights;
        let mut g = grad.as_deref_mut().map(|out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            Gradient { out, smoothing }
        });
        let mut counts = LossCounts::default();

        let mut shape = CompensatedSum::new();
        let ns = self.shape.len().max(1) as f64;
        for k in 0..self.shape.len() {
            shape += self.shape_term(k, params, closed, g.as_mut().map(|g| (g, w.alpha / ns)));
            counts.shape += self.shape[k].predicted.len();
        }

        let mut flow = CompensatedSum::new();
        let nf = self.flow.len().max(1) as f64;
        for p in &self.flow {
            flow += self
                .pair_term(p, params, closed, g.as_mut().map(|g| (g, w.beta / nf)))
                .map_err(|e| e.in_pair(p.i, p.j))?;
            counts.flow += p.w.len();
        }

        let mut track = CompensatedSum::new();
        let nt = self.track.len().max(1) as f64;
        for p in &self.track {
            track += self
                .pair_term(p, params, closed, g.as_mut().map(|g| (g, w.gamma / nt)))
                .map_err(|e| e.in_pair(p.i, p.j))?;
            counts.track += p.w.len();
        }
        counts.mask = self.mask_count;

        // Both halves of the scene share the single refined camera.
        let k = params.apply_intrinsics(&self.intrinsics);
        let consistency = if self.num_frames >= 2 {
            counts.consistency = 1;
            intrinsic_consistency_loss(&k, &k)?
        } else {
            0.0
        };
        let terms = LossTerms {
            shape: shape.value() / ns,
            flow: flow.value() / nf,
            track: track.value() / nt,
            mask: self.mask,
            consistency,
            counts,
        };
        let report = total_loss(&terms, &w)?;
        if let Some(out) = grad {
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { term: "gradient" });
            }
        }
        Ok(report)
    }

    /// Loss with the closed-form quantities held at `closed`.
    pub fn evaluate(&self, params: &RefineParams, closed: &ClosedForm) -> Result<LossReport> {
        self.evaluate_inner(params, closed, None, 0.0)
    }

    /// Loss and its analytic gradient in [`RefineParams::free_parameters`] order, with
    /// the closed-form quantities held at `closed`.
    pub fn gradient(&self, params: &RefineParams, closed: &ClosedForm) -> Result<(LossReport, Vec<f64>)> {
        let mut g = alloc::vec![0.0; self.num_free_parameters()];
        let report = self.evaluate_inner(params, closed, Some(&mut g), 0.0)?;
        Ok((report, g))
    }

    /// Gradient of the loss with every residual norm `‖r‖` replaced by
    /// `√(‖r‖² + smoothing²)`. Where a pair is nearly consistent its exact gradient
    /// is a sign that flips across the optimum; the smoothed one fades out instead.
    pub fn smoothed_gradient(&self, params: &RefineParams, closed: &ClosedForm, smoothing: f64) -> Result<Vec<f64>> {
        let mut g = alloc::vec![0.0; self.num_free_parameters()];
        self.evaluate_inner(params, closed, Some(&mut g), smoothing)?;
        Ok(g)
    }

    /// Weighted mean residual length (meters) over all photometric correspondences.
    pub fn mean_residual(&self, params: &RefineParams, closed: &ClosedForm) -> f64 {
        let d = focal_diag(params.log_focal);
        let mut num = CompensatedSum::new();
        let mut mass = CompensatedSum::new();
        for p in self.flow.iter().chain(&self.track) {
            let (si, sj) = (params.log_scales[p.i].exp(), params.log_scales[p.j].exp());
            let pose = closed.poses[p.i].inverse().compose(&closed.poses[p.j]);
            for ((a0, b0), &w) in p.a.iter().zip(&p.b).zip(&p.w) {
                let res = d.component_mul(a0) * si - pose.apply(&(d.component_mul(b0) * sj));
                num += w * res.norm();
                mass += w;
            }
        }
        if mass.value() > 0.0 {
            num.value() / mass.value()
        } else {
            0.0
        }
    }

    /// Loss with everything closed-form re-solved at `params`.
    pub fn loss(&self, params: &RefineParams) -> Result<(LossReport, ClosedForm)> {
        let closed = self.solve(params)?;
        let report = self.evaluate(params, &closed)?;
        Ok((report, closed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceEntry {
    pub iteration: usize,
    pub step_size: f64,
    pub report: LossReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub depths: Vec<DepthMap>,
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<PoseSE3>,
    pub params: RefineParams,
    /// Accepted states, starting with the initial one.
    pub trace: Vec<TraceEntry>,
}

impl RefineOutcome {
    pub fn report(&self) -> &LossReport {
        &self.trace.last().expect("trace starts with the initial state").report
    }

    /// Refined depths unprojected and placed by the refined poses.
    pub fn cloud_sequence(&self) -> Result<CloudSequence> {
        let clouds: Vec<FrameCloud> =
            self.depths.iter().map(|d| unproject(d, &self.intrinsics)).collect::<Result<_>>()?;
        assemble_global(&clouds, &self.poses, &self.intrinsics)
    }
}

/// Refinement failure, with the last state whose loss was finite when there is one.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("refinement aborted: {error}")]
pub struct RefineError {
    #[source]
    pub error: Error,
    pub last: Option<Box<RefineOutcome>>,
}

fn outcome(inputs: &SceneInputs, params: &RefineParams, closed: &ClosedForm, trace: Vec<TraceEntry>) -> RefineOutcome {
    RefineOutcome {
        depths: inputs.depths.iter().enumerate().map(|(t, d)| params.apply_depth(t, d)).collect(),
        intrinsics: params.apply_intrinsics(&inputs.intrinsics),
        poses: closed.poses.clone(),
        params: params.clone(),
        trace,
    }
}

/// Refines `inputs` starting from `params`. `on_step` sees every accepted state,
/// including the initial one.
pub fn refine_scene_with(
    inputs: &SceneInputs,
    params: &RefineParams,
    weights: &LossWeights,
    mut on_step: impl FnMut(&TraceEntry),
) -> Result<RefineOutcome, RefineError> {
    let bare = |error: Error| RefineError { error, last: None };
    let problem = RefineProblem::new(inputs, *weights).map_err(bare)?;
    let (mut report, mut closed) = problem.loss(params).map_err(bare)?;
    let mut current = params.clone();
    let first = TraceEntry { iteration: 0, step_size: 0.0, report };
    on_step(&first);
    let mut trace = alloc::vec![first];

    for iteration in 1..=params.max_iterations {
        let abort = |error: Error, current: &RefineParams, closed: &ClosedForm, trace: &[TraceEntry]| RefineError {
            error,
            last: Some(Box::new(outcome(inputs, current, closed, trace.to_vec()))),
        };
        let smoothing = problem.mean_residual(&current, &closed);
        let grad = match problem.smoothed_gradient(&current, &closed, smoothing) {
            Ok(g) => g,
            Err(e) => return Err(abort(e, &current, &closed, &trace)),
        };
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let x = current.free_parameters();
        let mut step = params.step_size;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial_x: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
            let trial = current.with_free_parameters(&trial_x);
            match problem.loss(&trial) {
                Ok((r, c)) if r.total <= report.total => {
                    accepted = Some((trial, r, c));
                    break;
                }
                Ok(_) => step *= 0.5,
                Err(e) => return Err(abort(e, &current, &closed, &trace)),
            }
        }
        let Some((next, next_report, next_closed)) = accepted else { break };
        let decrease = report.total - next_report.total;
        current = next;
        report = next_report;
        closed = next_closed;
        let entry = TraceEntry { iteration, step_size: step, report };
        on_step(&entry);
        trace.push(entry);
        if decrease <= params.tolerance * trace[trace.len() - 2].report.total.abs() {
            break;
        }
    }
    Ok(outcome(inputs, &current, &closed, trace))
}

pub fn refine_scene(
    inputs: &SceneInputs,
    params: &RefineParams,
    weights: &LossWeights,
) -> Result<RefineOutcome, RefineError> {
    refine_scene_with(inputs, params, weights, |_| {})
}
